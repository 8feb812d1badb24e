"""Finite atomic Barron representations and Monte-Carlo network sampling.

A representation is a discrete distribution ``rho`` over pairs ``(a, w)``.
It induces the target

    f(x) = E_rho[ a T(w, x) ] = sum_i p_i a_i T(w_i, x)

where ``T`` is the operator image of a single cubic-ReLU neuron.  Drawing
``m`` atoms i.i.d. from ``rho`` and scaling their outer weights by ``1/m``
gives a width-``m`` network whose operator image is an unbiased estimate of
``f``; its population risk decays like ``1/m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _parallel
from .operator import PdeProblem, TwoLayerParams, eval_L_phi, path_norm, population_risk_mc

GRID_POINTS = 10_000


def check_grid(d, total=GRID_POINTS):
    """Tensor grid on ``[0, 1]^d`` with at least ``total`` points."""
    k = max(2, math.ceil(total ** (1.0 / d) - 1e-9))
    axes = np.meshgrid(*([np.linspace(0.0, 1.0, k)] * d), indexing="ij")
    return np.stack([ax.ravel() for ax in axes], axis=1)


class BarronRepresentation:
    """Atoms ``(a_i, w_i)`` with probabilities ``p_i`` under a coefficient field.

    Parameters
    ----------
    a : array of shape (K,)
    W : array of shape (K, d)
    p : array of shape (K,)
        Nonnegative, summing to one.
    coeffs : CoefficientField
    rescale : bool
        If the induced target exceeds 1 in magnitude on the check grid, scale
        every ``a_i`` by ``1 / max|f|`` instead of rejecting.
    """

    def __init__(self, a, W, p, coeffs, rescale=False):
        a = np.asarray(a, dtype=float).reshape(-1)
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W.reshape(-1, coeffs.dim) if coeffs.dim > 1 else W.reshape(-1, 1)
        p = np.asarray(p, dtype=float).reshape(-1)
        if not (a.shape[0] == W.shape[0] == p.shape[0]) or a.shape[0] == 0:
            raise ValueError("a, W and p must describe the same nonzero number of atoms")
        if W.shape[1] != coeffs.dim:
            raise ValueError(f"atoms have dimension {W.shape[1]}, coefficients {coeffs.dim}")
        if np.any(p < 0) or abs(math.fsum(p.tolist()) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must be nonnegative and sum to 1")
        self.a, self.W, self.p, self.coeffs = a, W, p, coeffs
        self.scale = 1.0
        peak = float(np.max(np.abs(self(check_grid(coeffs.dim)))))
        if peak > 1.0 + 1e-12:
            if not rescale:
                raise ValueError(f"induced target reaches |f| = {peak:.6g} > 1 on the check grid")
            self.scale = 1.0 / peak
            self.a = self.a * self.scale

    @property
    def n_atoms(self):
        return self.a.shape[0]

    @property
    def dim(self):
        return self.W.shape[1]

    def mean_network(self):
        """The atoms as one network with outer weights ``p_i a_i``."""
        return TwoLayerParams(self.p * self.a, self.W)

    def __call__(self, X):
        return eval_L_phi(self.mean_network(), np.atleast_2d(np.asarray(X, dtype=float)), self.coeffs)

    def as_problem(self):
        return PdeProblem(self.coeffs, self, rhs_bound=1.0)

    def norm(self):
        return barron_norm(self)


def barron_norm(rep):
    """``(sum_i p_i a_i^2 ||w_i||_1^6)^(1/2)`` for this representation."""
    l1 = np.sum(np.abs(rep.W), axis=1)
    l1_3 = l1 * l1 * l1
    return math.sqrt(_parallel.ordered_sum(rep.p * rep.a * rep.a * l1_3 * l1_3))


def sample_network(rep, m, seed=0):
    """Width-``m`` network from ``m`` i.i.d. atoms with outer weights ``a / m``."""
    if int(m) < 1:
        raise ValueError("width must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.choice(rep.n_atoms, size=int(m), p=rep.p)
    return TwoLayerParams(rep.a[idx] / m, rep.W[idx].copy())


def _cell_seeds(seed, m, s):
    state = np.random.SeedSequence([int(seed), int(m), int(s)]).generate_state(2)
    return int(state[0]), int(state[1])


@dataclass
class ApproximationTable:
    """Rows ``(width, mean_risk, std_err, bound)`` and the log-log slope."""

    widths: np.ndarray
    mean_risk: np.ndarray
    std_err: np.ndarray
    bound: np.ndarray
    slope: float
    risks: list

    def rows(self):
        return list(zip(self.widths.tolist(), self.mean_risk.tolist(), self.std_err.tolist(), self.bound.tolist()))


def loglog_slope(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(y <= 0) or len(x) < 2:
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def approximation_experiment(rep, widths, seeds_per_width=20, num_mc=10_000, seed=0):
    """Population risk of sampled networks against the ``6 M^2 ||f||_B^2 / m`` bound."""
    widths = [int(m) for m in widths]
    if not widths or any(b <= a for a, b in zip(widths, widths[1:])):
        raise ValueError("widths must be nonempty and increasing")
    problem = rep.as_problem()
    M = rep.coeffs.bound if rep.coeffs.bound is not None else 1.0
    fb = barron_norm(rep)
    means, errs, all_risks = [], [], []
    for m in widths:
        risks = []
        for s in range(seeds_per_width):
            net_seed, mc_seed = _cell_seeds(seed, m, s)
            risks.append(population_risk_mc(sample_network(rep, m, net_seed), problem, num_mc, mc_seed)[0])
        r = np.array(risks)
        means.append(math.fsum(risks) / len(risks))
        errs.append(float(np.std(r, ddof=1) / math.sqrt(len(r))) if len(r) > 1 else math.nan)
        all_risks.append(r)
    widths_arr = np.array(widths, dtype=float)
    means = np.array(means)
    return ApproximationTable(
        widths=np.array(widths),
        mean_risk=means,
        std_err=np.array(errs),
        bound=6.0 * M * M * fb * fb / widths_arr,
        slope=loglog_slope(widths_arr, means),
        risks=all_risks,
    )


def event_frequencies(rep, m, n_seeds=200, num_mc=10_000, seed=0):
    """Frequencies of ``R_D < 6 M^2 ||f||_B^2 / m`` and ``path_norm < 2 ||f||_B``."""
    problem = rep.as_problem()
    M = rep.coeffs.bound if rep.coeffs.bound is not None else 1.0
    fb = barron_norm(rep)
    risk_hits = path_hits = 0
    for s in range(n_seeds):
        net_seed, mc_seed = _cell_seeds(seed, m, s)
        theta = sample_network(rep, m, net_seed)
        risk_hits += population_risk_mc(theta, problem, num_mc, mc_seed)[0] < 6.0 * M * M * fb * fb / m
        path_hits += path_norm(theta) < 2.0 * fb
    return risk_hits / n_seeds, path_hits / n_seeds

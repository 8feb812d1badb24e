"""Boundary-enforcing network augmentations and the induced operator transform.

A network ``phi_tilde`` is wrapped as ``phi = h1 * phi_tilde + h2`` so that
the boundary conditions hold for every parameter value.  Training then only
fits the interior equation, which for the wrapped network reads
``L_tilde phi_tilde = f_tilde`` with

    A~ = A h1
    b~_a = b_a h1 + sum_b (A_ab + A_ba) d_b h1
    c~ = sum_ab A_ab d_a d_b h1 + sum_a b_a d_a h1 + c h1
    f~ = f - L h2

Constructions are one-dimensional on an interval ``[a, b]``.  For the mixed
and Neumann cases ``h2`` depends on trainable quantities (the network value
at ``b``, or the scalars ``c1``, ``c2``); that dependence is expressed as a
list of :class:`Shift` terms ``s_j(params) * psi_j(x)`` added to ``L h2`` and
is differentiated exactly during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import operator as op
from .activation import sigma, sigma_p
from .operator import CoefficientField, PdeProblem, TwoLayerParams

INTERIOR_EPS = 1e-6

_RANGES = {
    "dirichlet": ((0.0, 1.0), (0.0, 1.0)),
    "mixed": ((1.0, 2.0), None),
    "neumann": ((1.0, 2.0), (1.0, 2.0)),
}


def _is_integer(p):
    return float(p).is_integer()


def _pw(u, p, k=0):
    """k-th derivative of ``u**p`` in ``u``; non-integer powers use ``|u|**p``."""
    u = np.asarray(u, dtype=float)
    coef = 1.0
    for j in range(k):
        coef *= p - j
    if _is_integer(p):
        q = int(p) - k
        if coef == 0.0 or q < 0:
            return np.zeros_like(u)
        return coef * u**q
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = coef * np.abs(u) ** (p - k)
        return mag * np.sign(u) ** k if k % 2 else mag


@dataclass
class Shift:
    """Parameter-dependent part ``value(theta, extras) * basis(X, coeffs)`` of ``L h2``."""

    value: Callable
    basis: Callable
    grad_theta: Callable | None = None
    extra_index: int | None = None


@dataclass
class BoundaryAugmentation:
    """One of the Dirichlet / mixed / Neumann wrappers (or the identity).

    ``extras`` holds the initial values of trainable scalars (``c1``, ``c2``
    for Neumann); other kinds have none.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    a0: float = 0.0
    b0: float = 0.0
    p_a: float = 1.0
    p_b: float = 1.0
    extras: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("identity", "dirichlet", "mixed", "neumann"):
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "identity":
            return
        if not self.a < self.b:
            raise ValueError("interval endpoints must satisfy a < b")
        ra, rb = _RANGES[self.kind]
        if not ra[0] < self.p_a <= ra[1]:
            raise ValueError(f"p_a={self.p_a} outside ({ra[0]:g}, {ra[1]:g}] for {self.kind}")
        if rb is not None and not rb[0] < self.p_b <= rb[1]:
            raise ValueError(f"p_b={self.p_b} outside ({rb[0]:g}, {rb[1]:g}] for {self.kind}")
        self.extras = np.asarray(self.extras, dtype=float).reshape(-1)
        if self.kind == "neumann" and self.extras.size == 0:
            self.extras = np.zeros(2)

    @property
    def n_extras(self):
        return 2 if self.kind == "neumann" else 0

    @property
    def fractional(self):
        return not (_is_integer(self.p_a) and _is_integer(self.p_b))

    def interior(self):
        """Sampling interval; fractional exponents keep ``INTERIOR_EPS`` off the ends."""
        if self.kind == "identity":
            return 0.0, 1.0
        eps = INTERIOR_EPS if self.fractional else 0.0
        return self.a + eps, self.b - eps

    # h1 and its derivatives --------------------------------------------

    def _exp_factor(self, x, k=0):
        rate = self.p_a / (self.a - self.b)
        return rate**k * np.exp(rate * x)

    def _g(self, x, k=0):
        # exp(p_a x / (a - b)) * (x - a)^p_a and derivatives (Neumann)
        u = x - self.a
        if k == 0:
            return self._exp_factor(x) * _pw(u, self.p_a)
        if k == 1:
            return self._exp_factor(x, 1) * _pw(u, self.p_a) + self._exp_factor(x) * _pw(u, self.p_a, 1)
        return (
            self._exp_factor(x, 2) * _pw(u, self.p_a)
            + 2.0 * self._exp_factor(x, 1) * _pw(u, self.p_a, 1)
            + self._exp_factor(x) * _pw(u, self.p_a, 2)
        )

    def h1(self, x, k=0):
        """k-th derivative (k <= 2) of ``h1`` at 1D points ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return np.ones_like(x) if k == 0 else np.zeros_like(x)
        ua, ub = x - self.a, x - self.b
        if self.kind == "mixed":
            return _pw(ua, self.p_a, k)
        if self.kind == "dirichlet":
            f = [_pw(ua, self.p_a, j) for j in range(k + 1)]
            g = [_pw(ub, self.p_b, j) for j in range(k + 1)]
        else:
            f = [self._g(x, j) for j in range(k + 1)]
            g = [_pw(ub, self.p_b, j) for j in range(k + 1)]
        if k == 0:
            return f[0] * g[0]
        if k == 1:
            return f[1] * g[0] + f[0] * g[1]
        return f[2] * g[0] + 2.0 * f[1] * g[1] + f[0] * g[2]

    # h2 -----------------------------------------------------------------

    def _fixed_h2(self, x, k=0):
        # parameter-independent part of h2 and its derivatives
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return np.zeros_like(x)
        if self.kind == "dirichlet":
            slope = (self.b0 - self.a0) / (self.b - self.a)
            if k == 0:
                return slope * (x - self.a) + self.a0
            return np.full_like(x, slope) if k == 1 else np.zeros_like(x)
        if self.kind == "mixed":
            if k == 0:
                return self.a0 * x + self.b0 - self.a0 * self.b
            return np.full_like(x, self.a0) if k == 1 else np.zeros_like(x)
        curv = (self.b0 - self.a0) / (2.0 * (self.b - self.a))
        if k == 0:
            return curv * (x - self.a) ** 2 + self.a0 * x
        if k == 1:
            return 2.0 * curv * (x - self.a) + self.a0
        return np.full_like(x, 2.0 * curv)

    def h2(self, x, theta=None, extras=None):
        x = np.asarray(x, dtype=float)
        out = self._fixed_h2(x)
        if self.kind == "mixed":
            if theta is None:
                raise ValueError("mixed augmentation needs theta to evaluate h2")
            out = out - (self.b - self.a) ** self.p_a * op.eval_phi(theta, [self.b])
        elif self.kind == "neumann":
            c1, c2 = self._extras(extras)
            out = out + c1 + c2 * self._g(x)
        return out

    def _extras(self, extras):
        if self.n_extras == 0:
            return np.zeros(0)
        e = self.extras if extras is None else np.asarray(extras, dtype=float)
        if e.shape != (self.n_extras,):
            raise ValueError(f"{self.kind} augmentation needs {self.n_extras} extra parameters")
        return e

    def assemble(self, theta, x, extras=None):
        """Value of the wrapped network ``h1 * phi_tilde + h2`` at 1D points."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        phi_t = op.eval_phi(theta, flat.reshape(-1, 1))
        out = self.h1(flat) * phi_t + self.h2(flat, theta, extras)
        return out.reshape(x.shape)

    def L_fixed_h2(self, X, coeffs):
        """``L`` applied to the parameter-independent part of ``h2``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "identity":
            return np.zeros(X.shape[0])
        A, b, c = coeffs.evaluate(X)
        x = X[:, 0]
        return A[:, 0, 0] * self._fixed_h2(x, 2) + b[:, 0] * self._fixed_h2(x, 1) + c * self._fixed_h2(x)

    def shifts(self):
        """Parameter-dependent terms of ``L h2``."""
        if self.kind == "mixed":
            scale = (self.b - self.a) ** self.p_a
            xb = np.array([self.b])

            def value(theta, extras):
                return -scale * op.eval_phi(theta, xb)

            def grad_theta(theta, extras):
                z = theta.W[:, 0] * self.b
                return TwoLayerParams(-scale * sigma(z), (-scale * theta.a * sigma_p(z) * self.b)[:, None])

            return [Shift(value, _basis_constant, grad_theta)]
        if self.kind == "neumann":
            return [
                Shift(lambda th, ex: ex[0], _basis_constant, None, 0),
                Shift(lambda th, ex: ex[1], self._basis_g, None, 1),
            ]
        return []

    def _basis_g(self, X, coeffs):
        A, b, c = coeffs.evaluate(X)
        x = X[:, 0]
        return A[:, 0, 0] * self._g(x, 2) + b[:, 0] * self._g(x, 1) + c * self._g(x)


def _basis_constant(X, coeffs):
    # L applied to the constant function 1
    return coeffs.evaluate(X)[2].copy()


def identity_augmentation():
    return BoundaryAugmentation("identity")


def dirichlet_augmentation(a=0.0, b=1.0, a0=0.0, b0=0.0, p_a=1.0, p_b=1.0):
    """``u(a) = a0, u(b) = b0`` with ``h1 = (x-a)^p_a (x-b)^p_b`` and affine ``h2``."""
    return BoundaryAugmentation("dirichlet", a, b, a0, b0, p_a, p_b)


def mixed_augmentation(a=0.0, b=1.0, a0=0.0, b0=0.0, p_a=2.0):
    """``u'(a) = a0, u(b) = b0`` with ``h1 = (x-a)^p_a``."""
    return BoundaryAugmentation("mixed", a, b, a0, b0, p_a, 1.0)


def neumann_augmentation(a=0.0, b=1.0, a0=0.0, b0=0.0, p_a=2.0, p_b=2.0, c1=0.0, c2=0.0):
    """``u'(a) = a0, u'(b) = b0`` with trainable offsets ``c1``, ``c2``."""
    return BoundaryAugmentation("neumann", a, b, a0, b0, p_a, p_b, np.array([c1, c2], dtype=float))


def make_augmentation(kind, **kwargs):
    builders = {
        "identity": identity_augmentation,
        "none": identity_augmentation,
        "dirichlet": dirichlet_augmentation,
        "mixed": mixed_augmentation,
        "neumann": neumann_augmentation,
    }
    try:
        return builders[kind.lower()](**kwargs)
    except KeyError:
        raise ValueError(f"unknown augmentation kind {kind!r}") from None


class TransformedProblem:
    """Interior problem for ``phi_tilde`` induced by an augmentation."""

    def __init__(self, problem, aug):
        if aug.kind != "identity" and problem.dim != 1:
            raise ValueError("boundary augmentations are one-dimensional")
        self.problem = problem
        self.aug = aug
        base = problem.coeffs
        d = problem.dim

        def grads(X):
            h = aug.h1(X[:, 0])
            g1 = np.zeros((X.shape[0], d))
            g2 = np.zeros((X.shape[0], d, d))
            if aug.kind != "identity":
                g1[:, 0] = aug.h1(X[:, 0], 1)
                g2[:, 0, 0] = aug.h1(X[:, 0], 2)
            if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
                raise ValueError("h1 derivatives are singular at these points; sample the interior")
            return h, g1, g2

        def A_t(X):
            A, _, _ = base.evaluate(X)
            return A * grads(X)[0][:, None, None]

        def b_t(X):
            A, b, _ = base.evaluate(X)
            h, g1, _ = grads(X)
            sym = A + np.swapaxes(A, 1, 2)
            out = b * h[:, None]
            for beta in range(d):
                out = out + sym[:, :, beta] * g1[:, beta, None]
            return out

        def c_t(X):
            A, b, c = base.evaluate(X)
            h, g1, g2 = grads(X)
            out = c * h
            for alpha in range(d):
                out = out + b[:, alpha] * g1[:, alpha]
                for beta in range(d):
                    out = out + A[:, alpha, beta] * g2[:, alpha, beta]
            return out

        self.coeffs = CoefficientField(d, A_t, b_t, c_t, bound=self._bound())

    def _bound(self):
        M = self.problem.coeffs.bound
        if M is None or self.aug.kind == "identity":
            return M
        if self.aug.fractional:
            return None
        lo = min(self.aug.a, 0.0) - 0.05
        hi = max(self.aug.b, 1.0) + 0.05
        x = np.linspace(lo, hi, 20001)
        s0, s1, s2 = (float(np.max(np.abs(self.aug.h1(x, k)))) for k in range(3))
        return 1.02 * M * max(1.0, s0, s0 + 2.0 * s1, s0 + s1 + s2)

    def A(self, X):
        return self.coeffs.evaluate(X)[0]

    def b(self, X):
        return self.coeffs.evaluate(X)[1]

    def c(self, X):
        return self.coeffs.evaluate(X)[2]

    def fixed_targets(self, X):
        """``f - L h2_fixed``: the parameter-independent part of ``f_tilde``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.problem.rhs_values(X) - self.aug.L_fixed_h2(X, self.problem.coeffs)

    def f_tilde(self, X, theta=None, extras=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self.fixed_targets(X)
        extras = self.aug._extras(extras)
        for s in self.aug.shifts():
            out = out - s.value(theta, extras) * s.basis(X, self.problem.coeffs)
        return out

    def as_problem(self):
        """Plain :class:`PdeProblem` when ``f_tilde`` does not depend on parameters."""
        if self.aug.shifts():
            raise ValueError(f"{self.aug.kind} augmentation has a parameter-dependent right-hand side")
        return PdeProblem(self.coeffs, self.fixed_targets, rhs_bound=None)

    def risk_and_grad(self, theta, X, extras=None, targets=None):
        """Risk of the wrapped residual with exact gradients in theta and extras.

        Returns ``(risk, grad_theta, grad_extras, residuals)``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        extras = self.aug._extras(extras)
        if targets is None:
            targets = self.fixed_targets(X)
        shifts = self.aug.shifts()
        bases = [s.basis(X, self.problem.coeffs) for s in shifts]
        shifted = np.array(targets, dtype=float)
        for s, psi in zip(shifts, bases):
            shifted = shifted - s.value(theta, extras) * psi
        risk, grad, e = op.risk_and_grad(theta, X, shifted, self.coeffs)
        n = X.shape[0]
        g_extra = np.zeros(extras.shape)
        for s, psi in zip(shifts, bases):
            weight = op._parallel.ordered_sum(e * psi) / n
            if s.grad_theta is not None:
                gs = s.grad_theta(theta, extras)
                grad = TwoLayerParams(grad.a + weight * gs.a, grad.W + weight * gs.W)
            if s.extra_index is not None:
                g_extra[s.extra_index] += weight
        return risk, grad, g_extra, e

    def risk(self, theta, X, extras=None):
        return self.risk_and_grad(theta, X, extras)[0]


def transform_operator(problem, aug):
    return TransformedProblem(problem, aug)


def lift_time_dependent(problem, kind, T, rhs=None, convention="time_positive"):
    """Treat time as an extra coordinate ``s = t / T`` in ``[0, 1]``.

    ``kind`` is ``"parabolic"`` (``u_t - L_x u = f``) or ``"hyperbolic"``
    (``u_tt - L_x u = f``).  With ``convention="time_positive"`` the lifted
    operator is ``u_t / T - L_x u`` (or ``u_ss / T^2 - L_x u``) and the
    right-hand side is kept; ``"space_positive"`` keeps ``L_x`` and negates
    both the time term and the right-hand side.

    ``rhs(X, t)`` may give a time-dependent source; by default the spatial
    right-hand side is used at every time.  The initial condition is not
    enforced by the lifted problem.
    """
    if T <= 0:
        raise ValueError("final time T must be positive")
    if kind not in ("parabolic", "hyperbolic"):
        raise ValueError("kind must be 'parabolic' or 'hyperbolic'")
    if convention not in ("time_positive", "space_positive"):
        raise ValueError("convention must be 'time_positive' or 'space_positive'")
    base = problem.coeffs
    d = base.dim
    sign = -1.0 if convention == "time_positive" else 1.0
    time_coef = (1.0 / T if kind == "parabolic" else 1.0 / T**2) * (-sign)

    def A_fn(Y):
        A, _, _ = base.evaluate(Y[:, :d])
        out = np.zeros((Y.shape[0], d + 1, d + 1))
        out[:, :d, :d] = sign * A
        if kind == "hyperbolic":
            out[:, d, d] = time_coef
        return out

    def b_fn(Y):
        _, b, _ = base.evaluate(Y[:, :d])
        out = np.zeros((Y.shape[0], d + 1))
        out[:, :d] = sign * b
        if kind == "parabolic":
            out[:, d] = time_coef
        return out

    def c_fn(Y):
        return sign * base.evaluate(Y[:, :d])[2]

    if rhs is None:
        def f_fn(Y):
            return -sign * problem.rhs_values(Y[:, :d])
    else:
        def f_fn(Y):
            return -sign * np.asarray(rhs(Y[:, :d], T * Y[:, d]), dtype=float)

    bound = None if base.bound is None else max(base.bound, abs(time_coef))
    coeffs = CoefficientField(d + 1, A_fn, b_fn, c_fn, bound=bound)
    return PdeProblem(coeffs, f_fn, rhs_bound=problem.rhs_bound)

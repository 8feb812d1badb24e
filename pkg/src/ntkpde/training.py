"""Initialization, gradient descent and training traces.

Gradient descent is the explicit-Euler discretization of the gradient flow
``d theta / dt = -grad R_S(theta)``; a step of size ``lr`` advances the flow
time by ``lr``, which is what the ``t`` column of a trace records.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import ntk
from .operator import SampleSet, TwoLayerParams, path_norm, risk_and_grad

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("step", "t", "risk", "path_norm", "max_da", "max_dw", "lambda_min", "gram_drift")
LR_START = 1e-2
ARMIJO = 0.5
MAX_HALVINGS = 60


class DivergenceError(FloatingPointError):
    """Training blew up (non-finite values or risk far above its start)."""


def default_gamma(m):
    """``1 / (sqrt(m) (log m)^2)``, capped at 1/2 so it stays inside (0, 1) for tiny m."""
    if m < 3:
        return 0.5
    return min(0.5, 1.0 / (math.sqrt(m) * math.log(m) ** 2))


def default_cadence(steps):
    return 1 if steps <= 1000 else math.ceil(steps / 1000)


@dataclass
class TrainConfig:
    """Gradient-descent settings.

    Parameters
    ----------
    width : int
        Final network width ``m``.  With ``asi=True`` half of the neurons are
        drawn and mirrored, so ``width`` must be even.
    gamma : float, optional
        Standard deviation of the initial outer weights; defaults to
        :func:`default_gamma`.
    lr : float, optional
        Step size.  ``None`` selects it by backtracking at the initial point.
    steps : int
        Number of gradient steps.
    asi : bool
        Anti-symmetric initialization (network output identically zero).
    reg_lambda : float
        Weight of the path-norm penalty; 0 trains on the plain risk.
    seed : int
    cadence : int, optional
        Record every ``cadence`` steps; see :func:`default_cadence`.
    gram_cadence : int
        Compute ``G_a`` on recorded steps that are multiples of this value
        (0 disables Gram diagnostics).
    gram_w : bool
        Also track ``lambda_min(G_a + G_w)`` at Gram records.
    """

    width: int
    gamma: float | None = None
    lr: float | None = None
    steps: int = 1000
    asi: bool = False
    reg_lambda: float = 0.0
    seed: int = 0
    cadence: int | None = None
    gram_cadence: int = 0
    gram_w: bool = False
    divergence_factor: float = 1e6

    def __post_init__(self):
        if int(self.width) < 1:
            raise ValueError("width must be >= 1")
        self.width = int(self.width)
        if self.asi and self.width % 2:
            raise ValueError("ASI needs an even width (half the neurons are mirrored)")
        if self.gamma is None:
            self.gamma = default_gamma(self.width)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.lr is not None and not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.reg_lambda < 0:
            raise ValueError("regularization weight must be >= 0")
        if self.cadence is None:
            self.cadence = default_cadence(self.steps)
        if self.cadence < 1 or self.gram_cadence < 0:
            raise ValueError("cadences must be positive")


@dataclass
class TrainingTrace:
    """Per-record training history; ``rows`` follow :data:`TRACE_COLUMNS`."""

    lr: float
    rows: list = field(default_factory=list)
    lambda_min_gw: list = field(default_factory=list)
    extras: np.ndarray | None = None
    theta0: TwoLayerParams | None = None
    gram0: np.ndarray | None = None

    def append(self, **values):
        row = tuple(float(values.get(k, math.nan)) for k in TRACE_COLUMNS)
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError("trace steps must increase")
        self.rows.append(row)

    def column(self, name):
        idx = TRACE_COLUMNS.index(name)
        return np.array([r[idx] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for row in self.rows:
                writer.writerow([str(int(row[0]))] + [format_float(v) for v in row[1:]])


def format_float(v):
    return "%.17g" % v


def init_params(m, d, gamma, seed=0):
    """Gaussian initialization: ``a_k ~ N(0, gamma^2)``, ``w_k ~ N(0, I_d)``."""
    if int(m) < 1:
        raise ValueError("width must be >= 1")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    a = gamma * rng.standard_normal(int(m))
    W = rng.standard_normal((int(m), int(d)))
    return TwoLayerParams(a, W)


def asi_init(theta0):
    """Mirror every neuron with a negated outer weight (doubles the width)."""
    return TwoLayerParams(np.concatenate([theta0.a, -theta0.a]), np.vstack([theta0.W, theta0.W]))


def gd_step(theta, grad, lr):
    if grad.a.shape != theta.a.shape or grad.W.shape != theta.W.shape:
        raise ValueError("gradient shape does not match parameters")
    return TwoLayerParams(theta.a - lr * grad.a, theta.W - lr * grad.W)


def _penalty_parts(P, lam, n):
    if P == 0.0 or lam == 0.0:
        return 0.0, 0.0
    k = lam / math.sqrt(n)
    L = math.log(math.pi * (P + 1.0))
    return k * P * P * L, k * (2.0 * P * L + P * P / (P + 1.0))


def penalty(theta, lam, n):
    """``lam / sqrt(n) * P^2 log(pi (P + 1))`` with ``P`` the path norm."""
    return _penalty_parts(path_norm(theta), lam, n)[0]


def grad_regularizer(theta, lam, n):
    """Gradient of :func:`penalty` (``sign(0) = 0`` at kinks)."""
    if lam < 0:
        raise ValueError("regularization weight must be >= 0")
    _, dP = _penalty_parts(path_norm(theta), lam, n)
    l1 = np.sum(np.abs(theta.W), axis=1)
    ga = dP * np.sign(theta.a) * l1 * l1 * l1
    gW = dP * 3.0 * (np.abs(theta.a) * l1 * l1)[:, None] * np.sign(theta.W)
    return TwoLayerParams(ga, gW)


def regularized_objective(theta, S, problem, lam, n=None):
    """``R_S(theta) + lam / sqrt(n) * P^2 log(pi (P + 1))``."""
    from .operator import empirical_risk

    if lam < 0:
        raise ValueError("regularization weight must be >= 0")
    X = S.points if isinstance(S, SampleSet) else np.atleast_2d(S)
    n = X.shape[0] if n is None else n
    return empirical_risk(theta, X, problem) + penalty(theta, lam, n)


class _Objective:
    """Risk (plus optional penalty) and its gradient over the trainable state."""

    def __init__(self, problem, X, aug, lam):
        self.X = X
        self.lam = lam
        self.n = X.shape[0]
        if aug is None or aug.kind == "identity":
            self.tp = None
            self.coeffs = problem.coeffs
            self.targets = problem.rhs_values(X)
        else:
            from .boundary import TransformedProblem

            self.tp = TransformedProblem(problem, aug)
            self.coeffs = self.tp.coeffs
            self.targets = self.tp.fixed_targets(X)

    def __call__(self, theta, extras):
        if self.tp is None:
            risk, g, e = risk_and_grad(theta, self.X, self.targets, self.coeffs)
            g_extra = np.zeros(0)
        else:
            risk, g, g_extra, e = self.tp.risk_and_grad(theta, self.X, extras, self.targets)
        J = risk
        if self.lam > 0:
            J += penalty(theta, self.lam, self.n)
            gr = grad_regularizer(theta, self.lam, self.n)
            g = TwoLayerParams(g.a + gr.a, g.W + gr.W)
        return J, risk, g, g_extra


def _sq_norm(g, g_extra):
    return float(np.sum(g.a * g.a) + np.sum(g.W * g.W) + np.sum(g_extra * g_extra))


def backtrack_lr(obj, theta, extras, start=LR_START):
    """Halve ``start`` until one step gives sufficient (Armijo) decrease."""
    J0, _, g, ge = obj(theta, extras)
    gnorm2 = _sq_norm(g, ge)
    if J0 == 0.0 or gnorm2 == 0.0:
        return start
    lr = start
    for _ in range(MAX_HALVINGS):
        try:
            J1 = obj(gd_step(theta, g, lr), extras - lr * ge)[0]
        except FloatingPointError:
            J1 = math.inf
        if J1 <= J0 - ARMIJO * lr * gnorm2:
            return lr
        lr *= 0.5
    raise DivergenceError("backtracking found no decreasing step size")


def train(problem, S, config, aug=None, theta0=None, extras0=None):
    """Run gradient descent on the empirical risk (or its regularized form).

    Parameters
    ----------
    problem : PdeProblem
    S : SampleSet or array of shape (n, d)
    config : TrainConfig
    aug : BoundaryAugmentation, optional
        When given the transformed problem is trained; Neumann offsets are
        trained alongside the network.
    theta0 : TwoLayerParams, optional
        Starting point; drawn from ``config`` when omitted.

    Returns
    -------
    theta : TwoLayerParams
    trace : TrainingTrace

    Raises
    ------
    DivergenceError
        If the objective becomes non-finite or exceeds
        ``config.divergence_factor`` times its initial value.
    """
    X = S.points if isinstance(S, SampleSet) else np.atleast_2d(np.asarray(S, dtype=float))
    if X.shape[1] != problem.dim:
        raise ValueError("sample dimension does not match the problem")
    if theta0 is None:
        half = config.width // 2 if config.asi else config.width
        theta0 = init_params(half, problem.dim, config.gamma, config.seed)
        if config.asi:
            theta0 = asi_init(theta0)
    n_extra = 0 if aug is None else aug.n_extras
    extras = np.zeros(n_extra) if extras0 is None else np.asarray(extras0, dtype=float).copy()

    obj = _Objective(problem, X, aug, config.reg_lambda)
    lr = config.lr if config.lr is not None else backtrack_lr(obj, theta0, extras)
    log.info("training m=%d n=%d lr=%.3g steps=%d", theta0.width, X.shape[0], lr, config.steps)

    trace = TrainingTrace(lr=lr, theta0=theta0.copy())
    gram_coeffs = obj.coeffs
    G0 = None
    theta = theta0
    J_init = None
    for step in range(config.steps + 1):
        J, risk, g, ge = obj(theta, extras)
        if J_init is None:
            J_init = J
        if not math.isfinite(J) or (J_init > 0 and J > config.divergence_factor * J_init):
            raise DivergenceError(
                f"objective {J:.3g} at step {step} exceeds {config.divergence_factor:g}x "
                f"its initial value {J_init:.3g} (lr={lr:.3g})"
            )
        if step % config.cadence == 0 or step == config.steps:
            rec = dict(
                step=step,
                t=step * lr,
                risk=risk,
                path_norm=path_norm(theta),
                max_da=float(np.max(np.abs(theta.a - theta0.a))),
                max_dw=float(np.max(np.abs(theta.W - theta0.W))),
            )
            if config.gram_cadence and step % config.gram_cadence == 0:
                G = ntk.gram_a(theta, X, gram_coeffs)
                if G0 is None:
                    G0 = G
                    trace.gram0 = G0
                rec["lambda_min"] = ntk.lambda_min(G)
                rec["gram_drift"] = float(np.linalg.norm(G - G0))
                if config.gram_w:
                    trace.lambda_min_gw.append(
                        (step, ntk.lambda_min(G + ntk.gram_w(theta, X, gram_coeffs)))
                    )
            trace.append(**rec)
        if step == config.steps:
            break
        try:
            theta = gd_step(theta, g, lr)
        except FloatingPointError as exc:
            raise DivergenceError(f"non-finite parameters after step {step + 1} (lr={lr:.3g})") from exc
        extras = extras - lr * ge
    trace.extras = extras
    return theta, trace

"""Two-layer cubic-ReLU networks under a second-order linear operator.

The operator is taken in non-divergence form

    L u = sum_ab A_ab(x) u_ab + sum_a b_a(x) u_a + c(x) u

on the unit cube, and the network is ``phi(x) = sum_k a_k sigma(w_k . x)``
without biases.  Because ``sigma'' = ReLU``, ``L phi`` is again a two-layer
network whose k-th "neuron" is

    T(w_k, x) = w_k' A(x) w_k sigma''(w_k.x) + b(x).w_k sigma'(w_k.x) + c(x) sigma(w_k.x)

and every quantity here (risks, gradients, Gram matrices) is assembled from
``T`` and its parameter gradient ``V = dT/dw``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _parallel
from .activation import sigma, sigma_p, sigma_pp, sigma_ppp
from .expressions import Expression, parse

SYMMETRY_TOL = 1e-12


class CoefficientBoundError(ValueError):
    """A coefficient evaluation broke symmetry or its declared bound."""


class CoefficientField:
    """Coefficients ``A``, ``b``, ``c`` of the operator with declared bound ``M``.

    ``A``, ``b`` and ``c`` are callables taking an ``(n, d)`` array and
    returning arrays of shape ``(n, d, d)``, ``(n, d)`` and ``(n,)``.  Use
    :meth:`from_expressions` to build them from expression strings; the
    expressions are kept so configurations can be written back out.

    Symmetry of ``A`` and the sup-norm bound are checked lazily at every
    evaluation point.  ``bound=None`` disables the bound check.
    """

    def __init__(self, dim, A, b, c, bound=1.0, expressions=None):
        if int(dim) < 1:
            raise ValueError("dimension must be a positive integer")
        if bound is not None and bound < 1:
            raise ValueError("declared bound M must be >= 1")
        self.dim = int(dim)
        self._A = A
        self._b = b
        self._c = c
        self.bound = None if bound is None else float(bound)
        self.expressions = expressions

    @classmethod
    def from_expressions(cls, dim, A, b, c, bound=1.0):
        A_ex = [[parse(v) for v in row] for row in A]
        b_ex = [parse(v) for v in b]
        c_ex = parse(c)
        if len(A_ex) != dim or any(len(row) != dim for row in A_ex) or len(b_ex) != dim:
            raise ValueError(f"coefficient shapes do not match dimension {dim}")
        for ex in [e for row in A_ex for e in row] + b_ex + [c_ex]:
            ex.check_dim(dim)

        def A_fn(X):
            out = np.empty((X.shape[0], dim, dim))
            for i in range(dim):
                for j in range(dim):
                    out[:, i, j] = A_ex[i][j](X)
            return out

        def b_fn(X):
            out = np.empty((X.shape[0], dim))
            for i in range(dim):
                out[:, i] = b_ex[i](X)
            return out

        return cls(dim, A_fn, b_fn, c_ex, bound, expressions=(A_ex, b_ex, c_ex))

    @classmethod
    def from_divergence_form(cls, dim, A, b, c, bound=1.0):
        """Rewrite ``sum (A_ab u_a)_b + b.grad u + c u`` in non-divergence form.

        The first-order coefficient becomes ``b_a + sum_b dA_ab/dx_b``.
        """
        A_ex = [[parse(v) for v in row] for row in A]
        b_hat = []
        for alpha in range(dim):
            node = parse(b[alpha])
            for beta in range(dim):
                d = A_ex[alpha][beta].diff(beta + 1)
                node = Expression(f"({node.source}) + ({d.source})")
            b_hat.append(node)
        return cls.from_expressions(dim, A_ex, b_hat, c, bound)

    @classmethod
    def constant(cls, dim, A=None, b=None, c=0.0, bound=1.0):
        A = np.eye(dim) if A is None else np.asarray(A, dtype=float)
        b = np.zeros(dim) if b is None else np.asarray(b, dtype=float)
        return cls.from_expressions(
            dim, [[float(v) for v in row] for row in A], [float(v) for v in b], float(c), bound
        )

    def evaluate(self, X):
        """Return ``(A, b, c)`` at the rows of ``X`` after validation."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"points have dimension {X.shape[1]}, coefficients {self.dim}")
        n = X.shape[0]
        A = np.broadcast_to(np.asarray(self._A(X), dtype=float), (n, self.dim, self.dim))
        b = np.broadcast_to(np.asarray(self._b(X), dtype=float), (n, self.dim))
        c = np.broadcast_to(np.asarray(self._c(X), dtype=float), (n,))
        if self.dim > 1 and np.max(np.abs(A - np.swapaxes(A, 1, 2))) > SYMMETRY_TOL:
            raise CoefficientBoundError("A(x) is not symmetric")
        if self.bound is not None:
            limit = self.bound * (1 + 1e-12)
            worst = max(np.max(np.abs(A)), np.max(np.abs(b)), np.max(np.abs(c)))
            if not worst <= limit:
                raise CoefficientBoundError(
                    f"coefficient magnitude {worst:.6g} exceeds declared bound M={self.bound:g}"
                )
        return A, b, c


@dataclass
class PdeProblem:
    """``L u = f`` on the unit cube; ``rhs`` maps ``(n, d)`` points to ``(n,)``.

    ``rhs_bound`` enforces ``|f| <= rhs_bound`` at every evaluated point
    (``None`` disables the check, e.g. for transformed problems).
    """

    coeffs: CoefficientField
    rhs: Callable
    rhs_bound: float | None = 1.0

    def __post_init__(self):
        if isinstance(self.rhs, (str, int, float)):
            self.rhs = parse(self.rhs)
        if isinstance(self.rhs, Expression):
            self.rhs.check_dim(self.coeffs.dim)

    @property
    def dim(self):
        return self.coeffs.dim

    def rhs_values(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = np.broadcast_to(np.asarray(self.rhs(X), dtype=float), (X.shape[0],))
        if self.rhs_bound is not None and np.any(np.abs(f) > self.rhs_bound * (1 + 1e-12)):
            raise ValueError(f"right-hand side exceeds |f| <= {self.rhs_bound:g}")
        return np.array(f)


@dataclass
class TwoLayerParams:
    """Outer weights ``a`` (m,) and inner weights ``W`` (m, d); row k is w_k."""

    a: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim == 1:
            self.W = self.W.reshape(-1, 1)
        if self.W.ndim != 2 or self.W.shape[0] != self.a.shape[0]:
            raise ValueError(f"a has {self.a.shape[0]} entries but W has shape {self.W.shape}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.W))):
            raise FloatingPointError("network parameters contain NaN or Inf")

    @property
    def width(self):
        return self.a.shape[0]

    @property
    def dim(self):
        return self.W.shape[1]

    def copy(self):
        return TwoLayerParams(self.a.copy(), self.W.copy())

    def ravel(self):
        return np.concatenate([self.a, self.W.ravel()])

    @classmethod
    def from_flat(cls, vec, width, dim):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:width], vec[width:].reshape(width, dim))

    @classmethod
    def zeros_like(cls, other):
        return cls(np.zeros_like(other.a), np.zeros_like(other.W))


@dataclass
class SampleSet:
    """Fixed collocation points in ``[0, 1]^d`` and the seed that drew them."""

    points: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise ValueError("a sample set needs at least one point")
        if np.any(self.points < 0.0) or np.any(self.points > 1.0):
            raise ValueError("sample points must lie in [0, 1]^d")

    @classmethod
    def uniform(cls, n, dim, seed=0, low=0.0, high=1.0):
        if n < 1:
            raise ValueError("a sample set needs at least one point")
        rng = np.random.default_rng(seed)
        pts = low + (high - low) * rng.random((int(n), int(dim)))
        return cls(pts, seed)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


def _as_points(x, dim):
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    X = X.reshape(1, -1) if single else X
    if X.shape[1] != dim:
        raise ValueError(f"point dimension {X.shape[1]} does not match network dimension {dim}")
    return X, single


def _inner(X, W):
    # (n, m) array of w_k . x_i, accumulated coordinate by coordinate
    z = X[:, 0, None] * W[None, :, 0]
    for alpha in range(1, X.shape[1]):
        z = z + X[:, alpha, None] * W[None, :, alpha]
    return z


def _quad_terms(A, b, W):
    d = W.shape[1]
    Aw = np.zeros((A.shape[0], W.shape[0], d))
    for alpha in range(d):
        for beta in range(d):
            Aw[:, :, alpha] += A[:, alpha, beta, None] * W[None, :, beta]
    quad = Aw[:, :, 0] * W[None, :, 0]
    bw = b[:, 0, None] * W[None, :, 0]
    for alpha in range(1, d):
        quad = quad + Aw[:, :, alpha] * W[None, :, alpha]
        bw = bw + b[:, alpha, None] * W[None, :, alpha]
    return Aw, quad, bw


def operator_features(W, X, coeffs):
    """``T[i, k] = T(w_k, x_i)``, the operator image of neuron k at x_i."""
    W = np.asarray(W, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A, b, c = coeffs.evaluate(X)
    z = _inner(X, W)
    _, quad, bw = _quad_terms(A, b, W)
    return quad * sigma_pp(z) + bw * sigma_p(z) + c[:, None] * sigma(z)


def operator_features_grad(W, X, coeffs):
    """Return ``(T, V)`` with ``V[i, k, :] = dT(w_k, x_i)/dw_k``."""
    W = np.asarray(W, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A, b, c = coeffs.evaluate(X)
    z = _inner(X, W)
    Aw, quad, bw = _quad_terms(A, b, W)
    s0, s1, s2, s3 = sigma(z), sigma_p(z), sigma_pp(z), sigma_ppp(z)
    T = quad * s2 + bw * s1 + c[:, None] * s0
    along_x = quad * s3 + bw * s2 + c[:, None] * s1
    V = (
        2.0 * Aw * s2[:, :, None]
        + along_x[:, :, None] * X[:, None, :]
        + s1[:, :, None] * b[:, None, :]
    )
    return T, V


def eval_phi(theta, x):
    """Network value ``sum_k a_k sigma(w_k . x)`` at one point or at rows of ``x``."""
    X, single = _as_points(x, theta.dim)

    def block(lo, hi):
        return np.add.reduce(theta.a[None, :] * sigma(_inner(X[lo:hi], theta.W)), axis=1)

    out = _parallel.map_rows(block, X.shape[0])
    return float(out[0]) if single else out


def eval_L_phi(theta, x, coeffs):
    """Operator image ``f_theta(x) = (L phi)(x)``."""
    X, single = _as_points(x, theta.dim)
    if coeffs.dim != theta.dim:
        raise ValueError("coefficient dimension does not match network dimension")

    def block(lo, hi):
        T = operator_features(theta.W, X[lo:hi], coeffs)
        return np.add.reduce(theta.a[None, :] * T, axis=1)

    out = _parallel.map_rows(block, X.shape[0])
    return float(out[0]) if single else out


def path_norm(theta):
    """``sum_k |a_k| * ||w_k||_1^3``."""
    l1 = np.sum(np.abs(theta.W), axis=1)
    return _parallel.ordered_sum(np.abs(theta.a) * l1 * l1 * l1)


def _check_problem(theta, X, coeffs):
    if X.shape[0] < 1:
        raise ValueError("empty sample set")
    if X.shape[1] != theta.dim or coeffs.dim != theta.dim:
        raise ValueError(
            f"dimension mismatch: points {X.shape[1]}, network {theta.dim}, coefficients {coeffs.dim}"
        )


def residuals(theta, X, targets, coeffs):
    """``e_i = f_theta(x_i) - targets_i``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_problem(theta, X, coeffs)
    return eval_L_phi(theta, X, coeffs) - np.asarray(targets, dtype=float)


def risk_and_grad(theta, X, targets, coeffs):
    """Empirical risk, its exact gradient and the residual vector.

    ``targets`` are the right-hand-side values at the rows of ``X``.  Sample
    contributions are summed in fixed blocks, in index order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_problem(theta, X, coeffs)
    targets = np.asarray(targets, dtype=float)
    n = X.shape[0]

    def block(lo, hi):
        T, V = operator_features_grad(theta.W, X[lo:hi], coeffs)
        e = np.add.reduce(theta.a[None, :] * T, axis=1) - targets[lo:hi]
        ga = np.add.reduce(e[:, None] * T, axis=0)
        gW = np.add.reduce(e[:, None, None] * V, axis=0)
        return e, ga, gW

    parts = _parallel.map_blocks(block, n)
    e = np.concatenate([p[0] for p in parts])
    ga = _parallel.ordered_sum([p[1] for p in parts]) / n
    gW = _parallel.ordered_sum([p[2] for p in parts]) * theta.a[:, None] / n
    risk = _parallel.ordered_sum(e * e) / (2.0 * n)
    return risk, TwoLayerParams(ga, gW), e


def empirical_risk(theta, S, problem):
    """``(1/2n) sum_i (f_theta(x_i) - f(x_i))^2`` over the sample set."""
    X = S.points if isinstance(S, SampleSet) else np.atleast_2d(S)
    e = residuals(theta, X, problem.rhs_values(X), problem.coeffs)
    return _parallel.ordered_sum(e * e) / (2.0 * X.shape[0])


def grad_risk(theta, S, problem):
    """Exact gradient of :func:`empirical_risk`, shaped like ``theta``."""
    X = S.points if isinstance(S, SampleSet) else np.atleast_2d(S)
    return risk_and_grad(theta, X, problem.rhs_values(X), problem.coeffs)[1]


def population_risk_mc(theta, problem, num_mc, seed=0):
    """Monte-Carlo estimate of ``E_x 1/2 (f_theta(x) - f(x))^2`` and its standard error."""
    if num_mc < 2:
        raise ValueError("num_mc must be at least 2")
    rng = np.random.default_rng(seed)
    X = rng.random((int(num_mc), problem.dim))
    e = residuals(theta, X, problem.rhs_values(X), problem.coeffs)
    vals = 0.5 * e * e
    mean = _parallel.ordered_sum(vals) / num_mc
    dev = vals - mean
    var = _parallel.ordered_sum(dev * dev) / (num_mc - 1)
    return mean, float(np.sqrt(var / num_mc))

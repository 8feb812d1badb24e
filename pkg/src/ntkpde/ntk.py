"""Neural tangent kernel quantities for the operator-applied network.

For samples ``x_i`` the finite-width Gram matrices are

    G_a[i, j] = 1/m sum_k T(w_k, x_i) T(w_k, x_j)
    G_w[i, j] = 1/m sum_k a_k^2 V(w_k, x_i) . V(w_k, x_j)

and ``K_a`` is the infinite-width limit of ``G_a`` (expectation over
``w ~ N(0, I)``), estimated here by Monte Carlo.  With them the squared
gradient norm of the empirical risk is ``m / n^2 * e' (G_a + G_w) e``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _parallel
from .operator import SampleSet, operator_features, operator_features_grad

log = logging.getLogger(__name__)

C1_EXACT = 10395.0  # E|w|^12 for w ~ N(0, 1), i.e. 11!!


@dataclass
class GramDiagnostics:
    G_a: np.ndarray
    G_w: np.ndarray | None = None
    K_a: np.ndarray | None = None
    K_a_stderr: np.ndarray | None = None
    lambda_min_G_a: float | None = None
    lambda_min_K_a: float | None = None
    drift: float | None = None
    lambda_S: float | None = None


def _points(S):
    return S.points if isinstance(S, SampleSet) else np.atleast_2d(np.asarray(S, dtype=float))


def g_a(w, x, xp, coeffs):
    """``T(w, x) * T(w, x')`` for a single inner weight vector ``w``."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    T = operator_features(w, np.vstack([np.ravel(x), np.ravel(xp)]), coeffs)
    return float(T[0, 0] * T[1, 0])


def g_w(a, w, x, xp, coeffs):
    """``a^2 V(w, x) . V(w, x')`` with ``V = dT/dw``."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    _, V = operator_features_grad(w, np.vstack([np.ravel(x), np.ravel(xp)]), coeffs)
    return float(a * a * np.dot(V[0, 0], V[1, 0]))


def _symmetrize(G):
    return 0.5 * (G + G.T)


def gram_a(theta, S, coeffs):
    X = _points(S)
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    T = _parallel.map_rows(lambda lo, hi: operator_features(theta.W, X[lo:hi], coeffs), X.shape[0])
    return _symmetrize(T @ T.T / theta.width)


def gram_w(theta, S, coeffs):
    X = _points(S)
    if X.shape[0] == 0:
        raise ValueError("empty sample set")

    def block(lo, hi):
        _, V = operator_features_grad(theta.W, X[lo:hi], coeffs)
        return (V * np.abs(theta.a)[None, :, None]).reshape(hi - lo, -1)

    U = _parallel.map_rows(block, X.shape[0])
    return _symmetrize(U @ U.T / theta.width)


def kernel_a_mc(S, coeffs, num_mc, seed=0, block=4096):
    """Monte-Carlo estimate of ``K_a`` with entrywise standard errors."""
    if num_mc < 2:
        raise ValueError("num_mc must be at least 2")
    X = _points(S)
    rng = np.random.default_rng(seed)
    Wmc = rng.standard_normal((int(num_mc), X.shape[1]))

    def part(lo, hi):
        T = operator_features(Wmc[lo:hi], X, coeffs)  # (n, draws)
        T2 = T * T
        return np.stack([T @ T.T, T2 @ T2.T])

    sums = _parallel.ordered_sum(_parallel.map_blocks(part, Wmc.shape[0], block))
    N = float(num_mc)
    K = _symmetrize(sums[0] / N)
    second = _symmetrize(sums[1] / N)
    var = np.maximum(second - K * K, 0.0) * N / (N - 1.0)
    return K, np.sqrt(var / N)


def jacobi_eigh(M, tol=1e-14, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ascending eigenvalues and the matching eigenvectors as columns.
    Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol * ||M||_F``.
    """
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if n and np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    norm = float(np.linalg.norm(A))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * norm or norm == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(diff) > 1e150 * abs(apq):
                    t = apq / diff  # theta^2 would overflow
                else:
                    theta = diff / (2.0 * apq)
                    if theta == 0.0:
                        t = 1.0
                    else:
                        t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def lambda_min(M):
    """Smallest eigenvalue of a symmetric matrix."""
    vals, _ = jacobi_eigh(M)
    return float(vals[0])


def drift_monitor(G_t, G_0, lambda_S):
    """Frobenius drift and whether it stays inside ``||G_t - G_0||_F <= lambda_S / 4``."""
    G_t, G_0 = np.asarray(G_t, dtype=float), np.asarray(G_0, dtype=float)
    if G_t.shape != G_0.shape:
        raise ValueError("Gram matrices have different shapes")
    drift = float(np.linalg.norm(G_t - G_0))
    return drift, bool(drift <= 0.25 * lambda_S)


def first_exit_time(times, drifts, lambda_S):
    """Earliest recorded time with drift above ``lambda_S / 4`` (``inf`` if none)."""
    for t, dr in zip(times, drifts):
        if np.isfinite(dr) and dr > 0.25 * lambda_S:
            return float(t)
    return math.inf


def estimate_lambda_S(S, coeffs, num_mc=100_000, seed=0):
    """Working value of ``lambda_min(K_a)`` and its Monte-Carlo error.

    The error is ``||stderr||_F``, which bounds the eigenvalue perturbation
    caused by the entrywise sampling noise.  A warning is logged when the
    estimate is not clearly positive.
    """
    K, se = kernel_a_mc(S, coeffs, num_mc, seed)
    lam = lambda_min(K)
    err = float(np.linalg.norm(se))
    if not lam > 3.0 * err:
        log.warning(
            "estimated lambda_S=%.3g is not above 3x its MC error %.3g; "
            "positive-definiteness of K_a is not supported here", lam, err
        )
    return lam, err, K, se


def estimate_C_d(d, num_mc=1_000_000, seed=0):
    """``E ||w||_1^12`` for ``w ~ N(0, I_d)``; exact for ``d == 1``."""
    if d == 1:
        return C1_EXACT
    vals = _parallel.map_rows(
        lambda lo, hi: np.sum(np.abs(rng_block(seed, lo, hi, d)), axis=1) ** 12, int(num_mc), block=65536
    )
    return _parallel.ordered_sum(vals) / num_mc


def rng_block(seed, lo, hi, d):
    # independent stream per block keeps draws identical for any worker count
    ss = np.random.SeedSequence([int(seed), int(lo)])
    return np.random.default_rng(ss).standard_normal((hi - lo, d))


def diagnostics(theta, S, coeffs, theta0=None, lambda_S=None, with_w=False):
    """Collect the Gram quantities at ``theta`` (and drift against ``theta0``)."""
    G = gram_a(theta, S, coeffs)
    out = GramDiagnostics(G_a=G, lambda_min_G_a=lambda_min(G), lambda_S=lambda_S)
    if with_w:
        out.G_w = gram_w(theta, S, coeffs)
    if theta0 is not None:
        out.drift = float(np.linalg.norm(G - gram_a(theta0, S, coeffs)))
    return out


def concentration_experiment(S, coeffs, widths, n_seeds, K, seed=0, gamma=None):
    """``||G_a(theta^0) - K||_F`` and ``lambda_min(G_a(theta^0))`` per width and seed.

    Seed ``seed + s`` initializes the ``s``-th network at every width.
    Returns rows ``(width, s, lambda_min, gap)`` and per-width means
    ``(width, mean_lambda_min, mean_gap)``.
    """
    from .training import default_gamma, init_params

    X = _points(S)
    rows, summary = [], []
    for m in widths:
        lams, gaps = [], []
        for s in range(n_seeds):
            theta = init_params(m, X.shape[1], gamma or default_gamma(m), seed + s)
            G = gram_a(theta, X, coeffs)
            lams.append(lambda_min(G))
            gaps.append(float(np.linalg.norm(G - K)))
            rows.append((m, s, lams[-1], gaps[-1]))
        summary.append((m, math.fsum(lams) / n_seeds, math.fsum(gaps) / n_seeds))
    return rows, summary

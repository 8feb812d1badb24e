"""Closed-form evaluators for the convergence and generalization bounds.

Every function transcribes one inequality so that experiments can print the
measured quantity next to its theoretical bound.  :class:`BoundReport` pairs
the two.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


def _check_delta(delta, upper=1.0):
    if not 0.0 < delta < upper:
        raise ValueError(f"delta must lie in (0, {upper:g})")


def _log2d(d):
    return math.log(2.0 * d)


def eta(m, d, delta, variant="2m"):
    """``sqrt(2 log(c m (d+1) / delta))`` with ``c = 2`` (``"2m"``) or ``c = 4`` (``"4m"``)."""
    _check_delta(delta)
    c = {"2m": 2.0, "4m": 4.0}[variant]
    return math.sqrt(2.0 * math.log(c * m * (d + 1) / delta))


def init_bound_params(m, d, delta, gamma=None, variant="2m"):
    """High-probability initialization bounds: ``(eta, gamma * eta)``.

    ``eta`` bounds ``max_k max(|a_k / gamma|, ||w_k||_inf)``; the second entry,
    returned only when ``gamma`` is given, bounds ``max_k |a_k|``.
    """
    e = eta(m, d, delta, variant)
    return e, (None if gamma is None else gamma * e)


def initial_risk_bound(gamma, m, M, d, delta):
    """Upper bound on ``R_S(theta^0)`` for a Gaussian initialization."""
    _check_delta(delta)
    L = math.log(4.0 * m * (d + 1) / delta)
    inner = math.sqrt(2.0 * _log2d(d)) + math.sqrt(2.0 * math.log(8.0 / delta))
    return 0.5 * (1.0 + 32.0 * gamma * math.sqrt(m) * M * d**3 * L * L * inner) ** 2


def drift_bound_q(M, d, m, n, delta, lambda_S, risk0):
    """Bound ``q`` on the per-neuron parameter drift during training."""
    _check_delta(delta)
    if lambda_S <= 0:
        raise ValueError("lambda_S must be positive")
    L = math.log(4.0 * m * (d + 1) / delta)
    return 320.0 * M * d**3 * L**1.5 * n * math.sqrt(risk0) / (m * lambda_S)


def required_width_terms(m, n, M, d, delta, lambda_S, risk0, C_d):
    """The three width requirements evaluated at a trial width ``m``."""
    L = math.log(4.0 * m * (d + 1) / delta)
    r = math.sqrt(risk0)
    return (
        512.0 * n**4 * M**4 * C_d / (lambda_S**2 * delta),
        200.0 * math.sqrt(2.0) * M * d**3 * n * L * r / lambda_S,
        2.0**23 * M**3 * d**9 * n**2 * L**4 * r / lambda_S**2,
    )


def required_width(n, M, d, delta, lambda_S, risk0, C_d, max_iter=200):
    """Smallest width satisfying the over-parametrization condition.

    Two of the three terms grow with ``log m``, so the condition is solved as
    the fixed point ``m = max(terms(m))``, reached by iterating from the first
    (``m``-free) term.  The iteration is monotone and converges because the
    right-hand side grows only logarithmically.
    """
    _check_delta(delta)
    if lambda_S <= 0:
        raise ValueError("lambda_S must be positive")
    if risk0 < 0 or C_d <= 0:
        raise ValueError("risk0 must be >= 0 and C_d > 0")
    m = required_width_terms(1.0, n, M, d, delta, lambda_S, risk0, C_d)[0]
    for _ in range(max_iter):
        nxt = max(required_width_terms(m, n, M, d, delta, lambda_S, risk0, C_d))
        if nxt <= m * (1.0 + 1e-15):
            return max(m, nxt)
        m = nxt
    return m


def convergence_bound(t, m, n, lambda_hat, risk0):
    """``exp(-m lambda t / n) R_S(0)``, the linear-convergence envelope."""
    return math.exp(-m * lambda_hat * t / n) * risk0


def rademacher_bound(Q, M, d, n):
    """Rademacher complexity of operator images of networks with path norm ``<= Q``."""
    return 4.0 * M * Q * d * d * math.sqrt(2.0 * _log2d(d)) / math.sqrt(n)


def _log_third(delta, reading):
    if reading == "grouped":
        arg = 1.0 / (3.0 * delta)
    elif reading == "literal":
        arg = delta / 3.0
    else:
        raise ValueError("reading must be 'grouped' or 'literal'")
    if arg <= 1.0:
        raise ValueError(f"log term is not positive for delta={delta:g} under the {reading!r} reading")
    return math.log(arg)


def posterior_gap_bound(path_norm, M, d, n, delta, reading="grouped"):
    """A posteriori bound on ``|R_D(theta) - R_S(theta)|`` in terms of the path norm.

    ``reading="grouped"`` interprets the confidence term as
    ``sqrt(2 log(1 / (3 delta)))`` and needs ``delta < 1/3``;
    ``"literal"`` uses ``log(delta / 3)``, which is never positive and
    therefore always raises.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_delta(delta)
    P1 = path_norm + 1.0
    inner = (
        14.0 * d * d * math.sqrt(2.0 * _log2d(d))
        + math.log(math.pi * P1)
        + math.sqrt(2.0 * _log_third(delta, reading))
    )
    return P1 * P1 / math.sqrt(n) * 2.0 * M * M * inner


def admissible_lambda(M, d, delta):
    """Smallest regularization weight covered by the a priori bound."""
    _check_delta(delta)
    return 4.0 * M * M * (2.0 + 14.0 * d * d * math.sqrt(2.0 * _log2d(d)) + math.sqrt(2.0 * math.log(2.0 / (3.0 * delta))))


def prior_bound(barron_norm, m, n, M, d, lam, delta, form="display"):
    """A priori bound on the population risk of the regularized minimizer.

    ``form="display"`` uses ``sqrt(log 2d)`` and ``sqrt(log(2/(3 delta)))``
    inside the braces; ``form="proof"`` uses ``sqrt(2 log 2d)`` and
    ``sqrt(2 log(2/(3 delta)))``, which is what the derivation produces and
    is never smaller.  A warning is issued when ``lam`` is below
    :func:`admissible_lambda`.
    """
    _check_delta(delta)
    if lam < admissible_lambda(M, d, delta):
        warnings.warn(
            f"lambda={lam:g} is below the admissible minimum {admissible_lambda(M, d, delta):.6g}",
            RuntimeWarning,
            stacklevel=2,
        )
    k = {"display": 1.0, "proof": 2.0}[form]
    B = barron_norm
    braces = (
        math.log(math.pi * (2.0 * B + 1.0))
        + 14.0 * d * d * math.sqrt(k * _log2d(d))
        + math.sqrt(k * math.log(2.0 / (3.0 * delta)))
    )
    return 6.0 * M * M * B * B / m + (B * B + 1.0) / math.sqrt(n) * (4.0 * lam + 16.0 * M * M) * braces


def approximation_bound(barron_norm, m, M):
    """``6 M^2 ||f||_B^2 / m``."""
    return 6.0 * M * M * barron_norm * barron_norm / m


@dataclass
class BoundReport:
    """A bound value with the inputs that produced it and an optional measurement."""

    name: str
    value: float
    inputs: dict = field(default_factory=dict)
    measured: float | None = None
    note: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"bound {self.name} evaluated to {self.value!r}")

    @property
    def satisfied(self):
        if self.measured is None:
            return None
        return bool(self.measured <= self.value)

    def to_text(self):
        args = ", ".join(f"{k}={_fmt(v)}" for k, v in self.inputs.items())
        line = f"{self.name}: bound={_fmt(self.value)}"
        if self.measured is not None:
            line += f" measured={_fmt(self.measured)} satisfied={self.satisfied}"
        line += f" [{args}]"
        if self.note:
            line += f" ({self.note})"
        return line


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


REPORT_COLUMNS = ("name", "bound", "measured", "satisfied", "inputs")


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow([
                r.name,
                _fmt(float(r.value)),
                "" if r.measured is None else _fmt(float(r.measured)),
                "" if r.satisfied is None else str(r.satisfied).lower(),
                json.dumps(r.inputs, sort_keys=True),
            ])


def write_reports_text(path, reports, header=""):
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        for r in reports:
            fh.write(r.to_text() + "\n")

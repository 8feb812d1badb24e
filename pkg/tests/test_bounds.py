import csv
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntkpde import bounds
from ntkpde.operator import SampleSet, empirical_risk
from ntkpde.training import init_params

SQ2L2 = math.sqrt(2 * math.log(2))


# independent transcriptions, written term by term from the displays --------

def ref_required_terms(m, n, M, d, delta, lam, r0, C):
    lg = np.log(4 * m * (d + 1) / delta)
    return [512 * n**4 * M**4 * C / (lam**2 * delta),
            200 * np.sqrt(2) * M * d**3 * n * lg * np.sqrt(r0) / lam,
            2**23 * M**3 * d**9 * n**2 * lg**4 * np.sqrt(r0) / lam**2]


def ref_q(M, d, m, n, delta, lam, r0):
    return 320 * M * d**3 * np.log(4 * m * (d + 1) / delta) ** 1.5 * n * np.sqrt(r0) / (m * lam)


def ref_init_risk(g, m, M, d, delta):
    s = np.sqrt(2 * np.log(2 * d)) + np.sqrt(2 * np.log(8 / delta))
    return (1 + 32 * g * np.sqrt(m) * M * d**3 * np.log(4 * m * (d + 1) / delta) ** 2 * s) ** 2 / 2


def ref_posterior(P, M, d, n, delta):
    return (P + 1) ** 2 / np.sqrt(n) * 2 * M**2 * (
        14 * d**2 * np.sqrt(2 * np.log(2 * d)) + np.log(np.pi * (P + 1)) + np.sqrt(2 * np.log(1 / (3 * delta))))


def ref_prior(B, m, n, M, d, lam, delta):
    brace = np.log(np.pi * (2 * B + 1)) + 14 * d**2 * np.sqrt(np.log(2 * d)) + np.sqrt(np.log(2 / (3 * delta)))
    return 6 * M**2 * B**2 / m + (B**2 + 1) / np.sqrt(n) * (4 * lam + 16 * M**2) * brace


tuples = st.tuples(
    st.integers(1, 10**6), st.integers(1, 10**4), st.floats(1, 10), st.integers(1, 5),
    st.floats(0.01, 0.33), st.floats(1e-3, 10), st.floats(0, 1), st.floats(0, 50),
)


@given(tuples)
def test_transcriptions(args):
    m, n, M, d, delta, lam, r0, P = args
    np.testing.assert_allclose(bounds.required_width_terms(m, n, M, d, delta, lam, r0, 10395.0),
                               ref_required_terms(m, n, M, d, delta, lam, r0, 10395.0), rtol=1e-12)
    assert bounds.drift_bound_q(M, d, m, n, delta, lam, r0) == pytest.approx(ref_q(M, d, m, n, delta, lam, r0), rel=1e-12)
    assert bounds.initial_risk_bound(lam / 20, m, M, d, delta) == pytest.approx(
        ref_init_risk(lam / 20, m, M, d, delta), rel=1e-12)
    assert bounds.posterior_gap_bound(P, M, d, n, delta) == pytest.approx(ref_posterior(P, M, d, n, delta), rel=1e-12)
    big = bounds.admissible_lambda(M, d, delta) + lam
    assert bounds.prior_bound(P, m, n, M, d, big, delta) == pytest.approx(ref_prior(P, m, n, M, d, big, delta), rel=1e-12)
    assert bounds.rademacher_bound(P, M, d, n) == pytest.approx(4 * M * P * d**2 * np.sqrt(2 * np.log(2 * d)) / np.sqrt(n))


@given(tuples)
def test_monotone_in_n_and_m(args):
    m, n, M, d, delta, lam, r0, P = args
    assert bounds.posterior_gap_bound(P, M, d, 2 * n, delta) <= bounds.posterior_gap_bound(P, M, d, n, delta)
    assert bounds.rademacher_bound(P, M, d, 2 * n) <= bounds.rademacher_bound(P, M, d, n)
    big = bounds.admissible_lambda(M, d, delta) + lam
    assert bounds.prior_bound(P, m, 2 * n, M, d, big, delta) <= bounds.prior_bound(P, m, n, M, d, big, delta)
    assert bounds.prior_bound(P, 2 * m, n, M, d, big, delta) <= bounds.prior_bound(P, m, n, M, d, big, delta)
    if r0 > 0:
        assert bounds.drift_bound_q(M, d, 2 * m, n, delta, lam, r0) < bounds.drift_bound_q(M, d, m, n, delta, lam, r0)
    assert bounds.approximation_bound(P, 2 * m, M) <= bounds.approximation_bound(P, m, M)


# required width -----------------------------------------------------------

def test_required_width_example():
    assert bounds.required_width(1, 1, 1, 0.5, 1.0, 0.0, 10395.0) == pytest.approx(10_644_480, rel=1e-15)


def test_required_width_scaling():
    t1 = bounds.required_width_terms(100, 1, 1, 1, 0.5, 1.0, 0.2, 10395.0)
    t4 = bounds.required_width_terms(100, 4, 1, 1, 0.5, 1.0, 0.2, 10395.0)
    assert t4[0] == pytest.approx(256 * t1[0], rel=1e-15)
    t0 = bounds.required_width_terms(100, 3, 1, 1, 0.5, 1.0, 0.0, 10395.0)
    assert t0[1] == 0.0 and t0[2] == 0.0


def test_required_width_is_fixed_point():
    args = (5, 1.0, 1, 0.1, 0.05, 0.5, 10395.0)
    m = bounds.required_width(*args)
    terms = bounds.required_width_terms(m, *args)
    assert m >= max(terms) * (1 - 1e-12)
    assert m <= max(terms) * (1 + 1e-12)
    with pytest.raises(ValueError):
        bounds.required_width(5, 1.0, 1, 0.1, 0.0, 0.5, 10395.0)


# initialization ----------------------------------------------------------

def test_eta():
    # log(2 * 1 * 2 / delta) = 2 at delta = 4 / e^2
    assert bounds.eta(1, 1, 4 / math.e**2) == pytest.approx(2.0, rel=1e-15)
    assert bounds.eta(10, 1, 0.1) < bounds.eta(100, 1, 0.1)
    assert bounds.eta(10, 2, 0.999) < bounds.eta(10, 2, 0.5)
    assert bounds.eta(10, 2, 0.5, "4m") > bounds.eta(10, 2, 0.5, "2m")
    e, ab = bounds.init_bound_params(10, 2, 0.5, gamma=0.1)
    assert ab == pytest.approx(0.1 * e)


def test_initial_risk_bound():
    assert bounds.initial_risk_bound(0.0, 100, 1, 1, 0.1) == 0.5
    base = bounds.initial_risk_bound(0.01, 100, 1.0, 1, 0.1)
    for kw in (dict(gamma=0.02), dict(m=200), dict(M=2.0), dict(d=2)):
        args = dict(gamma=0.01, m=100, M=1.0, d=1, delta=0.1) | kw
        assert bounds.initial_risk_bound(**args) > base


def test_initial_risk_bound_holds_empirically(reference_rep):
    problem = reference_rep.as_problem()
    S = SampleSet.uniform(5, 1, seed=0)
    bound = bounds.initial_risk_bound(0.01, 100, 1.0, 1, 0.1)
    risks = [empirical_risk(init_params(100, 1, 0.01, seed=s), S, problem) for s in range(50)]
    assert max(risks) < bound


# drift, Rademacher, generalization -------------------------------------------

def test_drift_q():
    assert bounds.drift_bound_q(1, 1, 100, 5, 0.1, 0.3, 0.0) == 0.0
    L = math.log(4 * 100 * 2 / 0.1)
    assert bounds.drift_bound_q(1, 1, 100, 5, 0.1, 0.3, 0.04) == pytest.approx(320 * L**1.5 * 5 * 0.2 / (100 * 0.3))
    with pytest.raises(ValueError):
        bounds.drift_bound_q(1, 1, 100, 5, 0.1, 0.0, 0.04)


def test_rademacher_examples():
    assert bounds.rademacher_bound(0, 1, 1, 4) == 0.0
    assert bounds.rademacher_bound(1, 1, 1, 4) == pytest.approx(2 * SQ2L2, rel=1e-15)
    assert bounds.rademacher_bound(1, 1, 1, 4) == pytest.approx(2.3548, abs=1e-4)
    assert bounds.rademacher_bound(3, 2, 1, 4) == pytest.approx(6 * bounds.rademacher_bound(1, 1, 1, 4))


def test_posterior_examples():
    v = bounds.posterior_gap_bound(0.0, 1, 1, 100, 0.1)
    hand = 0.1 * 2 * (14 * SQ2L2 + math.log(math.pi) + math.sqrt(2 * math.log(10 / 3)))
    assert v == pytest.approx(hand, rel=1e-14)
    assert v == pytest.approx(3.8365, abs=1e-3)  # quoted to four decimals as 3.8365; exact value 3.83605
    assert bounds.posterior_gap_bound(1.0, 1, 1, 100, 0.1) > v
    assert bounds.posterior_gap_bound(0.0, 1, 1, 400, 0.1) == pytest.approx(v / 2)
    with pytest.raises(ValueError):
        bounds.posterior_gap_bound(0.0, 1, 1, 100, 0.4)
    with pytest.raises(ValueError):
        bounds.posterior_gap_bound(0.0, 1, 1, 100, 0.1, reading="literal")


def test_admissible_lambda():
    assert bounds.admissible_lambda(1, 1, 0.1) == pytest.approx(
        4 * (2 + 14 * SQ2L2 + math.sqrt(2 * math.log(20 / 3))), rel=1e-15)
    assert bounds.admissible_lambda(1, 1, 0.1) == pytest.approx(81.7265, abs=1e-4)


def test_prior_examples():
    lam = bounds.admissible_lambda(1, 1, 0.1)
    # hand computation factor by factor at B=1, m=100, n=1e4
    first = 6 / 100
    second = 2 / 100 * (4 * lam + 16) * (math.log(3 * math.pi) + 14 * math.sqrt(math.log(2)) + math.sqrt(math.log(20 / 3)))
    assert bounds.prior_bound(1.0, 100, 10**4, 1, 1, lam, 0.1) == pytest.approx(first + second, rel=1e-14)
    assert bounds.prior_bound(1.0, 100, 1e30, 1, 1, lam, 0.1) == pytest.approx(0.06, rel=1e-8)
    b1 = bounds.prior_bound(1.0, 100, 10**4, 1, 1, 2 * lam, 0.1) - bounds.prior_bound(1.0, 100, 10**4, 1, 1, lam, 0.1)
    b2 = bounds.prior_bound(1.0, 100, 10**4, 1, 1, 3 * lam, 0.1) - bounds.prior_bound(1.0, 100, 10**4, 1, 1, 2 * lam, 0.1)
    assert b1 == pytest.approx(b2, rel=1e-12)
    assert bounds.prior_bound(1.0, 100, 100, 1, 1, lam, 0.1, form="proof") > bounds.prior_bound(1.0, 100, 100, 1, 1, lam, 0.1)


def test_prior_warns_below_admissible():
    with pytest.warns(RuntimeWarning):
        bounds.prior_bound(1.0, 100, 100, 1, 1, 1.0, 0.1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bounds.prior_bound(1.0, 100, 100, 1, 1, 100.0, 0.1)


def test_convergence_bound():
    assert bounds.convergence_bound(0.0, 10, 5, 1.0, 0.3) == 0.3
    assert bounds.convergence_bound(1.0, 10, 5, 1.0, 0.3) == pytest.approx(0.3 * math.exp(-2))


# reports -----------------------------------------------------------------

def test_report_io(tmp_path):
    reps = [bounds.BoundReport("a", 1.5, {"m": 3}, measured=0.5),
            bounds.BoundReport("b", 0.1, {"n": 2}, measured=0.2, note="loose"),
            bounds.BoundReport("c", 2.0)]
    assert [r.satisfied for r in reps] == [True, False, None]
    bounds.write_reports_csv(tmp_path / "r.csv", reps)
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == bounds.REPORT_COLUMNS
    assert rows[1][:4] == ["a", "1.5", "0.5", "true"] and json.loads(rows[1][4]) == {"m": 3}
    assert rows[3][2:4] == ["", ""]
    bounds.write_reports_text(tmp_path / "r.txt", reps, header="head")
    text = (tmp_path / "r.txt").read_text().splitlines()
    assert text[0] == "head" and "satisfied=False" in text[2] and "(loose)" in text[2]
    with pytest.raises(ValueError):
        bounds.BoundReport("bad", math.inf)
    with pytest.raises(ValueError):
        bounds.BoundReport("bad", -1.0)


def test_delta_validation():
    for f in (lambda: bounds.eta(1, 1, 0.0), lambda: bounds.eta(1, 1, 1.0),
              lambda: bounds.admissible_lambda(1, 1, 1.5)):
        with pytest.raises(ValueError):
            f()

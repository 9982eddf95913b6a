import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exitgame import load
from exitgame.verifier import (Candidate, check_cond_low, check_subsolution, check_supersolution, dminus, dplus,
                               grid_samples, subsol_candidate)


@pytest.fixture(scope="module")
def reach_spec():
    return load("reachable_1d").spec


def test_affine_candidate_derivative(reach_spec):
    c = Candidate(lambda x: 0.5 + 0.2 * x[:, 0])
    e = dplus(c, [1.0], [1.0], reach_spec)
    assert e.status == "finite"
    # the probe set also tilts f by +-eps, so the sup is 0.2 (1 + eps) on each rung
    assert e.quotients == pytest.approx([0.2 * (1 + r) for r in e.rungs], rel=1e-6)
    assert e.value == pytest.approx(0.2, rel=1e-3)
    assert dminus(c, [1.0], [1.0], reach_spec).value == pytest.approx(0.2, rel=1e-3)


def test_lower_candidate_is_flat_away_from_the_band():
    spec = load("forced_lifeline_1d").spec
    e = dplus(subsol_candidate(spec, 0.3), [0.5], [1.0], spec)
    assert e.value == 0.0 and e.status == "finite"


def test_minus_infinity_sentinel():
    spec = load("drift_counter_1d").spec
    e = dplus(subsol_candidate(spec, 0.1), [0.9], [-1.0], spec)
    assert e.status == "-inf" and e.value == -math.inf


def test_no_admissible_direction(reach_spec):
    e = dplus(Candidate(lambda x: x[:, 0] / 2), [0.0], [-1.0], reach_spec)
    assert e.status == "no-admissible" and not e.admissible


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(-1.0, 1.0))
def test_upper_derivative_dominates_lower(reach_spec, x, f):
    c = Candidate(lambda y: 1.0 - np.exp(-np.abs(y[:, 0] - 1.0)))
    up, lo = dplus(c, [x], [f], reach_spec), dminus(c, [x], [f], reach_spec)
    if up.admissible and lo.admissible:
        assert up.value >= lo.value - 1e-9


def test_constant_candidates_fail_on_the_boundary():
    spec = load("forced_lifeline_1d").spec
    X = np.linspace(0.05, 0.95, 10)[:, None]
    one = check_subsolution(Candidate(lambda x: np.ones(len(x)), "one"), spec, X)
    assert not one.passed and one.boundary["mismatches"][0]["set"] == "M1"
    zero = check_supersolution(Candidate(lambda x: np.zeros(len(x)), "zero"), spec, X)
    assert not zero.passed and zero.boundary["mismatches"][0]["set"] == "M2"


def test_time_to_go_satisfies_the_interior_inequalities(reach_spec):
    # 1 - exp(-x) solves the equation inside but is not 1 on the lifeline at x = 2
    c = Candidate(lambda x: 1.0 - np.exp(-x[:, 0]), "time-to-go")
    X = np.linspace(0.02, 1.98, 50)[:, None]
    for rep in (check_subsolution(c, reach_spec, X), check_supersolution(c, reach_spec, X)):
        assert not rep.offenders and rep.semicontinuity["passed"]
        assert not rep.passed
        assert [m["set"] for m in rep.boundary["mismatches"]] == ["M2"]


def test_too_steep_candidate_is_not_a_subsolution(reach_spec):
    # u = 1 - exp(-2x): for p = -1, d+u - (u - 1) = -exp(-2x) < 0
    c = Candidate(lambda x: 1.0 - np.exp(-2 * x[:, 0]), "steep")
    rep = check_subsolution(c, reach_spec, np.linspace(0.1, 1.5, 8)[:, None])
    assert not rep.passed and rep.worst_margin < -1e-3
    assert rep.offenders[0]["x"] == pytest.approx([0.1]) and rep.offenders[0]["p"] == [-1.0]


def test_cond_low_fixtures():
    spec = load("time_optimal_1d").spec
    assert check_cond_low(spec, 0.1, np.linspace(0.02, 1.98, 99)[:, None]).passed
    cfg = load("drift_counter_1d")
    rep = check_cond_low(cfg.spec, 0.1, grid_samples(cfg.grid, cfg.spec))
    assert not rep.passed
    w = rep.offenders[0]
    assert w["x0"] == pytest.approx([0.9]) and w["p"] == [-1.0] and w["margin"] == -math.inf


def test_report_text_is_json(reach_spec):
    import json
    rep = check_subsolution(subsol_candidate(reach_spec, 0.1), reach_spec, np.array([[0.5], [1.0]]))
    d = json.loads(rep.to_text())
    assert d["kind"] == "subsolution" and "note" in d

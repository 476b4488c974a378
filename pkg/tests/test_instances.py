import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend import instances
from shared.models import CountProfile, LogRoundParams, PolyRoundParams

EPS = 0.02
LOG_PARAMS = LogRoundParams(L=8, ell_prime=4, epsilon=EPS, k=200)
POLY_PARAMS = PolyRoundParams(r=4, ell_prime=2, delta=0.4, alpha=1.0 / 24.0, epsilon=EPS)

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def test_gamma_anchors():
    assert instances.gamma_fn(0.0, EPS) == 0.0
    assert instances.gamma_fn(EPS / 2, EPS) == pytest.approx(-math.expm1(-EPS / 2), abs=1e-15)
    # linear continuation: 1 - e^{-ε}(1 - x + ε)
    assert instances.gamma_fn(0.5, EPS) == pytest.approx(1.0 - math.exp(-EPS) * (1.0 - 0.5 + EPS), abs=1e-14)


@pytest.mark.parametrize("x", [-0.1, 1.5])
def test_gamma_rejects_out_of_domain(x):
    with pytest.raises(ValueError):
        instances.gamma_fn(x, EPS)


def test_g_on_unit_vector_is_capped():
    assert instances.g_hard(np.array([1.0, 0.0, 0.0, 0.0]), EPS, ell_prime=4) == pytest.approx(1.0 - EPS, abs=1e-15)
    with pytest.raises(ValueError):
        instances.g_hard(np.array([1.0, 0.0]), EPS, ell_prime=4)


@settings(max_examples=200, deadline=None)
@given(x_next=unit, offset=st.floats(min_value=-1.0, max_value=1.0))
def test_h_pair_symmetric_region(x_next, offset):
    x = 2.0 * x_next + offset * EPS
    if x < 0:
        return
    expected = -math.expm1(-0.5 * (x + x_next))
    assert instances.h_pair(x, x_next, EPS) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(x_next=unit)
def test_h_pair_branches_meet_at_boundaries(x_next):
    above = 2.0 * x_next + EPS
    below = 2.0 * x_next - EPS
    assert instances.h_pair_branch(above, x_next, EPS, instances.ABOVE) == pytest.approx(
        instances.h_pair_branch(above, x_next, EPS, instances.SYMMETRIC), abs=1e-12)
    if below >= 0:
        assert instances.h_pair_branch(below, x_next, EPS, instances.BELOW) == pytest.approx(
            instances.h_pair_branch(below, x_next, EPS, instances.SYMMETRIC), abs=1e-12)


def test_h_pair_rejects_negative_input():
    with pytest.raises(ValueError):
        instances.h_pair(-0.1, 0.2, EPS)


def test_gain_bound_side_condition():
    with pytest.raises(ValueError):
        instances.gain_bound(0.2, 0.1, EPS)
    assert instances.h_pair(1.0, 0.1, EPS) <= instances.gain_bound(1.0, 0.1, EPS) + 1e-12


@settings(max_examples=300, deadline=None)
@given(x=st.floats(min_value=0.0, max_value=50.0))
def test_h_poly_linear_upper_bound(x):
    alpha = 1.0 / 24.0
    assert instances.h_poly(x, alpha, EPS) <= 4.0 * alpha * x + 1e-12
    assert 0.0 <= instances.h_poly_derivative(x, alpha, EPS) <= 4.0 * alpha


def test_h_poly_knots():
    alpha = 1.0 / 24.0
    assert instances.h_poly(EPS, alpha, EPS) == 0.0
    assert instances.h_poly(2.0 + EPS, alpha, EPS) == pytest.approx(4.0 * alpha, abs=1e-15)
    assert instances.h_poly(3.0 + EPS, alpha, EPS) == pytest.approx(8.0 * alpha, abs=1e-15)
    with pytest.raises(ValueError, match=r"α out of range"):
        instances.h_poly(1.0, 0.2, EPS)


def test_q_poly_checks_dimension():
    with pytest.raises(ValueError):
        instances.q_poly(np.zeros(3), POLY_PARAMS)
    assert instances.q_poly(np.zeros(4), POLY_PARAMS) == 0.0


def test_log_round_cap_on_single_block():
    profile = CountProfile(x=np.zeros(8), y=np.array([1.0, 0.0, 0.0, 0.0]))
    assert instances.f_log_round(profile, LOG_PARAMS) == pytest.approx(1.0 - EPS, abs=1e-15)


def test_log_round_rejects_wrong_dimensions():
    with pytest.raises(ValueError):
        instances.f_log_round(CountProfile(x=np.zeros(3), y=np.zeros(4)), LOG_PARAMS)


@settings(max_examples=200, deadline=None)
@given(x=st.lists(unit, min_size=8, max_size=8), y=st.lists(st.floats(0.0, EPS), min_size=4, max_size=4))
def test_full_knowledge_answer_matches_log_round(x, y):
    profile = CountProfile(x=np.array(x), y=np.array(y))
    assert instances.symmetric_answer_log(profile, 8, LOG_PARAMS) == pytest.approx(
        instances.f_log_round(profile, LOG_PARAMS), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(x=st.lists(unit, min_size=4, max_size=4), y=st.lists(st.floats(0.0, EPS), min_size=2, max_size=2))
def test_full_knowledge_answer_matches_poly_round(x, y):
    profile = CountProfile(x=np.array(x), y=np.array(y))
    assert instances.symmetric_answer_poly(profile, 4, POLY_PARAMS) == pytest.approx(
        instances.f_poly_round(profile, POLY_PARAMS), abs=1e-12)


def test_symmetric_answer_without_knowledge_is_mass_only():
    # geometric layers inside the symmetric region and an empty first pair penalty
    x = np.array([EPS / 2 * 2.0 ** -i for i in range(8)])
    y = np.full(4, 0.1)
    profile = CountProfile(x=x, y=y)
    value = instances.symmetric_answer_log(profile, 0, LOG_PARAMS)
    assert value == pytest.approx(-math.expm1(-(x.sum() + y.sum())), abs=1e-12)


def test_uncapped_poly_round_matches_below_cap():
    profile = CountProfile(x=np.full(4, 0.1), y=np.full(2, 0.05))
    composed = instances.uncapped_poly_round(POLY_PARAMS)(profile)
    assert composed == pytest.approx(instances.f_poly_round(profile, POLY_PARAMS), abs=1e-12)


def test_compose_noisy_or():
    composed = instances.compose_noisy_or(lambda: 0.5, lambda: 0.5)
    assert composed() == pytest.approx(0.75)


def test_directed_cut_values():
    profile = CountProfile(x=np.array([0.5, 0.25]), y=np.zeros(0))
    assert instances.f_directed_cut(profile, 0.4, 2.0) == pytest.approx(0.4 * 2.0 * 0.5 * 0.75)
    with pytest.raises(ValueError):
        instances.f_directed_cut(CountProfile(x=np.array([1.5, 0.0]), y=np.zeros(0)), 0.4)

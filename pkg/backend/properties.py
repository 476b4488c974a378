"""
Property suites run by ``verify``.

Sampled checks of monotonicity and submodularity on any oracle, plus
closed-form checks of the building blocks of each instance family.
"""

import logging
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np

from backend import instances
from backend.oracle import (
    BlockOracle, DirectedCutOracle, InvEOracle, LogRoundOracle, PolyRoundOracle, SetFunctionOracle,
)
from shared.config import get_config
from shared.models import CheckStatus, CountProfile, LogRoundParams, PolyRoundParams, PropertyResult

logger = logging.getLogger(__name__)

SMALL_GROUP = 64
ANCHOR_TOLERANCE = 1e-12
FINITE_DIFFERENCE_STEP = 1e-6


def _result(name: str, violation: np.ndarray, tolerance: float, detail: Optional[str] = None) -> PropertyResult:
    violation = np.atleast_1d(np.asarray(violation, dtype=float))
    worst = float(max(violation.max(), 0.0)) if violation.size else 0.0
    status = CheckStatus.PASS if worst <= tolerance else CheckStatus.FAIL
    if status == CheckStatus.FAIL:
        logger.warning(f"Property '{name}' failed: max violation {worst:.3g} > {tolerance:.3g}")
    return PropertyResult(name=name, status=status, samples=int(violation.size), max_violation=worst,
                          detail=detail)


# Sampled set-function checks ----------------------------------------------

def _block_pairs(oracle: BlockOracle, m: int, rng: np.random.Generator) -> np.ndarray:
    sizes = oracle.group_sizes
    groups = sizes.size
    t = rng.uniform(0.0, 2.5, size=(m, 1))
    scaled = t * (oracle.normalizer / oracle.n) * rng.uniform(0.0, 2.0, size=(m, groups)) \
        * np.exp(rng.normal(size=(m, groups)))
    density = np.clip(np.where(sizes <= SMALL_GROUP, rng.random((m, groups)), scaled), 0.0, 1.0)
    large = rng.binomial(sizes, density)

    room = sizes - large
    full = room.sum(axis=1) == 0
    large[full, 0] -= 1
    room = sizes - large
    pick = rng.random(m) * room.sum(axis=1)
    group = (np.cumsum(room, axis=1) > pick[:, None]).argmax(axis=1)
    element = np.eye(groups, dtype=np.int64)[group]

    small = rng.binomial(large, rng.random((m, 1)))
    return oracle.count_values(np.concatenate([small, small + element, large, large + element]))


def _explicit_pairs(oracle: SetFunctionOracle, m: int, rng: np.random.Generator) -> np.ndarray:
    n = oracle.n
    large = rng.random((m, n)) < rng.random((m, 1))
    element = rng.integers(0, n, size=m)
    large[np.arange(m), element] = False
    small = large & (rng.random((m, n)) < rng.random((m, 1)))
    single = np.zeros((m, n), dtype=bool)
    single[np.arange(m), element] = True
    return oracle.membership_values(np.concatenate([small, small | single, large, large | single]))


def marginal_pairs(oracle: SetFunctionOracle, samples: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Marginals f(S+e)-f(S) and f(T+e)-f(T) for random S ⊆ T with e ∉ T."""
    rng = np.random.default_rng(seed)
    if isinstance(oracle, BlockOracle):
        values = _block_pairs(oracle, samples, rng)
    else:
        values = _explicit_pairs(oracle, samples, rng)
    f_s, f_se, f_t, f_te = values.reshape(4, samples)
    return f_se - f_s, f_te - f_t


def check_set_function(oracle: SetFunctionOracle, samples: int, seed: int,
                       tolerance: Optional[float] = None) -> List[PropertyResult]:
    tolerance = tolerance if tolerance is not None else get_config().violation_tolerance
    gain_small, gain_large = marginal_pairs(oracle, samples, seed)
    results = []
    if oracle.monotone:
        results.append(_result("monotone", -np.concatenate([gain_small, gain_large]), tolerance))
    else:
        results.append(PropertyResult(name="monotone", status=CheckStatus.NOT_APPLICABLE,
                                      detail=f"{type(oracle).__name__} is not monotone"))
    results.append(_result("submodular", gain_large - gain_small, tolerance))
    return results


# Closed forms ---------------------------------------------------------------

def _anchor_checks(epsilon: float, ell_prime: int) -> List[PropertyResult]:
    unit = np.zeros(ell_prime)
    unit[0] = 1.0
    below = np.linspace(0.0, epsilon, 101)
    return [
        _result("g_unit_vector", abs(instances.g_hard(unit, epsilon) - (1.0 - epsilon)), ANCHOR_TOLERANCE),
        _result("gamma_small_mass", np.abs(instances.gamma_fn(below, epsilon) + np.expm1(-below)),
                ANCHOR_TOLERANCE, detail="γ(x) = 1 - e^-x on [0, ε]"),
        _result("gamma_continuity",
                abs(instances.gamma_fn(epsilon, epsilon) - instances.gamma_fn(min(epsilon + 1e-13, 1.0), epsilon)),
                1e-12),
    ]


def _pair_checks(epsilon: float, samples: int) -> List[PropertyResult]:
    x_next = np.linspace(0.0, 1.0, max(samples // 4, 2))
    value_gaps, slope_gaps = [], []
    for sign, branch in ((1.0, instances.ABOVE), (-1.0, instances.BELOW)):
        x = 2.0 * x_next + sign * epsilon
        keep = x >= 0
        x, xn = x[keep], x_next[keep]
        value_gaps.append(np.abs(instances.h_pair_branch(x, xn, epsilon, instances.SYMMETRIC)
                                 - instances.h_pair_branch(x, xn, epsilon, branch)))
        step = FINITE_DIFFERENCE_STEP
        for dx, dxn in ((step, 0.0), (0.0, step)):
            outside = (instances.h_pair_branch(x + sign * dx, xn - sign * dxn, epsilon, branch)
                       - instances.h_pair_branch(x, xn, epsilon, branch)) / step
            inside = (instances.h_pair_branch(x, xn, epsilon, instances.SYMMETRIC)
                      - instances.h_pair_branch(x - sign * dx, xn + sign * dxn, epsilon, instances.SYMMETRIC)) / step
            slope_gaps.append(np.abs(outside - inside))

    grid = np.linspace(0.0, 2.0, int(np.sqrt(samples)) + 1)
    gx, gxn = np.meshgrid(grid, grid)
    gx, gxn = gx.ravel(), gxn.ravel()
    side = gx - 2.0 * gxn >= epsilon
    bound = np.array([instances.gain_bound(a, b, epsilon) for a, b in zip(gx[side], gxn[side])])
    return [
        _result("h_pair_value_continuity", np.concatenate(value_gaps), ANCHOR_TOLERANCE),
        _result("h_pair_slope_continuity", np.concatenate(slope_gaps), 1e-4),
        _result("h_pair_gain_bound", instances.h_pair(gx[side], gxn[side], epsilon) - bound, ANCHOR_TOLERANCE,
                detail="checked where x - 2x' >= ε"),
    ]


def _balanced_profiles(num_layers: int, ell_prime: int, epsilon: float, m: int,
                       rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    x = rng.uniform(0.0, 1.0, size=(m, num_layers)) * rng.uniform(0.0, 1.0, size=(m, 1))
    center = rng.uniform(0.0, epsilon / 2.0, size=(m, 1))
    y = np.clip(center + rng.uniform(-epsilon / 2.0, epsilon / 2.0, size=(m, ell_prime)), 0.0, epsilon)
    return x, y


def _log_round_checks(params: LogRoundParams, samples: int, seed: int) -> List[PropertyResult]:
    results = _anchor_checks(params.epsilon, params.ell_prime)
    results.extend(_pair_checks(params.epsilon, samples))
    unit = np.zeros(params.ell_prime)
    unit[0] = 1.0
    cap = instances.f_log_round(CountProfile(x=np.zeros(params.L), y=unit), params)
    results.append(_result("cap_attained", abs(cap - (1.0 - params.epsilon)), ANCHOR_TOLERANCE))

    x, y = _balanced_profiles(params.L, params.ell_prime, params.epsilon, samples, np.random.default_rng(seed))
    gap = np.abs(instances.symmetric_log_survival(x, y, params.L, params)
                 - instances.log_round_log_survival(x, y, params))
    results.append(_result("full_knowledge_identity", gap, ANCHOR_TOLERANCE,
                           detail="symmetric answer with every layer known equals f for y <= ε"))
    return results


def _poly_round_checks(params: PolyRoundParams, samples: int, seed: int) -> List[PropertyResult]:
    alpha, eps, delta = params.alpha, params.epsilon, params.delta
    results = _anchor_checks(eps, params.ell_prime)
    rng = np.random.default_rng(seed)

    grid = np.linspace(0.0, 10.0, samples)
    step = FINITE_DIFFERENCE_STEP
    slopes = (instances.h_poly(grid + step, alpha, eps) - instances.h_poly(grid, alpha, eps)) / step
    knots = np.array([eps, 2.0 + eps])
    results.extend([
        _result("h_poly_linear_bound", instances.h_poly(grid, alpha, eps) - 4.0 * alpha * grid, ANCHOR_TOLERANCE),
        _result("h_poly_slope_bound", slopes - 4.0 * alpha, 1e-6),
        _result("h_poly_continuity",
                np.abs(instances.h_poly(knots + 1e-13, alpha, eps) - instances.h_poly(knots, alpha, eps)), 1e-12),
    ])

    x = rng.uniform(0.0, 1.0, size=(samples, params.r)) * rng.uniform(0.0, 1.5, size=(samples, 1))
    coordinate = rng.integers(0, params.r, size=samples)
    bump = np.zeros_like(x)
    bump[np.arange(samples), coordinate] = step
    partial = (instances.q_poly(x + bump, params) - instances.q_poly(x, params)) / step
    floor = (1.0 - 4.0 * alpha * (1.0 + delta)) * np.exp(-instances.poly_exponent(x, params))
    results.append(_result("q_partial_lower_bound", floor - partial, 1e-5))

    six = replace(params, r=6)
    low = rng.uniform(0.0, 1.0, size=(samples, 6)) * rng.uniform(0.0, 1.0, size=(samples, 1))
    high = low + rng.uniform(0.0, 0.5, size=(samples, 6))
    coordinate = rng.integers(0, 6, size=samples)
    move = np.zeros_like(low)
    move[np.arange(samples), coordinate] = rng.uniform(0.0, 0.3, size=samples)
    gain_low = instances.q_poly(low + move, six) - instances.q_poly(low, six)
    gain_high = instances.q_poly(high + move, six) - instances.q_poly(high, six)
    results.append(_result("q_diminishing_returns", gain_high - gain_low, 1e-12))

    unit = np.zeros(params.ell_prime)
    unit[0] = 1.0
    cap = instances.f_poly_round(CountProfile(x=np.zeros(params.r), y=unit), params)
    results.append(_result("cap_attained", abs(cap - (1.0 - eps)), ANCHOR_TOLERANCE))

    x, y = _balanced_profiles(params.r, params.ell_prime, eps, samples, rng)
    gap = np.abs(instances.symmetric_poly_log_survival(x, y, params.r, params)
                 - instances.poly_round_log_survival(x, y, params))
    results.append(_result("full_knowledge_identity", gap, ANCHOR_TOLERANCE,
                           detail="symmetric answer with every layer known equals f for y <= ε"))
    return results


def closed_form_checks(oracle: SetFunctionOracle, samples: int, seed: int) -> List[PropertyResult]:
    if isinstance(oracle, LogRoundOracle):
        return _log_round_checks(oracle.params, samples, seed)
    if isinstance(oracle, PolyRoundOracle):
        return _poly_round_checks(oracle.params, samples, seed)
    if isinstance(oracle, InvEOracle):
        return _anchor_checks(oracle.epsilon, oracle.partition.num_blocks)
    if isinstance(oracle, DirectedCutOracle):
        corner = instances.f_directed_cut(CountProfile(x=np.array([1.0, 0.0]), y=np.zeros(0)),
                                          oracle.delta, oracle.opt_scale)
        return [_result("opt_attained", abs(corner - oracle.opt_value), ANCHOR_TOLERANCE)]
    return []


def run_verification(oracle: SetFunctionOracle, samples: Optional[int] = None, seed: int = 0) -> List[PropertyResult]:
    """Every suite that applies to the oracle's family."""
    samples = samples or get_config().property_samples
    results = check_set_function(oracle, samples, seed)
    results.extend(closed_form_checks(oracle, samples, seed))
    failed = sum(not r.passed for r in results)
    logger.info(f"Verification finished: {len(results)} properties, {failed} failed")
    return results

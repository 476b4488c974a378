"""
Closed-form building blocks of the hard instances.

Every function works on numpy arrays with the coordinate axis last, so a
whole batch of count profiles is evaluated in one call. Values near the
cap are computed through log-survival terms log(1 - value) and recovered
with ``-expm1`` to keep precision for small masses.
"""

import logging
from typing import Callable, Union

import numpy as np

from shared.models import CountProfile, LogRoundParams, PolyRoundParams

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

LOG_TWO_THIRDS = float(np.log(2.0 / 3.0))
LOG_ONE_THIRD = float(np.log(1.0 / 3.0))
ALPHA_MAX = 1.0 / 24.0

SYMMETRIC = "symmetric"
ABOVE = "above"  # x - 2x' >= ε
BELOW = "below"  # x - 2x' <= -ε


def _require_nonnegative(name: str, value: np.ndarray):
    if np.any(value < 0):
        raise ValueError(f"{name} must be non-negative, got min {float(np.min(value))}")


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


# γ and g ---------------------------------------------------------------

def gamma_log_survival(x: np.ndarray, epsilon: float) -> np.ndarray:
    """log(1 - γ(x)) without domain checks."""
    x = np.asarray(x, dtype=float)
    tail = -epsilon + np.log1p(epsilon - np.minimum(x, 1.0))
    return np.where(x <= epsilon, -x, tail)


def gamma_fn(x: ArrayLike, epsilon: float) -> ArrayLike:
    """γ(x): 1 - e^{-x} below ε, then linear continuation 1 - e^{-ε}(1 - x + ε)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"γ is defined on [0, 1], got {x}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"ε must lie in (0, 1), got {epsilon}")
    return _scalar_or_array(-np.expm1(gamma_log_survival(arr, epsilon)))


def g_log_survival(y: np.ndarray, epsilon: float) -> np.ndarray:
    """log(1 - g(y)) along the last axis; y entries are clipped to 1 where g saturates anyway."""
    y = np.minimum(np.asarray(y, dtype=float), 1.0)
    total = gamma_log_survival(y, epsilon).sum(axis=-1)
    return np.maximum(total, np.log(epsilon))


def g_hard(y: np.ndarray, epsilon: float, ell_prime: int = None) -> ArrayLike:
    """g(y) = min{1 - Π(1 - γ(y_j)), 1 - ε}."""
    y = np.asarray(y, dtype=float)
    if ell_prime is not None and y.shape[-1] != ell_prime:
        raise ValueError(f"g expects {ell_prime} block coordinates, got {y.shape[-1]}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("g is defined on [0, 1]^ℓ'")
    return _scalar_or_array(-np.expm1(g_log_survival(y, epsilon)))


# h(x, x') ----------------------------------------------------------------

def pair_log_survival(x: np.ndarray, x_next: np.ndarray, epsilon: float) -> np.ndarray:
    """log(1 - h(x, x')) for the three-branch pair function."""
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    base = -0.5 * (x + x_next)
    d = x - 2.0 * x_next
    u = np.maximum(d - epsilon, 0.0)
    v = np.maximum(-d - epsilon, 0.0)
    above = np.logaddexp(LOG_TWO_THIRDS - u / 4.0, LOG_ONE_THIRD + u / 2.0)
    below = np.logaddexp(LOG_TWO_THIRDS + v / 4.0, LOG_ONE_THIRD - v / 2.0)
    penalty = np.where(d >= epsilon, above, np.where(d <= -epsilon, below, 0.0))
    return base + penalty


def h_pair(x: ArrayLike, x_next: ArrayLike, epsilon: float) -> ArrayLike:
    """h(x, x'): 1 - e^{-(x+x')/2} when |x - 2x'| <= ε, penalized mixtures outside."""
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    _require_nonnegative("x", x)
    _require_nonnegative("x'", x_next)
    if epsilon <= 0:
        raise ValueError(f"ε must be positive, got {epsilon}")
    return _scalar_or_array(-np.expm1(pair_log_survival(x, x_next, epsilon)))


def h_pair_branch(x: ArrayLike, x_next: ArrayLike, epsilon: float, branch: str) -> ArrayLike:
    """Evaluate one branch formula of h regardless of which region (x, x') lies in."""
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    if branch == SYMMETRIC:
        value = -np.expm1(-0.5 * (x + x_next))
    elif branch == ABOVE:
        value = 1.0 - (2.0 / 3.0 * np.exp(-0.75 * x + 0.25 * epsilon)
                       + 1.0 / 3.0 * np.exp(-1.5 * x_next - 0.5 * epsilon))
    elif branch == BELOW:
        value = 1.0 - (2.0 / 3.0 * np.exp(-0.75 * x - 0.25 * epsilon)
                       + 1.0 / 3.0 * np.exp(-1.5 * x_next + 0.5 * epsilon))
    else:
        raise ValueError(f"Unknown branch '{branch}'")
    return _scalar_or_array(value)


def gain_bound(x: float, x_next: float, epsilon: float) -> float:
    """Upper bound 1 - exp(-(x+x')/2 + (δ-ε)²/16) with δ = |x - 2x'| >= ε."""
    spread = abs(x - 2.0 * x_next)
    if spread < epsilon - 1e-12:
        raise ValueError(f"gain_bound needs |x - 2x'| >= ε, got {spread} < {epsilon}")
    excess = max(spread - epsilon, 0.0)
    return float(-np.expm1(-0.5 * (x + x_next) + excess ** 2 / 16.0))


# log-round construction ----------------------------------------------------

def _with_phantom(x: np.ndarray) -> np.ndarray:
    """Prepend the x_0 = 0 coordinate along the last axis."""
    zeros = np.zeros(x.shape[:-1] + (1,), dtype=float)
    return np.concatenate([zeros, x], axis=-1)


def log_round_log_survival(x: np.ndarray, y: np.ndarray, params: LogRoundParams) -> np.ndarray:
    """log(1 - f) of the capped log-round objective."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    padded = _with_phantom(x)
    pairs = pair_log_survival(padded[..., :-1], padded[..., 1:], params.epsilon).sum(axis=-1)
    layered = pairs - 0.5 * x[..., -1]
    return np.maximum(layered + g_log_survival(y, params.epsilon), np.log(params.epsilon))


def log_round_values(x: np.ndarray, y: np.ndarray, params: LogRoundParams) -> np.ndarray:
    return -np.expm1(log_round_log_survival(x, y, params))


def _check_profile(profile: CountProfile, num_x: int, num_y: int):
    if profile.x.shape != (num_x,) or profile.y.shape != (num_y,):
        raise ValueError(
            f"Profile has dimensions ({profile.x.size}, {profile.y.size}), expected ({num_x}, {num_y})"
        )


def f_log_round(profile: CountProfile, params: LogRoundParams) -> float:
    """min{f_1, 1 - ε} with f_1 = 1 - h̃(x)(1 - g(y)) and x_0 = 0."""
    _check_profile(profile, params.L, params.ell_prime)
    return float(log_round_values(profile.x, profile.y, params))


def symmetric_log_survival(x: np.ndarray, y: np.ndarray, known: int, params: LogRoundParams) -> np.ndarray:
    """log(1 - answer) seen by an observer that knows ``known`` layers.

    The answer keeps the pair terms up to the pair that links the last known
    layer with the next one and replaces everything beyond by aggregate mass.
    """
    if not 0 <= known <= params.L:
        raise ValueError(f"known layers must lie in [0, {params.L}], got {known}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = min(known + 1, params.L)
    padded = _with_phantom(x)
    pairs = pair_log_survival(padded[..., :r], padded[..., 1:r + 1], params.epsilon).sum(axis=-1)
    exponent = -0.5 * x[..., r - 1] - x[..., r:].sum(axis=-1) - y.sum(axis=-1) + pairs
    return np.maximum(exponent, np.log(params.epsilon))


def symmetric_answer_log(profile: CountProfile, known: int, params: LogRoundParams) -> float:
    """Answer for an observer with ``known`` layers; pair terms run up to index min(known + 1, L)."""
    _check_profile(profile, params.L, params.ell_prime)
    return float(-np.expm1(symmetric_log_survival(profile.x, profile.y, known, params)))


# poly-round construction ---------------------------------------------------

def h_poly(x: ArrayLike, alpha: float, epsilon: float) -> ArrayLike:
    """Piecewise penalty: 0 up to ε, α(x-ε)² up to 2+ε, then linear with slope 4α."""
    if not 0.0 < alpha <= ALPHA_MAX:
        raise ValueError(f"α out of range (0, 1/24]: {alpha}")
    if epsilon <= 0:
        raise ValueError(f"ε must be positive, got {epsilon}")
    return _scalar_or_array(_h_poly(np.asarray(x, dtype=float), alpha, epsilon))


def _h_poly(x: np.ndarray, alpha: float, epsilon: float) -> np.ndarray:
    quadratic = alpha * (x - epsilon) ** 2
    linear = 4.0 * alpha * (x - 1.0 - epsilon)
    return np.where(x <= epsilon, 0.0, np.where(x <= 2.0 + epsilon, quadratic, linear))


def h_poly_derivative(x: ArrayLike, alpha: float, epsilon: float) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    slope = np.where(x <= epsilon, 0.0, np.where(x <= 2.0 + epsilon, 2.0 * alpha * (x - epsilon), 4.0 * alpha))
    return _scalar_or_array(slope)


def poly_increments(x: np.ndarray, delta: float) -> np.ndarray:
    """(1+δ)x_{i+1} - x_i for i = 0..r-1 with x_0 = 0."""
    padded = _with_phantom(np.asarray(x, dtype=float))
    return (1.0 + delta) * padded[..., 1:] - padded[..., :-1]


def poly_exponent(x: np.ndarray, params: PolyRoundParams) -> np.ndarray:
    """p(x) = Σx_i - Σ h((1+δ)x_{i+1} - x_i)."""
    x = np.asarray(x, dtype=float)
    penalty = _h_poly(poly_increments(x, params.delta), params.alpha, params.epsilon).sum(axis=-1)
    return x.sum(axis=-1) - penalty


def q_poly(x: ArrayLike, params: PolyRoundParams) -> ArrayLike:
    """q(x) = 1 - exp(-p(x))."""
    x = np.asarray(x, dtype=float)
    _require_nonnegative("x", x)
    if x.shape[-1] != params.r:
        raise ValueError(f"q expects {params.r} coordinates, got {x.shape[-1]}")
    return _scalar_or_array(-np.expm1(-poly_exponent(x, params)))


def compose_noisy_or(first: Callable, second: Callable) -> Callable:
    """z -> 1 - (1 - F1(z))(1 - F2(z))."""
    def composed(*args, **kwargs):
        a = np.asarray(first(*args, **kwargs), dtype=float)
        b = np.asarray(second(*args, **kwargs), dtype=float)
        return _scalar_or_array(a + b - a * b)
    return composed


def poly_round_log_survival(x: np.ndarray, y: np.ndarray, params: PolyRoundParams) -> np.ndarray:
    exponent = -poly_exponent(x, params) + g_log_survival(y, params.epsilon)
    return np.maximum(exponent, np.log(params.epsilon))


def poly_round_values(x: np.ndarray, y: np.ndarray, params: PolyRoundParams) -> np.ndarray:
    return -np.expm1(poly_round_log_survival(x, y, params))


def uncapped_poly_round(params: PolyRoundParams) -> Callable:
    """f_1 as the noisy-or of q on the layers and g on the blocks."""
    return compose_noisy_or(
        lambda profile: q_poly(profile.x, params),
        lambda profile: g_hard(np.minimum(profile.y, 1.0), params.epsilon),
    )


def f_poly_round(profile: CountProfile, params: PolyRoundParams) -> float:
    """min{1 - (1 - q(x))(1 - g(y)), 1 - ε}."""
    _check_profile(profile, params.r, params.ell_prime)
    return float(poly_round_values(profile.x, profile.y, params))


def symmetric_poly_log_survival(x: np.ndarray, y: np.ndarray, known: int, params: PolyRoundParams) -> np.ndarray:
    if not 0 <= known <= params.r:
        raise ValueError(f"known layers must lie in [0, {params.r}], got {known}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    terms = min(known + 1, params.r)
    increments = poly_increments(x, params.delta)[..., :terms]
    penalty = _h_poly(increments, params.alpha, params.epsilon).sum(axis=-1)
    exponent = -x.sum(axis=-1) - y.sum(axis=-1) + penalty
    return np.maximum(exponent, np.log(params.epsilon))


def symmetric_answer_poly(profile: CountProfile, known: int, params: PolyRoundParams) -> float:
    """Answer for an observer with ``known`` layers; penalties run up to index min(known + 1, r)."""
    _check_profile(profile, params.r, params.ell_prime)
    return float(-np.expm1(symmetric_poly_log_survival(profile.x, profile.y, known, params)))


# 1 - 1/e and directed cut ------------------------------------------------

def inv_e_values(y: np.ndarray, epsilon: float) -> np.ndarray:
    """Objective of the 1 - 1/e instance: g on the block coordinates."""
    return -np.expm1(g_log_survival(y, epsilon))


def symmetric_inv_e_values(y: np.ndarray, epsilon: float) -> np.ndarray:
    """Answer on symmetric queries: min{1 - e^{-Σy}, 1 - ε}."""
    total = np.asarray(y, dtype=float).sum(axis=-1)
    return -np.expm1(np.maximum(-total, np.log(epsilon)))


def directed_cut_values(x: np.ndarray, delta: float, opt_scale: float) -> np.ndarray:
    """δ·OPT·x_1(1 - x_2) with per-layer normalized counts."""
    x = np.asarray(x, dtype=float)
    return delta * opt_scale * x[..., 0] * (1.0 - x[..., 1])


def f_directed_cut(profile: CountProfile, delta: float, opt_scale: float = 1.0) -> float:
    if profile.x.shape != (2,):
        raise ValueError("Directed cut profiles have exactly two layer coordinates")
    if np.any(profile.x > 1.0 + 1e-12):
        raise ValueError("Directed cut coordinates must be normalized by layer size")
    return float(directed_cut_values(profile.x, delta, opt_scale))

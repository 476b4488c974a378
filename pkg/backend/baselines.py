"""
Adaptive baselines.

The random-set baseline, the round-by-round layer discovery, the best
solution an observer can build from the layers it knows, and solvers for the
two auxiliary minimization problems behind the round lower bounds.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np

from backend import instances
from backend.calculus import project_halfspace_orthant, project_weighted_simplex
from backend.oracle import (
    BlockOracle, LogRoundOracle, PolyRoundOracle, QueryBatch, SetFunctionOracle,
    submit_batch, submit_count_batch,
)
from shared.config import get_config
from shared.errors import ClassificationError
from shared.models import (
    CountProfile, Estimate, LayerKnowledge, LayeredSolution, LogRoundParams, PolyRoundParams,
    RoundLedger, SolverResult,
)

logger = logging.getLogger(__name__)

LayeredParams = Union[LogRoundParams, PolyRoundParams]
INV_E = 1.0 - math.exp(-1.0)
SYMMETRY_TOLERANCE = 1e-12
CLUSTER_SEPARATION = 0.5


# Random sets ---------------------------------------------------------------

def _is_size(size_or_density) -> bool:
    return isinstance(size_or_density, (int, np.integer)) and not isinstance(size_or_density, bool)


def _random_count_rows(oracle: BlockOracle, size_or_density, m: int, rng: np.random.Generator) -> np.ndarray:
    sizes = oracle.group_sizes
    if _is_size(size_or_density):
        return rng.multivariate_hypergeometric(sizes, int(size_or_density), size=m)
    return rng.binomial(sizes, float(size_or_density), size=(m, sizes.size))


def _random_sets(n: int, size_or_density, m: int, rng: np.random.Generator) -> List[np.ndarray]:
    if _is_size(size_or_density):
        order = np.argsort(rng.random((m, n)), axis=1)[:, :int(size_or_density)]
        return [np.sort(row) for row in order]
    masks = rng.random((m, n)) < float(size_or_density)
    return [np.flatnonzero(row) for row in masks]


def random_set_value(oracle: SetFunctionOracle, size_or_density, m: int, seed: int,
                     ledger: Optional[RoundLedger] = None, label: str = "random_sets") -> Estimate:
    """Mean of f over m random sets, as one round.

    An integer asks for uniformly random sets of that size, a float for sets
    that contain every element independently with that probability.
    """
    if m < 1:
        raise ValueError(f"Need at least one sample, got m = {m}")
    if _is_size(size_or_density):
        if not 0 <= size_or_density <= oracle.n:
            raise ValueError(f"Set size {size_or_density} outside [0, {oracle.n}]")
    elif not 0.0 <= float(size_or_density) <= 1.0:
        raise ValueError(f"Density {size_or_density} outside [0, 1]")

    ledger = ledger if ledger is not None else RoundLedger()
    rng = np.random.default_rng(seed)
    if isinstance(oracle, BlockOracle):
        values = submit_count_batch(oracle, _random_count_rows(oracle, size_or_density, m, rng), ledger, label)
    else:
        values = submit_batch(oracle, _random_sets(oracle.n, size_or_density, m, rng), ledger, label)
    std_error = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return Estimate(value=float(values.mean()), std_error=std_error)


def indistinguishability_rate(oracle: BlockOracle, trials: int, seed: int, size: Optional[int] = None,
                              known: int = 0, ledger: Optional[RoundLedger] = None) -> dict:
    """How often random size-``size`` sets get exactly the symmetric answer.

    For the layered families ``known`` is the number of layers the observer
    is assumed to know; the 1 - 1/e family has a single symmetric form.
    """
    if not hasattr(oracle, "symmetric_values"):
        raise ValueError(f"{type(oracle).__name__} has no symmetric answer")
    size = int(size if size is not None else oracle.normalizer[0])
    ledger = ledger if ledger is not None else RoundLedger()
    rng = np.random.default_rng(seed)
    counts = _random_count_rows(oracle, size, trials, rng)
    values = submit_count_batch(oracle, counts, ledger, "symmetry_probe")
    normalized = counts / oracle.normalizer
    symmetric = oracle.symmetric_values(normalized[:, :oracle.num_layers], normalized[:, oracle.num_layers:], known)
    deviation = np.abs(values - symmetric)
    matches = int(np.sum(deviation <= SYMMETRY_TOLERANCE))
    logger.info(f"{matches}/{trials} random sets match the symmetric answer")
    return {
        "trials": trials,
        "matches": matches,
        "rate": matches / trials,
        "max_deviation": float(deviation.max()),
        "mean_value": float(values.mean()),
    }


# Layer discovery -----------------------------------------------------------

def _split_marginals(marginals: np.ndarray, separation: float = CLUSTER_SEPARATION) -> np.ndarray:
    """Mask of the low cluster, thresholded at the midpoint of the largest gap.

    The split is ambiguous when that gap is no wider than ``separation``
    times the larger within-cluster standard deviation.
    """
    if marginals.size < 2:
        raise ClassificationError("Fewer than two marginals to classify")
    ordered = np.sort(marginals)
    gaps = np.diff(ordered)
    cut = int(np.argmax(gaps))
    gap = float(gaps[cut])
    noise = max(float(ordered[:cut + 1].std()), float(ordered[cut + 1:].std()))
    if gap <= 0.0 or gap <= separation * noise:
        raise ClassificationError(
            f"Marginals are not bimodal: largest gap {gap:.3g} vs within-cluster std {noise:.3g}")
    threshold = 0.5 * (ordered[cut] + ordered[cut + 1])
    return marginals < threshold


def discover_layers(oracle: SetFunctionOracle, rounds: int, seed: int, ledger: Optional[RoundLedger] = None,
                    verify: bool = True) -> LayerKnowledge:
    """Recover X_1, ..., X_rounds one layer per round.

    Each round draws a reference set R from the undiscovered elements and asks,
    in one batch, for f(R), f(R + e) for every other undiscovered e and
    f(R - e) for every e in R. Only the next layer's marginals carry the live
    pair factor, so they form the low cluster.
    """
    if not isinstance(oracle, (LogRoundOracle, PolyRoundOracle)):
        raise ValueError("Layer discovery needs a log_round or poly_round oracle")
    if not 0 <= rounds <= oracle.num_layers:
        raise ValueError(f"rounds must lie in [0, {oracle.num_layers}], got {rounds}")

    ledger = ledger if ledger is not None else RoundLedger()
    start = ledger.rounds_used
    knowledge = LayerKnowledge()
    rng = np.random.default_rng(seed)
    undiscovered = np.arange(oracle.n)
    k = oracle.params.k

    for layer in range(1, rounds + 1):
        size = min(k, undiscovered.size // 2)
        if size < 1:
            knowledge.failed = True
            knowledge.failure_reason = f"round {layer}: too few undiscovered elements"
            break
        reference = np.sort(rng.choice(undiscovered, size=size, replace=False))
        outside = np.setdiff1d(undiscovered, reference, assume_unique=True)
        batch = QueryBatch(sets=[reference], base=reference, additions=outside, removals=reference)
        values = submit_batch(oracle, batch, ledger, label=f"discover_layer_{layer}")
        base_value = values[0]
        gains = values[1:1 + outside.size] - base_value
        losses = base_value - values[1 + outside.size:]
        elements = np.concatenate([outside, reference])
        marginals = np.concatenate([gains, losses])

        try:
            found = np.sort(elements[_split_marginals(marginals)])
        except ClassificationError as e:
            knowledge.failed = True
            knowledge.failure_reason = f"round {layer}: {e}"
            break
        if verify and not np.array_equal(found, oracle.partition.layer_members(layer)):
            knowledge.failed = True
            knowledge.failure_reason = (f"round {layer}: recovered {found.size} elements, "
                                        f"X_{layer} has {oracle.partition.layer_sizes[layer - 1]}")
            break
        knowledge.discovered.append(found)
        knowledge.s = layer
        undiscovered = np.setdiff1d(undiscovered, found, assume_unique=True)
        logger.debug(f"Discovered X_{layer} with {found.size} elements")

    knowledge.rounds_used = ledger.rounds_used - start
    if knowledge.failed:
        logger.warning(f"Layer discovery failed (seed {seed}): {knowledge.failure_reason}")
    return knowledge


# Best solution of an observer that knows s layers ---------------------------

def _num_layers(params: LayeredParams) -> int:
    return params.L if isinstance(params, LogRoundParams) else params.r


def theory_cap(params: LayeredParams, s: int) -> float:
    """Upper bound on what an observer knowing ``s`` layers can reach.

    For poly_round with s < r the answer is 1 - exp(-Σ + penalty) with a
    non-negative penalty, so at unit mass the cap stays at 1 - 1/e for every
    such s; only the fully known instance reaches 1 - ε.
    """
    if s >= _num_layers(params):
        return 1.0 - params.epsilon
    if s == 0 or isinstance(params, PolyRoundParams):
        return INV_E
    return 1.0 - math.exp(-1.0) * math.exp(1.0 / (64.0 * s) - params.epsilon)


@dataclass(frozen=True)
class _LayeredFamily:
    """Profiles (x_1..x_s, symmetric tail tied to x_s, y_j = x_last/l') with unit mass."""
    params: LayeredParams
    s: int

    @property
    def num_layers(self) -> int:
        return _num_layers(self.params)

    @property
    def ratio(self) -> float:
        return 2.0 if isinstance(self.params, LogRoundParams) else 1.0 + self.params.delta

    def weights(self) -> np.ndarray:
        tail = self.num_layers - self.s
        w = np.ones(self.s)
        w[-1] = 1.0 + np.sum(self.ratio ** -np.arange(1, tail + 1)) + self.ratio ** -tail
        return w

    def expand(self, free: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        free = np.atleast_2d(free)
        tail = free[:, -1:] * self.ratio ** -np.arange(1, self.num_layers - self.s + 1)
        x = np.concatenate([free, tail], axis=1)
        y = np.repeat(x[:, -1:] / self.params.ell_prime, self.params.ell_prime, axis=1)
        return x, y

    def values(self, free: np.ndarray) -> np.ndarray:
        x, y = self.expand(free)
        if isinstance(self.params, LogRoundParams):
            survival = instances.symmetric_log_survival(x, y, self.s, self.params)
        else:
            survival = instances.symmetric_poly_log_survival(x, y, self.s, self.params)
        return -np.expm1(survival)

    def witness(self) -> np.ndarray:
        shape = 1.0 - self.ratio ** -np.arange(1, self.s + 1)
        return shape / (self.weights() @ shape)


def _numeric_gradient(values, x: np.ndarray, step: float = 1e-7) -> np.ndarray:
    # one-sided at the x >= 0 boundary
    shifts = np.eye(x.size) * step
    lower_points = np.maximum(x - shifts, 0.0)
    upper = values(x + shifts)
    lower = values(lower_points)
    width = step + (x - np.diag(lower_points))
    return (upper - lower) / width


def _projected_ascent(values, project, x_init: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, float, bool]:
    """Projected gradient ascent with step halving; stops when a step gains less than ``tol``."""
    x = project(x_init)
    value = float(values(x)[0])
    step = 1.0
    for _ in range(max_iter):
        grad = _numeric_gradient(values, x)
        while step > 1e-14:
            candidate = project(x + step * grad)
            candidate_value = float(values(candidate)[0])
            if candidate_value >= value:
                break
            step *= 0.5
        else:
            return x, value, True
        gain = candidate_value - value
        x, value = candidate, candidate_value
        if gain < tol:
            return x, value, True
        step = min(2.0 * step, 1.0)
    return x, value, False


@lru_cache(maxsize=256)
def _family_optimum(params: LayeredParams, s: int, restarts: int, seed: int) -> Tuple[np.ndarray, float, float, bool]:
    family = _LayeredFamily(params, s)
    w = family.weights()
    settings = get_config()

    def project(v):
        return project_weighted_simplex(v, w, 1.0)

    witness = family.witness()
    rng = np.random.default_rng(seed)
    starts = [witness]
    for _ in range(max(restarts - 1, 0)):
        d = rng.dirichlet(np.ones(s))
        starts.append(d / (w @ d))

    best_x, best_value, converged = witness, -np.inf, False
    for start in starts:
        x, value, ok = _projected_ascent(family.values, project, start,
                                         settings.optimizer_tolerance, settings.optimizer_max_iterations)
        if value > best_value:
            best_x, best_value, converged = x, value, ok
    witness_value = float(family.values(witness)[0])
    return best_x, best_value, witness_value, converged


def _symmetric_profile(params: LayeredParams) -> CountProfile:
    num = _num_layers(params)
    return CountProfile(x=np.zeros(num), y=np.full(params.ell_prime, 1.0 / params.ell_prime))


def _full_knowledge_profile(params: LayeredParams) -> CountProfile:
    y = np.zeros(params.ell_prime)
    y[0] = 1.0
    return CountProfile(x=np.zeros(_num_layers(params)), y=y)


def _layered_candidate(params: LayeredParams, s: int, restarts: int, seed: int) -> Tuple[CountProfile, float, float, bool]:
    """(profile, family optimum, witness value, converged) for exactly s known layers."""
    num = _num_layers(params)
    if s == 0:
        closed = min(INV_E, 1.0 - params.epsilon)
        return _symmetric_profile(params), closed, closed, True
    if s >= num:
        profile = _full_knowledge_profile(params)
        if isinstance(params, LogRoundParams):
            value = instances.f_log_round(profile, params)
        else:
            value = instances.f_poly_round(profile, params)
        return profile, value, value, True
    free, value, witness_value, converged = _family_optimum(params, s, restarts, seed)
    x, y = _LayeredFamily(params, s).expand(free)
    return CountProfile(x=x[0], y=y[0]), value, witness_value, converged


def best_layered_solution(params: LayeredParams, s: int, restarts: Optional[int] = None,
                          seed: int = 0) -> LayeredSolution:
    """Best value reachable with ``s`` known layers and unit mass.

    The value is the running maximum over 0..s since an observer may ignore
    what it learned; ``layered_value`` is the optimum for exactly s layers.
    """
    num = _num_layers(params)
    if not 0 <= s <= num:
        raise ValueError(f"s must lie in [0, {num}], got {s}")
    restarts = restarts or get_config().optimizer_restarts

    profile, layered_value, witness_value, converged = _layered_candidate(params, s, restarts, seed)
    value, best_profile = layered_value, profile
    for fewer in range(s):
        other_profile, other_value, _, _ = _layered_candidate(params, fewer, restarts, seed)
        if other_value > value:
            value, best_profile = other_value, other_profile
    if not converged:
        logger.warning(f"Layered optimizer did not converge for s = {s}; reporting best so far")

    k = float(params.k)
    rounded = CountProfile(x=np.round(best_profile.x * k) / k, y=np.round(best_profile.y * k) / k)
    return LayeredSolution(s=s, profile=best_profile, value=value, layered_value=layered_value,
                           witness_value=witness_value, theory_cap=theory_cap(params, s),
                           converged=converged, rounded_profile=rounded)


# Auxiliary minimization problems ------------------------------------------

def quadr_closed_form(r: int) -> Tuple[np.ndarray, float]:
    """Equal-increment optimum x_i = (1 - 2^-i)/(2r) with value 1/(4r)."""
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    i = np.arange(1, r + 1)
    return (1.0 - 2.0 ** -i) / (2.0 * r), 1.0 / (4.0 * r)


def _difference_matrix(r: int) -> np.ndarray:
    """(Dx)_1 = 2x_1, (Dx)_i = 2x_i - x_{i-1}."""
    return 2.0 * np.eye(r) - np.eye(r, k=-1)


def quadr_opt_solve(r: int, tol: float = 1e-14, max_iter: int = 20_000) -> SolverResult:
    """min 4x_1² + Σ(2x_i - x_{i-1})² over x >= 0, Σ_{i<r} x_i + 2x_r >= ½.

    Solved by projected gradient descent and compared with the closed form.
    """
    x_closed, value_closed = quadr_closed_form(r)
    D = _difference_matrix(r)
    gram = 2.0 * D.T @ D
    w = np.ones(r)
    w[-1] = 2.0
    step = 1.0 / 18.0

    x = project_halfspace_orthant(np.zeros(r), w, 0.5)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        x_new = project_halfspace_orthant(x - step * (gram @ x), w, 0.5)
        if np.linalg.norm(x_new - x) < tol:
            x = x_new
            converged = True
            break
        x = x_new
    value = float(np.sum((D @ x) ** 2))
    if not converged:
        logger.warning(f"quadr_opt_solve did not converge for r = {r}")
    return SolverResult(x=x, value=value, closed_form_value=value_closed, bound=value_closed,
                        converged=converged, iterations=iterations)


def polyround_bound(r: int, delta: float, alpha: float, epsilon: float) -> float:
    """r·h(δ/(3r))."""
    return float(r * instances.h_poly(delta / (3.0 * r), alpha, epsilon))


def _equal_increment_point(r: int, delta: float) -> np.ndarray:
    """Point with (1+δ)x_{i+1} - x_i constant and Σx = ⅓."""
    decay = 1.0 - (1.0 + delta) ** -np.arange(1, r + 1)
    c = (delta / 3.0) / decay.sum()
    return (c / delta) * decay


def polyround_opt_solve(r: int, delta: float, alpha: float, epsilon: float, restarts: Optional[int] = None,
                        seed: int = 0) -> SolverResult:
    """min Σ_{i<r} h((1+δ)x_{i+1} - x_i) over x >= 0, Σx >= ⅓, with x_0 = 0."""
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"δ out of range (0, 1]: {delta}")
    if not 0.0 < alpha <= instances.ALPHA_MAX:
        raise ValueError(f"α out of range (0, 1/24]: {alpha}")
    if epsilon <= 0:
        raise ValueError(f"ε must be positive, got {epsilon}")
    if delta / (3.0 * r) <= epsilon:
        logger.warning(f"δ/(3r) = {delta / (3.0 * r):.4g} <= ε = {epsilon}: the lower bound is trivially zero")

    settings = get_config()
    restarts = restarts or settings.optimizer_restarts
    ones = np.ones(r)

    def objective(x):
        return float(np.sum(instances.h_poly(instances.poly_increments(x, delta), alpha, epsilon)))

    def grad(x):
        slopes = np.asarray(instances.h_poly_derivative(instances.poly_increments(x, delta), alpha, epsilon))
        g = (1.0 + delta) * slopes
        g[:-1] -= slopes[1:]
        return g

    def project(v):
        return project_halfspace_orthant(v, ones, 1.0 / 3.0)

    witness = _equal_increment_point(r, delta)
    rng = np.random.default_rng(seed)
    starts = [witness] + [rng.dirichlet(ones) / 3.0 for _ in range(max(restarts - 1, 0))]
    base_step = 1.0 / (2.0 * alpha * (2.0 + delta) ** 2)

    best_x, best_value, best_converged, total_iterations = witness, np.inf, False, 0
    for start in starts:
        x = project(start)
        value = objective(x)
        converged = False
        for _ in range(settings.optimizer_max_iterations):
            total_iterations += 1
            g = grad(x)
            step = base_step
            while step > 1e-14:
                candidate = project(x - step * g)
                candidate_value = objective(candidate)
                if candidate_value <= value:
                    break
                step *= 0.5
            else:
                converged = True
                break
            drop = value - candidate_value
            x, value = candidate, candidate_value
            if drop < settings.optimizer_tolerance:
                converged = True
                break
        if value < best_value:
            best_x, best_value, best_converged = x, value, converged

    if not best_converged:
        logger.warning(f"polyround_opt_solve did not converge for r = {r}; reporting best so far")
    return SolverResult(x=best_x, value=best_value, closed_form_value=objective(witness),
                        bound=polyround_bound(r, delta, alpha, epsilon), converged=best_converged,
                        iterations=total_iterations)


# Tables -------------------------------------------------------------------

CURVE_COLUMNS = ["s", "discovered_ok", "success_rate", "rounds_used", "best_value",
                 "layered_value", "witness_value", "theory_cap"]
BOUNDS_COLUMNS = ["r", "quadr_value", "poly_bound", "log_round_cap", "inv_e_gap"]


def adaptivity_curve(oracle: SetFunctionOracle, rounds_max: int, trials: int, seed: int) -> Tuple[List[dict], bool]:
    """One row per s = 0..rounds_max; the flag is False when discovery fell below the success threshold."""
    if not isinstance(oracle, (LogRoundOracle, PolyRoundOracle)):
        raise ValueError("The adaptivity curve needs a log_round or poly_round oracle")
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")
    top = min(rounds_max, oracle.num_layers)
    threshold = get_config().discovery_success_threshold

    depth = []
    for t in range(trials):
        knowledge = discover_layers(oracle, top, seed + t)
        depth.append(knowledge.s)
    depth = np.asarray(depth)

    rows = []
    healthy = True
    for s in range(top + 1):
        ledger = RoundLedger()
        discover_layers(oracle, s, seed, ledger=ledger)
        rate = float(np.mean(depth >= s))
        solution = best_layered_solution(oracle.params, s)
        rows.append({
            "s": s,
            "discovered_ok": rate >= threshold,
            "success_rate": rate,
            "rounds_used": ledger.rounds_used,
            "best_value": solution.value,
            "layered_value": solution.layered_value,
            "witness_value": solution.witness_value,
            "theory_cap": solution.theory_cap,
        })
        logger.info(f"s = {s}: success rate {rate:.3f}, best value {solution.value:.6g}")
        if rate < threshold:
            logger.warning(f"Discovery success rate {rate:.3f} below {threshold} at s = {s}; stopping")
            healthy = False
            break
    return rows, healthy


def bounds_table(rounds_max: int, delta: float, alpha: float, epsilon: float) -> List[dict]:
    """Closed-form bound values for r = 1..rounds_max."""
    if rounds_max < 1:
        raise ValueError(f"rounds_max must be at least 1, got {rounds_max}")
    rows = []
    for r in range(1, rounds_max + 1):
        log_cap = 1.0 - math.exp(-1.0) * math.exp(1.0 / (64.0 * r) - epsilon)
        rows.append({
            "r": r,
            "quadr_value": quadr_closed_form(r)[1],
            "poly_bound": polyround_bound(r, delta, alpha, epsilon),
            "log_round_cap": log_cap,
            "inv_e_gap": INV_E - log_cap,
        })
    return rows

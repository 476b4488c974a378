"""
Multilinear extension, its gradients and the projections used by the
continuous algorithms.

Three estimators are available:
    exact_enum   enumerate all 2^n sets (small n), or all count vectors of a
                 block-symmetric oracle at a block-constant point
    block_exact  contract the count grid of a block-symmetric oracle with
                 per-block binomial distributions
    monte_carlo  average over seeded random sets; gradient differences use
                 common random numbers
"""

import hashlib
import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy.stats import binom

from backend.oracle import BlockOracle, SetFunctionOracle
from shared.config import get_config
from shared.errors import EstimatorBudgetError
from shared.models import EstimatorConfig, EstimatorMode, Estimate, FractionalPoint

logger = logging.getLogger(__name__)

MASK_CHUNK_ENTRIES = 1 << 24

PointLike = Union[FractionalPoint, np.ndarray]


def point_seed(coords: np.ndarray) -> int:
    """Stable 64-bit hash of a point, used to derive sampling streams."""
    data = np.ascontiguousarray(np.asarray(coords, dtype=np.float64)).tobytes()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _sample_rng(cfg: EstimatorConfig, z: FractionalPoint, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(cfg.seed), point_seed(z.coords), int(stream)])


def _check_block_point(oracle: SetFunctionOracle, z: FractionalPoint):
    if not z.is_block_constant:
        return
    if not oracle.block_symmetric:
        raise ValueError("Block-constant points need a block-symmetric oracle")
    if not np.array_equal(z.block_sizes, oracle.group_sizes):
        raise ValueError("Block sizes of the point do not match the oracle's partition")


def _dense(oracle: SetFunctionOracle, z: FractionalPoint) -> np.ndarray:
    labels = oracle.partition.labels if isinstance(oracle, BlockOracle) else None
    dense = z.dense(labels)
    if dense.size != oracle.n:
        raise ValueError(f"Point has {dense.size} coordinates, oracle has {oracle.n} elements")
    return dense


def _block_exact_allowed(oracle: SetFunctionOracle, z: FractionalPoint) -> bool:
    return (isinstance(oracle, BlockOracle) and z.is_block_constant
            and oracle.grid_size() <= get_config().enumeration_budget)


def _contract_elements(table: np.ndarray, rows: np.ndarray) -> float:
    """Σ_S table[S] Π_j rows[j, S_j] with element j on the j-th binary axis."""
    t = table
    for row in rows:
        t = row @ t.reshape(2, -1)
    return float(t[0])


def _contract_blocks(grid: np.ndarray, weights) -> float:
    t = grid
    for w in weights:
        t = np.tensordot(w, t, axes=([0], [0]))
    return float(t)


def _element_rows(p: np.ndarray) -> np.ndarray:
    return np.stack([1.0 - p, p], axis=1)


def _block_weights(sizes: np.ndarray, p: np.ndarray):
    return [binom.pmf(np.arange(s + 1), s, q) for s, q in zip(sizes, p)]


def _block_gradient_weight(size: int, q: float) -> np.ndarray:
    # count = 1 + Bin(size-1, q) with the element, Bin(size-1, q) without
    c = np.arange(size + 1)
    return binom.pmf(c - 1, size - 1, q) - binom.pmf(c, size - 1, q)


def _resolve_mode(oracle: SetFunctionOracle, z: FractionalPoint, cfg: EstimatorConfig) -> str:
    cfg.validate()
    _check_block_point(oracle, z)
    if cfg.mode == EstimatorMode.MONTE_CARLO:
        return "monte_carlo"
    if cfg.mode == EstimatorMode.EXACT_ENUM:
        if oracle.n <= get_config().exact_enum_max_n:
            return "elements"
        if _block_exact_allowed(oracle, z):
            return "blocks"
        raise EstimatorBudgetError(
            f"exact_enum needs n <= {get_config().exact_enum_max_n} or a block grid within "
            f"{get_config().enumeration_budget} count vectors (n = {oracle.n})"
        )
    if not isinstance(oracle, BlockOracle) or not z.is_block_constant:
        raise ValueError("block_exact needs a block-symmetric oracle and a block-constant point")
    if oracle.grid_size() > get_config().enumeration_budget:
        raise EstimatorBudgetError(
            f"block grid has {oracle.grid_size():.3g} count vectors, budget is {get_config().enumeration_budget}"
        )
    return "blocks"


def _mean_with_error(samples: np.ndarray) -> Estimate:
    m = samples.size
    std_error = float(samples.std(ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return Estimate(value=float(samples.mean()), std_error=std_error)


def _membership_values_chunked(oracle: SetFunctionOracle, masks_fn, m: int) -> np.ndarray:
    rows = max(1, MASK_CHUNK_ENTRIES // max(oracle.n, 1))
    return np.concatenate([oracle.membership_values(masks_fn(min(rows, m - start)))
                           for start in range(0, m, rows)])


def multilinear_value(oracle: SetFunctionOracle, z: FractionalPoint, cfg: EstimatorConfig) -> Estimate:
    """F(z) = E[f(R_z)] with R_z containing each element e independently with probability z_e."""
    route = _resolve_mode(oracle, z, cfg)
    if route == "elements":
        return Estimate(_contract_elements(oracle.value_table(), _element_rows(_dense(oracle, z))))
    if route == "blocks":
        return Estimate(_contract_blocks(oracle.count_grid_values(), _block_weights(oracle.group_sizes, z.coords)))

    rng = _sample_rng(cfg, z, 0)
    if isinstance(oracle, BlockOracle) and z.is_block_constant:
        counts = rng.binomial(oracle.group_sizes, z.coords, size=(cfg.samples, oracle.num_groups))
        return _mean_with_error(oracle.count_values(counts))
    dense = _dense(oracle, z)
    values = _membership_values_chunked(oracle, lambda rows: rng.random((rows, oracle.n)) < dense, cfg.samples)
    return _mean_with_error(values)


def gradient(oracle: SetFunctionOracle, z: FractionalPoint, i: int, cfg: EstimatorConfig) -> Estimate:
    """∂F/∂z_i = F(z with z_i = 1) - F(z with z_i = 0).

    For block-constant points ``i`` indexes a block and the result is the
    derivative with respect to any single element of that block.
    """
    route = _resolve_mode(oracle, z, cfg)
    dimension = z.coords.size
    if not 0 <= i < dimension:
        raise ValueError(f"Coordinate {i} outside [0, {dimension})")

    if route == "elements":
        if z.is_block_constant:
            members = np.flatnonzero(oracle.partition.labels == i)
            i = int(members[0])
        rows = _element_rows(_dense(oracle, z))
        rows[i] = (-1.0, 1.0)
        return Estimate(_contract_elements(oracle.value_table(), rows))
    if route == "blocks":
        weights = _block_weights(oracle.group_sizes, z.coords)
        weights[i] = _block_gradient_weight(int(oracle.group_sizes[i]), float(z.coords[i]))
        return Estimate(_contract_blocks(oracle.count_grid_values(), weights))

    rng = _sample_rng(cfg, z, i + 1)
    m = cfg.samples
    if isinstance(oracle, BlockOracle) and z.is_block_constant:
        trials = oracle.group_sizes.copy()
        trials[i] -= 1
        counts = rng.binomial(trials, z.coords, size=(m, oracle.num_groups))
        plus = counts.copy()
        plus[:, i] += 1
        return _mean_with_error(oracle.count_values(plus) - oracle.count_values(counts))
    dense = _dense(oracle, z)
    masks = rng.random((m, oracle.n)) < dense
    plus = masks.copy()
    plus[:, i] = True
    masks[:, i] = False
    return _mean_with_error(oracle.membership_values(plus) - oracle.membership_values(masks))


def gradient_vector(oracle: SetFunctionOracle, z: FractionalPoint, cfg: EstimatorConfig) -> Tuple[np.ndarray, np.ndarray]:
    """All coordinate derivatives with their standard errors."""
    estimates = [gradient(oracle, z, i, cfg) for i in range(z.coords.size)]
    return (np.array([e.value for e in estimates]), np.array([e.std_error for e in estimates]))


def box_project(target: PointLike, lo: PointLike, hi: PointLike) -> PointLike:
    """Coordinate-wise clamp of ``target`` into [lo, hi]."""
    t = target.coords if isinstance(target, FractionalPoint) else np.asarray(target, dtype=float)
    low = lo.coords if isinstance(lo, FractionalPoint) else np.asarray(lo, dtype=float)
    high = hi.coords if isinstance(hi, FractionalPoint) else np.asarray(hi, dtype=float)
    if np.any(low > high):
        raise ValueError("Box is empty: lo exceeds hi at some coordinate")
    clamped = np.minimum(np.maximum(t, low), high)
    if isinstance(target, FractionalPoint):
        return FractionalPoint(coords=clamped, block_sizes=target.block_sizes)
    return clamped


def project_weighted_simplex(v: np.ndarray, w: np.ndarray, mass: float, iterations: int = 200) -> np.ndarray:
    """Euclidean projection onto {z >= 0, w·z = mass} for positive weights w.

    The projection is max(v - τw, 0) with τ found by bisection.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    lo = min(float(np.min(v / w)), (float(w @ v) - mass) / float(w @ w)) - 1.0
    hi = float(np.max(v / w))
    for _ in range(iterations):
        tau = 0.5 * (lo + hi)
        if w @ np.maximum(v - tau * w, 0.0) > mass:
            lo = tau
        else:
            hi = tau
    return np.maximum(v - 0.5 * (lo + hi) * w, 0.0)


def project_halfspace_orthant(v: np.ndarray, w: np.ndarray, mass: float) -> np.ndarray:
    """Euclidean projection onto {z >= 0, w·z >= mass}."""
    clipped = np.maximum(np.asarray(v, dtype=float), 0.0)
    if w @ clipped >= mass:
        return clipped
    return project_weighted_simplex(v, w, mass)


class ContinuousProblem:
    """F and ∇F of an oracle in full or block-reduced coordinates.

    In reduced coordinates one variable stands for a whole block and
    ``multiplicity`` holds the block sizes, so inner products with the all-ones
    direction of the full space become multiplicity-weighted sums.
    """

    def __init__(self, oracle: SetFunctionOracle, cfg: Optional[EstimatorConfig] = None, reduced: bool = False):
        if reduced and not oracle.block_symmetric:
            raise ValueError("Only block-symmetric oracles can be reduced to block coordinates")
        self.oracle = oracle
        self.cfg = cfg or EstimatorConfig()
        self.reduced = reduced
        if reduced:
            self.multiplicity = oracle.group_sizes.astype(float)
        else:
            self.multiplicity = np.ones(oracle.n)
        self.dimension = self.multiplicity.size
        logger.debug(f"ContinuousProblem initialized: dimension={self.dimension}, mode={self.cfg.mode.value}")

    def point(self, z: np.ndarray) -> FractionalPoint:
        if self.reduced:
            return FractionalPoint(coords=z, block_sizes=self.oracle.group_sizes)
        return FractionalPoint(coords=z)

    def value(self, z: np.ndarray) -> float:
        return multilinear_value(self.oracle, self.point(z), self.cfg).value

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return gradient_vector(self.oracle, self.point(z), self.cfg)[0]

    def integral_value(self, z: np.ndarray) -> float:
        """Value of the set obtained by rounding: counts round(z_b·|b|) per block, or z_e >= ½."""
        if self.reduced:
            counts = np.rint(np.asarray(z) * self.oracle.group_sizes).astype(np.int64)
            return float(self.oracle.count_values(counts[None, :])[0])
        return float(self.oracle.membership_values((np.asarray(z) >= 0.5)[None, :])[0])

    def query_cost(self, kind: str) -> int:
        """Oracle queries charged for one request of the given kind."""
        samples = self.cfg.samples if self.cfg.mode == EstimatorMode.MONTE_CARLO else 1
        if kind == "gradient":
            return 2 * self.dimension * samples
        if kind == "value":
            return samples
        return 1


def block_symmetric_reduce(oracle: SetFunctionOracle, cfg: Optional[EstimatorConfig] = None) -> ContinuousProblem:
    """Surrogate over one coordinate per layer/block for a block-symmetric oracle."""
    if not oracle.block_symmetric:
        raise ValueError(f"{type(oracle).__name__} does not declare block symmetry")
    return ContinuousProblem(oracle, cfg, reduced=True)

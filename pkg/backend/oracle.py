"""
Value-oracle core: hidden partitions, batched queries and round accounting.

Block oracles depend on a set only through its intersection counts with the
layers and blocks, so batches are evaluated as count matrices. Explicit
oracles cover small user-supplied instances and are evaluated on membership
masks.
"""

import logging
import math
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from backend import instances
from shared.config import get_config
from shared.errors import SpecError
from shared.models import (
    BlockPartition, CountProfile, CustomKind, InstanceFamily, InstanceParams, InstanceSpec,
    LogRoundParams, PolyRoundParams, RoundLedger, ValidationReport,
)

logger = logging.getLogger(__name__)

TABLE_CHUNK = 1 << 16


def sample_partition(layer_sizes: Sequence[int], block_sizes: Sequence[int], seed: int,
                     n: Optional[int] = None) -> BlockPartition:
    """Uniformly random labeling of [n] with the given layer and block sizes.

    The canonical labeling (all of X_1, then X_2, ..., then the blocks) is
    shuffled by a generator seeded with ``seed``.
    """
    sizes = [int(s) for s in list(layer_sizes) + list(block_sizes)]
    if any(s < 1 for s in sizes):
        raise ValueError(f"Every layer and block needs at least one element, got sizes {sizes}")
    total = sum(sizes)
    if n is not None and total != n:
        raise ValueError(f"Sizes sum to {total} but the ground set has {n} elements")
    canonical = np.repeat(np.arange(len(sizes), dtype=np.int32), sizes)
    rng = np.random.default_rng(seed)
    labels = canonical[rng.permutation(total)]
    return BlockPartition(n=total, layer_sizes=list(layer_sizes), block_sizes=list(block_sizes),
                          labels=labels, seed=seed)


def _as_ids(query, n: int) -> np.ndarray:
    ids = np.unique(np.asarray(query, dtype=np.int64).ravel())
    if ids.size and (ids[0] < 0 or ids[-1] >= n):
        raise ValueError(f"Query references element outside the ground set of size {n}")
    return ids


def profile_of(partition: BlockPartition, subset, k: Union[int, np.ndarray]) -> CountProfile:
    """Intersection counts of ``subset`` with every layer and block, divided by ``k``."""
    if np.any(np.asarray(k) < 1):
        raise ValueError("Normalizer k must be at least 1")
    ids = _as_ids(subset, partition.n)
    counts = np.bincount(partition.labels[ids], minlength=partition.num_layers + partition.num_blocks)
    return CountProfile.from_vector(counts / np.asarray(k, dtype=float), partition.num_layers)


@dataclass
class QueryBatch:
    """Queries of one adaptive round.

    Besides explicit ``sets``, a batch may hold single-element variations of a
    ``base`` set: ``base ∪ {e}`` for each e in ``additions`` and ``base \\ {e}``
    for each e in ``removals``. Values come back in that order.
    """
    sets: List[np.ndarray] = field(default_factory=list)
    base: Optional[np.ndarray] = None
    additions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    removals: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.sets) + int(np.size(self.additions)) + int(np.size(self.removals))

    def validated(self, n: int) -> "QueryBatch":
        sets = [_as_ids(s, n) for s in self.sets]
        additions = np.asarray(self.additions, dtype=np.int64)
        removals = np.asarray(self.removals, dtype=np.int64)
        base = None
        if self.base is not None:
            base = _as_ids(self.base, n)
            for name, ids in (("additions", additions), ("removals", removals)):
                if ids.size and (ids.min() < 0 or ids.max() >= n):
                    raise ValueError(f"Query {name} reference elements outside the ground set of size {n}")
            if np.any(np.isin(additions, base)):
                raise ValueError("Additions must lie outside the base set")
            if not np.all(np.isin(removals, base)):
                raise ValueError("Removals must lie inside the base set")
        elif additions.size or removals.size:
            raise ValueError("Single-element variations need a base set")
        return QueryBatch(sets=sets, base=base, additions=additions, removals=removals)

    def split(self, parts: int) -> List["QueryBatch"]:
        """Consecutive sub-batches whose concatenated answers equal this batch's."""
        pieces = []
        for chunk in np.array_split(np.arange(len(self.sets)), parts):
            if chunk.size:
                pieces.append(QueryBatch(sets=[self.sets[i] for i in chunk]))
        for name in ("additions", "removals"):
            ids = getattr(self, name)
            for chunk in np.array_split(ids, parts):
                if chunk.size:
                    pieces.append(QueryBatch(base=self.base, **{name: chunk}))
        return pieces


class SetFunctionOracle(ABC):
    """Value oracle over the ground set {0, ..., n-1}."""

    family: InstanceFamily = InstanceFamily.CUSTOM_SMALL
    monotone: bool = True
    block_symmetric: bool = False

    def __init__(self, n: int):
        self.n = int(n)
        self._table = None
        self._table_lock = threading.Lock()
        self.validation: Optional[ValidationReport] = None

    @abstractmethod
    def membership_values(self, masks: np.ndarray) -> np.ndarray:
        """Values of the sets given as rows of a boolean (m, n) matrix."""

    @property
    @abstractmethod
    def opt_value(self) -> float:
        """Maximum of f over all subsets."""

    def evaluate(self, batch: QueryBatch) -> np.ndarray:
        masks = []
        if batch.sets:
            block = np.zeros((len(batch.sets), self.n), dtype=bool)
            for row, ids in enumerate(batch.sets):
                block[row, ids] = True
            masks.append(block)
        if batch.base is not None:
            base_mask = np.zeros(self.n, dtype=bool)
            base_mask[batch.base] = True
            for ids, member in ((batch.additions, True), (batch.removals, False)):
                if ids.size:
                    block = np.tile(base_mask, (ids.size, 1))
                    block[np.arange(ids.size), ids] = member
                    masks.append(block)
        if not masks:
            return np.empty(0)
        return self.membership_values(np.concatenate(masks, axis=0))

    def evaluate_set(self, subset) -> float:
        """Value of a single set, outside any round accounting."""
        return float(self.evaluate(QueryBatch(sets=[subset]).validated(self.n))[0])

    def value_table(self) -> np.ndarray:
        """Values of all 2^n subsets; element j is bit n-1-j of the index."""
        limit = get_config().exact_enum_max_n
        if self.n > limit:
            raise ValueError(f"Value table needs n <= {limit}, got {self.n}")
        with self._table_lock:
            if self._table is None:
                shifts = np.arange(self.n - 1, -1, -1, dtype=np.int64)
                table = np.empty(1 << self.n)
                for start in range(0, 1 << self.n, TABLE_CHUNK):
                    idx = np.arange(start, min(start + TABLE_CHUNK, 1 << self.n), dtype=np.int64)
                    masks = ((idx[:, None] >> shifts) & 1).astype(bool)
                    table[idx] = self.membership_values(masks)
                self._table = table
        return self._table


class BlockOracle(SetFunctionOracle):
    """Oracle whose value depends only on the counts per layer and block."""

    block_symmetric = True

    def __init__(self, partition: BlockPartition, normalizer: np.ndarray):
        super().__init__(partition.n)
        self.partition = partition
        self.normalizer = np.asarray(normalizer, dtype=float)
        self._onehot = np.eye(self.num_groups, dtype=np.int64)
        self._grid = None
        logger.info(f"{type(self).__name__} initialized: n={self.n}, "
                    f"layers={partition.layer_sizes}, blocks={partition.block_sizes}")

    @property
    def num_layers(self) -> int:
        return self.partition.num_layers

    @property
    def num_groups(self) -> int:
        return self.partition.num_layers + self.partition.num_blocks

    @property
    def group_sizes(self) -> np.ndarray:
        return self.partition.group_sizes

    @abstractmethod
    def profile_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Values on normalized profiles given as (m, L) and (m, l') arrays."""

    def count_values(self, counts: np.ndarray) -> np.ndarray:
        normalized = np.atleast_2d(np.asarray(counts, dtype=float)) / self.normalizer
        return self.profile_values(normalized[:, :self.num_layers], normalized[:, self.num_layers:])

    def counts_of(self, ids: np.ndarray) -> np.ndarray:
        return np.bincount(self.partition.labels[ids], minlength=self.num_groups)

    def profile(self, subset) -> CountProfile:
        return profile_of(self.partition, subset, self.normalizer)

    def membership_values(self, masks: np.ndarray) -> np.ndarray:
        counts = np.stack([masks[:, self.partition.labels == g].sum(axis=1)
                           for g in range(self.num_groups)], axis=1)
        return self.count_values(counts)

    def evaluate(self, batch: QueryBatch) -> np.ndarray:
        rows = []
        if batch.sets:
            rows.append(np.stack([self.counts_of(ids) for ids in batch.sets]))
        if batch.base is not None:
            base_counts = self.counts_of(batch.base)
            if batch.additions.size:
                rows.append(base_counts + self._onehot[self.partition.labels[batch.additions]])
            if batch.removals.size:
                rows.append(base_counts - self._onehot[self.partition.labels[batch.removals]])
        if not rows:
            return np.empty(0)
        return self.count_values(np.concatenate(rows, axis=0))

    def grid_size(self) -> int:
        return int(np.prod((self.group_sizes + 1).astype(float)))

    def count_grid_values(self) -> np.ndarray:
        """Values on every count vector, shaped (|G_1|+1, ..., |G_m|+1)."""
        with self._table_lock:
            if self._grid is None:
                shape = tuple(int(s) + 1 for s in self.group_sizes)
                counts = np.indices(shape).reshape(len(shape), -1).T
                self._grid = self.count_values(counts).reshape(shape)
        return self._grid


class LogRoundOracle(BlockOracle):
    family = InstanceFamily.LOG_ROUND

    def __init__(self, partition: BlockPartition, params: LogRoundParams):
        self.params = params
        super().__init__(partition, np.full(partition.num_layers + partition.num_blocks, float(params.k)))

    def profile_values(self, x, y):
        return instances.log_round_values(x, y, self.params)

    def symmetric_values(self, x, y, known: int) -> np.ndarray:
        return -np.expm1(instances.symmetric_log_survival(x, y, known, self.params))

    @property
    def opt_value(self) -> float:
        return self.params.cap


class PolyRoundOracle(BlockOracle):
    family = InstanceFamily.POLY_ROUND

    def __init__(self, partition: BlockPartition, params: PolyRoundParams):
        self.params = params
        super().__init__(partition, np.full(partition.num_layers + partition.num_blocks, float(params.k)))

    def profile_values(self, x, y):
        return instances.poly_round_values(x, y, self.params)

    def symmetric_values(self, x, y, known: int) -> np.ndarray:
        return -np.expm1(instances.symmetric_poly_log_survival(x, y, known, self.params))

    @property
    def opt_value(self) -> float:
        return self.params.cap


class InvEOracle(BlockOracle):
    """Blocks only; the value is g of the block coordinates."""
    family = InstanceFamily.ONE_MINUS_INV_E

    def __init__(self, partition: BlockPartition, epsilon: float, k: int):
        self.epsilon = epsilon
        self.k = k
        super().__init__(partition, np.full(partition.num_blocks, float(k)))

    def profile_values(self, x, y):
        return instances.inv_e_values(y, self.epsilon)

    def symmetric_values(self, x, y, known: int = 0) -> np.ndarray:
        return instances.symmetric_inv_e_values(y, self.epsilon)

    @property
    def opt_value(self) -> float:
        return 1.0 - self.epsilon


class DirectedCutOracle(BlockOracle):
    """δ·OPT·x_1(1 - x_2) over two layers, normalized per layer."""
    family = InstanceFamily.DIRECTED_CUT
    monotone = False

    def __init__(self, partition: BlockPartition, delta: float, opt_scale: float):
        self.delta = delta
        self.opt_scale = opt_scale
        super().__init__(partition, partition.group_sizes.astype(float))

    def profile_values(self, x, y):
        return instances.directed_cut_values(x, self.delta, self.opt_scale)

    @property
    def opt_value(self) -> float:
        return self.delta * self.opt_scale


class ExplicitOracle(SetFunctionOracle):
    """Small explicit set function: cut, directed cut, coverage or modular."""

    def __init__(self, kind: CustomKind, n: int, edges: Optional[np.ndarray] = None,
                 cover: Optional[np.ndarray] = None, item_weights: Optional[np.ndarray] = None,
                 weights: Optional[np.ndarray] = None):
        super().__init__(n)
        self.kind = kind
        self.monotone = kind in (CustomKind.COVERAGE, CustomKind.MODULAR)
        self.edges = None if edges is None else np.asarray(edges, dtype=float).reshape(-1, 3)
        self.cover = cover
        self.item_weights = item_weights
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        logger.info(f"ExplicitOracle initialized: kind={kind.value}, n={n}")

    def membership_values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        if self.kind == CustomKind.MODULAR:
            return masks.astype(float) @ self.weights
        if self.kind == CustomKind.COVERAGE:
            covered = (masks.astype(np.int64) @ self.cover.astype(np.int64)) > 0
            return covered.astype(float) @ self.item_weights
        u = self.edges[:, 0].astype(np.int64)
        v = self.edges[:, 1].astype(np.int64)
        w = self.edges[:, 2]
        if self.kind == CustomKind.CUT:
            crossing = masks[:, u] != masks[:, v]
        else:
            crossing = masks[:, u] & ~masks[:, v]
        return crossing.astype(float) @ w

    @property
    def opt_value(self) -> float:
        return float(self.value_table().max())


# Batch submission ---------------------------------------------------------

def _workers(workers: Optional[int]) -> int:
    return max(1, int(workers if workers is not None else get_config().batch_workers))


def _evaluate_batch(oracle: SetFunctionOracle, batch: QueryBatch, workers: int) -> np.ndarray:
    if workers == 1 or len(batch) < 2 * workers:
        return oracle.evaluate(batch)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        parts = list(executor.map(oracle.evaluate, batch.split(workers)))
    return np.concatenate(parts)


def submit_batch(oracle: SetFunctionOracle, queries: Union[QueryBatch, Sequence], ledger: RoundLedger,
                 label: str = "", workers: Optional[int] = None) -> np.ndarray:
    """Evaluate one round of independent queries and charge it to the ledger."""
    batch = queries if isinstance(queries, QueryBatch) else QueryBatch(sets=list(queries))
    if len(batch) == 0:
        raise ValueError("Cannot submit an empty batch")
    batch = batch.validated(oracle.n)
    ledger.record(len(batch), label)
    values = _evaluate_batch(oracle, batch, _workers(workers))
    logger.debug(f"Batch '{label}' answered {values.size} queries")
    return values


def submit_count_batch(oracle: BlockOracle, counts: np.ndarray, ledger: RoundLedger,
                       label: str = "", workers: Optional[int] = None) -> np.ndarray:
    """Evaluate sets given by their counts per group as one round."""
    if not isinstance(oracle, BlockOracle):
        raise ValueError("Count queries need a block-symmetric oracle")
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    if counts.shape[0] == 0:
        raise ValueError("Cannot submit an empty batch")
    if counts.shape[1] != oracle.num_groups or np.any(counts < 0) or np.any(counts > oracle.group_sizes):
        raise ValueError("Count query does not fit the oracle's partition")
    ledger.record(counts.shape[0], label)
    workers = _workers(workers)
    if workers == 1 or counts.shape[0] < 2 * workers:
        return oracle.count_values(counts)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        parts = list(executor.map(oracle.count_values, np.array_split(counts, workers)))
    return np.concatenate(parts)


def submit_profile_batch(oracle: BlockOracle, profiles: Sequence[CountProfile],
                         ledger: Optional[RoundLedger] = None, bypass_ledger: bool = False,
                         label: str = "profiles") -> np.ndarray:
    """Evaluate queries given directly as normalized profiles.

    These need not correspond to realizable sets. Without ``bypass_ledger``
    the batch is charged to ``ledger`` like any other round.
    """
    if not isinstance(oracle, BlockOracle):
        raise ValueError("Profile queries need a block-symmetric oracle")
    if not profiles:
        raise ValueError("Cannot submit an empty batch")
    if ledger is None and not bypass_ledger:
        raise ValueError("Profile queries need a ledger unless bypass_ledger is set")
    x = np.stack([p.x for p in profiles])
    y = np.stack([p.y for p in profiles])
    if x.shape[1] != oracle.num_layers or y.shape[1] != oracle.partition.num_blocks:
        raise ValueError("Profile dimensions do not match the oracle")
    if not bypass_ledger:
        ledger.record(len(profiles), label)
    return oracle.profile_values(x, y)


# Specs --------------------------------------------------------------------

@dataclass
class InstanceLayout:
    """Resolved sizes and parameters of a spec."""
    layer_sizes: List[int]
    block_sizes: List[int]
    k: int
    epsilon: float
    ell_prime: int
    delta: float

    @property
    def n(self) -> int:
        return sum(self.layer_sizes) + sum(self.block_sizes)


def _check_sizes(name: str, sizes: Optional[List[int]]):
    if sizes is None:
        return
    if not sizes or any((not isinstance(s, int)) or s < 1 for s in sizes):
        raise SpecError(f"{name} must be a non-empty list of positive integers")


def _check_ranges(spec: InstanceSpec):
    p = spec.params
    family = spec.family
    if not 0.0 < p.alpha <= instances.ALPHA_MAX:
        raise SpecError(f"α out of range (0, 1/24]: {p.alpha}")
    if family in (InstanceFamily.LOG_ROUND, InstanceFamily.POLY_ROUND, InstanceFamily.ONE_MINUS_INV_E):
        if not 0.0 < p.epsilon < 1.0:
            raise SpecError(f"ε out of range (0, 1): {p.epsilon}")
    if family in (InstanceFamily.POLY_ROUND, InstanceFamily.DIRECTED_CUT) and not spec.strict_coupling:
        if not 0.0 < p.delta <= 1.0:
            raise SpecError(f"δ out of range (0, 1]: {p.delta}")
    for name in ("ell", "ell_prime", "k", "r"):
        value = getattr(p, name)
        if not isinstance(value, int) or value < 1:
            raise SpecError(f"{name} must be a positive integer, got {value!r}")
    if p.opt_scale <= 0:
        raise SpecError(f"opt_scale must be positive, got {p.opt_scale}")
    _check_sizes("layer_sizes", p.layer_sizes)
    _check_sizes("block_sizes", p.block_sizes)


def _layout(spec: InstanceSpec, report: ValidationReport) -> InstanceLayout:
    p = spec.params
    family = spec.family

    if family == InstanceFamily.DIRECTED_CUT:
        layers = p.layer_sizes or [4, 4]
        if len(layers) != 2:
            raise SpecError("directed_cut needs exactly two layer sizes")
        return InstanceLayout(list(layers), [], p.k, p.epsilon, 0, p.delta)

    if family == InstanceFamily.LOG_ROUND:
        if spec.strict_coupling:
            n = 2 ** (3 * p.ell)
            ell_prime = max(1, int(math.floor(2 ** (p.ell / 8.0))))
            k = (2 ** (2 * p.ell)) // ell_prime
            layers = [2 ** (3 * p.ell - i) for i in range(1, p.ell + 1)]
            blocks = [k] * ell_prime
            report.rebalanced = n - sum(layers) - sum(blocks)
            blocks[0] += report.rebalanced
            return InstanceLayout(layers, blocks, k, 2.0 * n ** (-1.0 / 24.0), ell_prime, p.delta)
        layers = p.layer_sizes or [p.ell_prime * p.k * 2 ** (p.ell - i) for i in range(1, p.ell + 1)]
        blocks = p.block_sizes or [p.k] * p.ell_prime
        return InstanceLayout(list(layers), list(blocks), p.k, p.epsilon, len(blocks), p.delta)

    if family == InstanceFamily.POLY_ROUND:
        if spec.strict_coupling:
            if not p.n or p.n < 2:
                raise SpecError("strict poly_round needs params.n >= 2")
            n = int(p.n)
            delta = (2.0 / 15.0) * math.log(n) / p.r
            if not 0.0 < delta <= 1.0:
                raise SpecError(f"δ = (2/15) ln n / r = {delta} falls outside (0, 1]")
            ell_prime = max(1, int(math.floor(n ** 0.2)))
            weight = sum((1.0 + delta) ** (p.r - i) for i in range(1, p.r + 1)) + 1.0
            k = int(math.floor(n / weight / ell_prime))
            if k < 1:
                raise SpecError(f"n = {n} is too small for r = {p.r}")
            layers = [int(math.floor(ell_prime * k * (1.0 + delta) ** (p.r - i))) for i in range(1, p.r + 1)]
            blocks = [k] * ell_prime
            report.rebalanced = n - sum(layers) - sum(blocks)
            blocks[0] += report.rebalanced
            return InstanceLayout(layers, blocks, k, n ** (-0.1), ell_prime, delta)
        layers = p.layer_sizes or [int(round(p.ell_prime * p.k * (1.0 + p.delta) ** (p.r - i)))
                                   for i in range(1, p.r + 1)]
        blocks = p.block_sizes or [p.k] * p.ell_prime
        return InstanceLayout(list(layers), list(blocks), p.k, p.epsilon, len(blocks), p.delta)

    if family == InstanceFamily.ONE_MINUS_INV_E:
        if spec.strict_coupling:
            side = 2 ** p.ell
            n = side * side
            return InstanceLayout([], [side] * side, side, 2.0 / n ** 0.25, side, p.delta)
        blocks = p.block_sizes or [p.k] * p.ell_prime
        return InstanceLayout([], list(blocks), p.k, p.epsilon, len(blocks), p.delta)

    raise SpecError(f"Family {family.value} has no block layout")


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


def _check_couplings(spec: InstanceSpec, layout: InstanceLayout, report: ValidationReport):
    family = spec.family
    if family == InstanceFamily.DIRECTED_CUT:
        return
    eps = layout.epsilon
    if layout.ell_prime < 2.0 / eps ** 2:
        report.warn(f"ℓ' = {layout.ell_prime} < 2/ε² = {2.0 / eps ** 2:.4g}: the symmetric branch of g "
                    f"is only guaranteed for block coordinates up to ε", coupling="ell_prime >= 2/epsilon^2")
    if report.rebalanced:
        report.warn(f"Rounding moved {report.rebalanced} elements into Y_1")
    n = layout.n
    p = spec.params
    if p.cardinality_bound is not None and not 1 <= p.cardinality_bound <= n:
        raise SpecError(f"cardinality_bound must lie in [1, {n}]")
    if spec.strict_coupling:
        return
    if family == InstanceFamily.LOG_ROUND:
        L = len(layout.layer_sizes)
        if n != 2 ** (3 * L):
            report.warn(f"n = {n} differs from 2^(3ℓ) = {2 ** (3 * L)}", coupling="n = 2^(3 ell)")
        if layout.ell_prime != int(math.floor(2 ** (L / 8.0))):
            report.warn(f"ℓ' = {layout.ell_prime} differs from 2^(ℓ/8)", coupling="ell_prime = 2^(ell/8)")
        if not _near(eps, 2.0 * n ** (-1.0 / 24.0)):
            report.warn(f"ε = {eps} differs from 2n^(-1/24) = {2.0 * n ** (-1.0 / 24.0):.4g}",
                        coupling="epsilon = 2 n^(-1/24)")
    elif family == InstanceFamily.POLY_ROUND:
        r = len(layout.layer_sizes)
        if not _near(layout.delta, (2.0 / 15.0) * math.log(n) / r):
            report.warn(f"δ = {layout.delta} differs from (2/15) ln n / r", coupling="delta = (2/15) ln n / r")
        if layout.ell_prime != int(math.floor(n ** 0.2)):
            report.warn(f"ℓ' = {layout.ell_prime} differs from n^(1/5)", coupling="ell_prime = n^(1/5)")
        if not _near(eps, n ** (-0.1)):
            report.warn(f"ε = {eps} differs from n^(-1/10) = {n ** (-0.1):.4g}", coupling="epsilon = n^(-1/10)")
        if layout.delta / (3.0 * r) <= eps:
            report.warn(f"δ/(3r) = {layout.delta / (3.0 * r):.4g} <= ε: the poly-round penalty bound is zero")
    elif family == InstanceFamily.ONE_MINUS_INV_E:
        if not _near(eps, 2.0 / n ** 0.25):
            report.warn(f"ε = {eps} differs from 2/n^(1/4)", coupling="epsilon = 2 n^(-1/4)")


def _custom_arrays(p: InstanceParams) -> dict:
    if p.kind is None:
        raise SpecError("custom_small needs params.kind")
    try:
        kind = CustomKind(p.kind)
    except ValueError:
        raise SpecError(f"Unknown custom kind '{p.kind}'")
    n = p.n
    limit = get_config().exact_enum_max_n
    if not isinstance(n, int) or not 1 <= n <= limit:
        raise SpecError(f"custom_small needs params.n in [1, {limit}]")
    arrays = {"kind": kind, "n": n}
    if kind in (CustomKind.CUT, CustomKind.DICUT):
        edges = []
        for edge in p.edges or []:
            if len(edge) not in (2, 3):
                raise SpecError(f"Edge {edge} must be [u, v] or [u, v, weight]")
            u, v = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) == 3 else 1.0
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise SpecError(f"Edge {edge} is not a proper edge of [0, {n})")
            if w < 0:
                raise SpecError(f"Edge {edge} has a negative weight")
            edges.append((u, v, w))
        arrays["edges"] = np.asarray(edges, dtype=float).reshape(-1, 3)
    elif kind == CustomKind.COVERAGE:
        sets = p.sets or []
        if len(sets) != n:
            raise SpecError("coverage needs one item list per element")
        items = 1 + max((max(s) for s in sets if s), default=-1)
        weights = np.asarray(p.item_weights if p.item_weights is not None else [1.0] * items, dtype=float)
        if weights.size < items or np.any(weights < 0):
            raise SpecError("item_weights must be non-negative and cover every item")
        cover = np.zeros((n, weights.size), dtype=bool)
        for element, covered in enumerate(sets):
            if any(t < 0 for t in covered):
                raise SpecError("Item ids must be non-negative")
            cover[element, list(covered)] = True
        arrays["cover"] = cover
        arrays["item_weights"] = weights
    else:
        weights = np.asarray(p.weights or [], dtype=float)
        if weights.size != n or np.any(weights < 0):
            raise SpecError("modular needs n non-negative weights")
        arrays["weights"] = weights
    return arrays


def validate_spec(spec: InstanceSpec) -> Tuple[ValidationReport, Optional[InstanceLayout]]:
    """Check ranges (raising SpecError) and list violated couplings."""
    report = ValidationReport(family=spec.family)
    if spec.family == InstanceFamily.CUSTOM_SMALL:
        _custom_arrays(spec.params)
        return report, None
    _check_ranges(spec)
    layout = _layout(spec, report)
    if spec.family == InstanceFamily.POLY_ROUND and not 0.0 < layout.delta <= 1.0:
        raise SpecError(f"δ out of range (0, 1]: {layout.delta}")
    _check_couplings(spec, layout, report)
    return report, layout


def build_oracle(spec: InstanceSpec) -> SetFunctionOracle:
    """Construct the oracle described by ``spec``; the partition uses ``spec.seed``."""
    report, layout = validate_spec(spec)
    p = spec.params
    if spec.family == InstanceFamily.CUSTOM_SMALL:
        oracle = ExplicitOracle(**_custom_arrays(p))
    else:
        partition = sample_partition(layout.layer_sizes, layout.block_sizes, spec.seed)
        if spec.family == InstanceFamily.LOG_ROUND:
            params = LogRoundParams(L=len(layout.layer_sizes), ell_prime=layout.ell_prime,
                                    epsilon=layout.epsilon, k=layout.k)
            oracle = LogRoundOracle(partition, params)
        elif spec.family == InstanceFamily.POLY_ROUND:
            params = PolyRoundParams(r=len(layout.layer_sizes), ell_prime=layout.ell_prime, delta=layout.delta,
                                     alpha=p.alpha, epsilon=layout.epsilon, k=layout.k)
            oracle = PolyRoundOracle(partition, params)
        elif spec.family == InstanceFamily.ONE_MINUS_INV_E:
            oracle = InvEOracle(partition, layout.epsilon, layout.k)
        else:
            oracle = DirectedCutOracle(partition, layout.delta, p.opt_scale)
    oracle.validation = report
    return oracle


def random_small_spec(kind: Union[str, CustomKind], n: int, seed: int) -> InstanceSpec:
    """Seeded random custom_small instance of the given kind."""
    kind = CustomKind(kind)
    rng = np.random.default_rng(seed)
    params = InstanceParams(kind=kind.value, n=n)
    if kind in (CustomKind.CUT, CustomKind.DICUT):
        edges = []
        for u in range(n):
            for v in range(n):
                if u == v or (kind == CustomKind.CUT and v < u):
                    continue
                if rng.random() < 0.5:
                    edges.append([u, v, round(float(rng.uniform(0.5, 1.5)), 6)])
        if not edges:
            edges.append([0, n - 1, 1.0])
        params.edges = edges
    elif kind == CustomKind.COVERAGE:
        items = 2 * n
        params.sets = [sorted(int(t) for t in rng.choice(items, size=int(rng.integers(1, 5)), replace=False))
                       for _ in range(n)]
        params.item_weights = [round(float(w), 6) for w in rng.uniform(0.5, 1.5, size=items)]
    else:
        params.weights = [round(float(w), 6) for w in rng.uniform(0.0, 1.0, size=n)]
    return InstanceSpec(family=InstanceFamily.CUSTOM_SMALL, params=params, seed=seed)

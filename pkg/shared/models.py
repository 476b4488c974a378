"""
Data models for the submodular adaptivity toolkit.
Defines instance specifications, partitions, count profiles, round ledgers,
estimator settings and the report objects written by the harness.
"""

import json
import logging
import threading
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import List, Optional, Dict, Any, Tuple

import numpy as np

from shared.errors import SpecError

logger = logging.getLogger(__name__)


class InstanceFamily(Enum):
    """Supported instance constructions."""
    LOG_ROUND = "log_round"
    POLY_ROUND = "poly_round"
    ONE_MINUS_INV_E = "one_minus_inv_e"
    DIRECTED_CUT = "directed_cut"
    CUSTOM_SMALL = "custom_small"


class CustomKind(Enum):
    """Set function kinds available for small explicit instances."""
    CUT = "cut"
    DICUT = "dicut"
    COVERAGE = "coverage"
    MODULAR = "modular"


class EstimatorMode(Enum):
    """How the multilinear extension is evaluated."""
    EXACT_ENUM = "exact_enum"
    BLOCK_EXACT = "block_exact"
    MONTE_CARLO = "monte_carlo"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class CheckStatus(Enum):
    """Outcome of a single property or inequality check."""
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not_applicable"


@dataclass
class BlockPartition:
    """Hidden partition of [n] into layers X_1..X_L and blocks Y_1..Y_l'.

    ``labels[e]`` is the group of element ``e``: layers use 0..L-1 and blocks
    use L..L+l'-1.
    """
    n: int
    layer_sizes: List[int]
    block_sizes: List[int]
    labels: np.ndarray
    seed: int

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes)

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.asarray(list(self.layer_sizes) + list(self.block_sizes), dtype=np.int64)

    def assignment(self, element: int) -> Tuple[str, int]:
        """Return ('X', i) or ('Y', j) with 1-based indices."""
        if not 0 <= element < self.n:
            raise ValueError(f"Element {element} outside ground set of size {self.n}")
        label = int(self.labels[element])
        if label < self.num_layers:
            return ("X", label + 1)
        return ("Y", label - self.num_layers + 1)

    def members(self, group: int) -> np.ndarray:
        """Element ids of a group label (sorted)."""
        return np.flatnonzero(self.labels == group)

    def layer_members(self, i: int) -> np.ndarray:
        """Element ids of layer X_i (1-based)."""
        return self.members(i - 1)

    def block_members(self, j: int) -> np.ndarray:
        """Element ids of block Y_j (1-based)."""
        return self.members(self.num_layers + j - 1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "layer_sizes": list(self.layer_sizes),
            "block_sizes": list(self.block_sizes),
            "seed": self.seed,
        }


@dataclass
class CountProfile:
    """Normalized intersection counts of a set with the layers and blocks."""
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if np.any(self.x < 0) or np.any(self.y < 0):
            raise ValueError("Count profile entries must be non-negative")

    @property
    def total_mass(self) -> float:
        return float(self.x.sum() + self.y.sum())

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @classmethod
    def from_vector(cls, vector: np.ndarray, num_layers: int) -> "CountProfile":
        vector = np.asarray(vector, dtype=float)
        return cls(x=vector[:num_layers], y=vector[num_layers:])

    def __add__(self, other: "CountProfile") -> "CountProfile":
        return CountProfile(x=self.x + other.x, y=self.y + other.y)

    def to_dict(self) -> Dict[str, Any]:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "total_mass": self.total_mass}


@dataclass
class RoundLedger:
    """Adaptive-round accounting: one entry per submitted batch."""
    batches: List[Tuple[int, int]] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def rounds_used(self) -> int:
        return len(self.batches)

    @property
    def total_queries(self) -> int:
        return sum(count for _, count in self.batches)

    def record(self, query_count: int, label: str = "") -> int:
        """Append a batch atomically and return its id."""
        if query_count < 1:
            raise ValueError("A batch must contain at least one query")
        with self._lock:
            batch_id = len(self.batches)
            self.batches.append((batch_id, int(query_count)))
            self.labels.append(label)
        logger.debug(f"Round {batch_id + 1}: {query_count} queries ({label or 'unlabelled'})")
        return batch_id

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rounds_used": self.rounds_used,
            "batches": [{"id": b, "queries": q, "label": lbl}
                        for (b, q), lbl in zip(self.batches, self.labels)],
        }


@dataclass
class InstanceParams:
    """Parameters of an instance construction.

    Only the fields relevant to a family are read; the rest keep defaults.
    """
    epsilon: float = 0.02
    delta: float = 0.4
    alpha: float = 1.0 / 24.0
    ell: int = 8  # layers L of the log-round construction
    ell_prime: int = 4
    k: int = 200
    r: int = 8  # layers of the poly-round construction
    cardinality_bound: Optional[int] = None
    opt_scale: float = 1.0
    n: Optional[int] = None  # strict poly-round only

    # Explicit size overrides
    layer_sizes: Optional[List[int]] = None
    block_sizes: Optional[List[int]] = None

    # custom_small
    kind: Optional[str] = None
    edges: Optional[List[List[float]]] = None  # [u, v, weight]
    sets: Optional[List[List[int]]] = None  # element -> covered items
    item_weights: Optional[List[float]] = None
    weights: Optional[List[float]] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert parameters to dictionary, dropping unset optional fields."""
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                data[f.name] = value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InstanceParams":
        """Create parameters from dictionary, filtering unknown keys."""
        if not isinstance(data, dict):
            raise SpecError("Instance params must be a JSON object")
        valid_fields = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - valid_fields)
        if unknown:
            logger.warning(f"Ignoring unknown instance parameters: {', '.join(unknown)}")
        filtered_data = {k: v for k, v in data.items() if k in valid_fields}
        try:
            return cls(**filtered_data)
        except TypeError as e:
            raise SpecError(f"Invalid instance parameters: {e}") from e


@dataclass
class InstanceSpec:
    """Which construction to build, with its parameters and seed."""
    family: InstanceFamily = InstanceFamily.LOG_ROUND
    params: InstanceParams = field(default_factory=InstanceParams)
    seed: int = 0
    strict_coupling: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "strict_coupling": self.strict_coupling,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InstanceSpec":
        """Create a spec from its JSON form."""
        if not isinstance(data, dict):
            raise SpecError("Instance spec must be a JSON object")
        try:
            family = InstanceFamily(data.get("family", InstanceFamily.LOG_ROUND.value))
        except ValueError:
            known = ", ".join(f.value for f in InstanceFamily)
            raise SpecError(f"Unknown family '{data.get('family')}' (expected one of: {known})")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
            raise SpecError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        return cls(
            family=family,
            params=InstanceParams.from_dict(data.get("params", {}) or {}),
            seed=seed,
            strict_coupling=bool(data.get("strict_coupling", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "InstanceSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise SpecError(f"Instance spec is not valid JSON: {e}") from e
        return cls.from_dict(data)


@dataclass(frozen=True)
class LogRoundParams:
    """Parameters of the log-round construction evaluated on count profiles."""
    L: int
    ell_prime: int
    epsilon: float
    k: int = 1

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise SpecError(f"ε out of range (0, 1): {self.epsilon}")
        if self.L < 1 or self.ell_prime < 1 or self.k < 1:
            raise SpecError("L, ℓ' and k must all be at least 1")

    @property
    def cap(self) -> float:
        return 1.0 - self.epsilon


@dataclass(frozen=True)
class PolyRoundParams:
    """Parameters of the poly-round construction evaluated on count profiles."""
    r: int
    ell_prime: int
    delta: float
    alpha: float
    epsilon: float
    k: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0 / 24.0 + 1e-15:
            raise SpecError(f"α out of range (0, 1/24]: {self.alpha}")
        if not 0.0 < self.delta <= 1.0:
            raise SpecError(f"δ out of range (0, 1]: {self.delta}")
        if not 0.0 < self.epsilon < 1.0:
            raise SpecError(f"ε out of range (0, 1): {self.epsilon}")
        if self.r < 1 or self.ell_prime < 1 or self.k < 1:
            raise SpecError("r, ℓ' and k must all be at least 1")

    @property
    def cap(self) -> float:
        return 1.0 - self.epsilon


@dataclass
class FractionalPoint:
    """A point of [0,1]^n, stored densely or as one value per block.

    When ``block_sizes`` is set, ``coords[b]`` is the common value of every
    element of block ``b``.
    """
    coords: np.ndarray
    block_sizes: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.block_sizes is not None:
            self.block_sizes = np.asarray(self.block_sizes, dtype=np.int64)
            if self.block_sizes.shape != self.coords.shape:
                raise ValueError("block_sizes must have one entry per block coordinate")
        if np.any(self.coords < -1e-12) or np.any(self.coords > 1 + 1e-12):
            raise ValueError("Fractional point coordinates must lie in [0, 1]")
        self.coords = np.clip(self.coords, 0.0, 1.0)

    @property
    def is_block_constant(self) -> bool:
        return self.block_sizes is not None

    @property
    def n(self) -> int:
        if self.block_sizes is not None:
            return int(self.block_sizes.sum())
        return int(self.coords.size)

    def dense(self, labels: Optional[np.ndarray] = None) -> np.ndarray:
        """Expand to one coordinate per element.

        Block-constant points need the element-to-block ``labels``.
        """
        if self.block_sizes is None:
            return self.coords.copy()
        if labels is None:
            labels = np.repeat(np.arange(self.coords.size), self.block_sizes)
        return self.coords[labels]

    @classmethod
    def constant(cls, n: int, value: float) -> "FractionalPoint":
        return cls(coords=np.full(n, value, dtype=float))


@dataclass
class EstimatorConfig:
    """How to evaluate the multilinear extension and its gradients."""
    mode: EstimatorMode = EstimatorMode.BLOCK_EXACT
    samples: int = 10_000
    seed: int = 0

    def validate(self):
        if self.mode == EstimatorMode.MONTE_CARLO and self.samples < 1:
            raise ValueError("monte_carlo mode needs at least one sample")

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode.value, "samples": self.samples, "seed": self.seed}


@dataclass
class Estimate:
    """A value together with its standard error (0 for exact evaluation)."""
    value: float
    std_error: float = 0.0

    def __float__(self) -> float:
        return float(self.value)


@dataclass
class DGReport:
    """Outcome of one run of the low-adaptivity double greedy."""
    dg_value: float
    rnd_value: float
    opt_estimate: float
    rounds_used: int
    iterations: int
    alpha_sum: float = 0.0
    beta_sum: float = 0.0
    checks: Dict[str, Any] = field(default_factory=dict)

    gamma: float = 0.05
    eta0: Optional[float] = None
    fallback: bool = False  # no admissible starting step, returned F(½·1)
    capped: bool = False  # stopped at the iteration cap with the potential still large
    horizon: float = 0.0
    horizon_residual: float = 0.0
    value_x: float = 0.0
    value_y: float = 0.0
    exit_potential: float = 0.0
    final_gap: float = 0.0
    potential_drops: List[float] = field(default_factory=list)
    best_integral_value: Optional[float] = None
    estimator_mode: str = EstimatorMode.BLOCK_EXACT.value

    @property
    def delta_statistic(self) -> float:
        """½ − RND/OPT, how far the random set is below half of OPT."""
        if self.opt_estimate <= 0:
            return 0.0
        return 0.5 - self.rnd_value / self.opt_estimate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dg_value": self.dg_value,
            "rnd_value": self.rnd_value,
            "opt_estimate": self.opt_estimate,
            "rounds_used": self.rounds_used,
            "iterations": self.iterations,
            "alpha_sum": self.alpha_sum,
            "beta_sum": self.beta_sum,
            "checks": self.checks,
            "gamma": self.gamma,
            "eta0": self.eta0,
            "fallback": self.fallback,
            "capped": self.capped,
            "horizon": self.horizon,
            "horizon_residual": self.horizon_residual,
            "value_x": self.value_x,
            "value_y": self.value_y,
            "exit_potential": self.exit_potential,
            "final_gap": self.final_gap,
            "potential_drops": list(self.potential_drops),
            "best_integral_value": self.best_integral_value,
            "estimator_mode": self.estimator_mode,
            "delta_statistic": self.delta_statistic,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DGReport":
        """Create a report from dictionary, filtering derived and unknown keys."""
        valid_fields = {f.name for f in fields(cls)}
        filtered_data = {k: v for k, v in data.items() if k in valid_fields}
        return cls(**filtered_data)


@dataclass
class OptGuessResult:
    """Double greedy runs over a geometric grid of OPT guesses."""
    guesses: List[float]
    base_estimate: float
    best: DGReport
    reports: List[DGReport] = field(default_factory=list)
    rounds_used: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "guesses": list(self.guesses),
            "base_estimate": self.base_estimate,
            "best": self.best.to_dict(),
            "rounds_used": self.rounds_used,
            "guess_values": [r.dg_value for r in self.reports],
        }


@dataclass
class LayerKnowledge:
    """Layers recovered by the round-by-round discovery procedure."""
    discovered: List[np.ndarray] = field(default_factory=list)
    s: int = 0
    rounds_used: int = 0
    failed: bool = False
    failure_reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s": self.s,
            "rounds_used": self.rounds_used,
            "layer_sizes": [int(layer.size) for layer in self.discovered],
            "failed": self.failed,
            "failure_reason": self.failure_reason,
        }


@dataclass
class LayeredSolution:
    """Best solution an observer knowing ``s`` layers can construct."""
    s: int
    profile: CountProfile
    value: float
    layered_value: float
    witness_value: float
    theory_cap: float
    converged: bool = True
    rounded_profile: Optional[CountProfile] = None


@dataclass
class SolverResult:
    """Solution of one of the auxiliary minimization problems."""
    x: np.ndarray
    value: float
    closed_form_value: Optional[float] = None
    bound: Optional[float] = None
    converged: bool = True
    iterations: int = 0


@dataclass
class PropertyResult:
    """One line of a verification report."""
    name: str
    status: CheckStatus
    samples: int = 0
    max_violation: float = 0.0
    detail: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status != CheckStatus.FAIL

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status.value,
            "samples": self.samples,
            "max_violation": self.max_violation,
            "detail": self.detail,
        }


@dataclass
class ValidationReport:
    """Warnings about couplings that a relaxed instance does not satisfy."""
    family: InstanceFamily
    warnings: List[str] = field(default_factory=list)
    violated_couplings: List[str] = field(default_factory=list)
    rebalanced: int = 0  # elements moved into Y_1 by rounding

    def warn(self, message: str, coupling: Optional[str] = None):
        self.warnings.append(message)
        if coupling:
            self.violated_couplings.append(coupling)
        logger.warning(message)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "warnings": list(self.warnings),
            "violated_couplings": list(self.violated_couplings),
            "rebalanced": self.rebalanced,
        }


@dataclass
class RunConfig:
    """Settings of one harness command invocation."""
    command: str
    instance: Optional[str] = None  # path or inline JSON
    seed: int = 0
    gamma: float = 0.05
    samples: int = 10_000
    trials: int = 100
    rounds_max: int = 6
    out: Optional[str] = None
    format: Optional[OutputFormat] = None  # None: the command's own default
    exact: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "instance": self.instance,
            "seed": self.seed,
            "gamma": self.gamma,
            "samples": self.samples,
            "trials": self.trials,
            "rounds_max": self.rounds_max,
            "out": self.out,
            "format": self.format.value if self.format else None,
            "exact": self.exact,
        }

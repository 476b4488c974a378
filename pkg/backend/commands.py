"""
Harness commands: verify, run-dg, adaptivity-curve and bounds.

Each command takes a RunConfig, writes its result to ``cfg.out`` (stdout when
unset) and returns the process exit code. Input errors propagate to the CLI,
which maps them to exit code 2.
"""

import logging
from pathlib import Path
from typing import Optional

from backend.baselines import BOUNDS_COLUMNS, CURVE_COLUMNS, adaptivity_curve, bounds_table
from backend.double_greedy import checks_passed, diagnostics_check, guess_opt
from backend.oracle import build_oracle
from backend.properties import run_verification
from shared.config import get_config
from shared.errors import SpecError
from shared.models import (
    EstimatorConfig, EstimatorMode, InstanceFamily, InstanceSpec, OutputFormat, RunConfig,
)
from shared.result_storage import write_json, write_table

logger = logging.getLogger(__name__)

DEFAULT_BOUND_PARAMS = {"delta": 0.4, "alpha": 1.0 / 24.0, "epsilon": 1e-3}
PROPERTY_COLUMNS = ["name", "status", "samples", "max_violation", "detail"]


def load_instance(source: Optional[str]) -> InstanceSpec:
    """Spec from inline JSON or a file path; the default desk log-round spec when unset."""
    if source is None:
        return InstanceSpec()
    text = source.strip()
    if text.startswith("{"):
        return InstanceSpec.from_json(text)
    path = Path(source)
    if not path.is_file():
        raise SpecError(f"Instance file not found: {source}")
    return InstanceSpec.from_json(path.read_text())


def _format(cfg: RunConfig, default: OutputFormat) -> OutputFormat:
    return cfg.format or default


def _digits() -> int:
    return get_config().float_digits


def cmd_verify(cfg: RunConfig) -> int:
    """Run every applicable property suite; exit 0 iff all pass."""
    spec = load_instance(cfg.instance)
    oracle = build_oracle(spec)
    results = run_verification(oracle, cfg.samples, cfg.seed)
    passed = all(r.passed for r in results)

    if _format(cfg, OutputFormat.JSON) == OutputFormat.CSV:
        write_table([r.to_dict() for r in results], PROPERTY_COLUMNS, cfg.out, _digits())
    else:
        write_json({
            "instance": spec.to_dict(),
            "validation": oracle.validation.to_dict() if oracle.validation else None,
            "properties": [r.to_dict() for r in results],
            "passed": passed,
        }, cfg.out, _digits())
    return 0 if passed else 1


def _estimator_config(cfg: RunConfig) -> EstimatorConfig:
    mode = EstimatorMode.EXACT_ENUM if cfg.exact else EstimatorMode.MONTE_CARLO
    return EstimatorConfig(mode=mode, samples=cfg.samples, seed=cfg.seed)


def cmd_run_dg(cfg: RunConfig) -> int:
    """Guess-parallel double greedy; reports the best run with the random-set statistic."""
    spec = load_instance(cfg.instance)
    oracle = build_oracle(spec)
    estimator = _estimator_config(cfg)
    outcome = guess_opt(oracle, cfg.gamma, estimator, samples=cfg.samples)
    report = outcome.best
    opt_value = oracle.opt_value
    if cfg.exact:
        checks = diagnostics_check(report, opt_value)
        if not checks_passed(checks):
            logger.warning("Double greedy diagnostics failed against the known optimum")

    row = report.to_dict()
    row.update({
        "opt_value": opt_value,
        "ratio": report.dg_value / opt_value if opt_value > 0 else None,
        "base_estimate": outcome.base_estimate,
        "num_guesses": len(outcome.guesses),
    })
    if _format(cfg, OutputFormat.JSON) == OutputFormat.CSV:
        columns = [key for key, value in row.items() if not isinstance(value, (list, dict))]
        write_table([row], columns, cfg.out, _digits())
    else:
        write_json({"instance": spec.to_dict(), "report": row}, cfg.out, _digits())
    return 0


def cmd_adaptivity_curve(cfg: RunConfig) -> int:
    """Rows s = 0..rounds_max of discovery success and best reachable value."""
    spec = load_instance(cfg.instance)
    if spec.family not in (InstanceFamily.LOG_ROUND, InstanceFamily.POLY_ROUND):
        raise SpecError(f"adaptivity-curve needs a layered instance, got {spec.family.value}")
    oracle = build_oracle(spec)
    rows, healthy = adaptivity_curve(oracle, cfg.rounds_max, cfg.trials, cfg.seed)
    if _format(cfg, OutputFormat.CSV) == OutputFormat.JSON:
        write_json({"instance": spec.to_dict(), "rows": rows, "complete": healthy}, cfg.out, _digits())
    else:
        write_table(rows, CURVE_COLUMNS, cfg.out, _digits())
    if not healthy:
        logger.warning("Layer discovery fell below the success threshold; curve is partial")
        return 1
    return 0


def cmd_bounds(cfg: RunConfig) -> int:
    """Closed-form bound table; δ, α and ε come from a poly_round instance when one is given."""
    params = dict(DEFAULT_BOUND_PARAMS)
    if cfg.instance is not None:
        spec = load_instance(cfg.instance)
        if spec.family == InstanceFamily.POLY_ROUND:
            params = {"delta": spec.params.delta, "alpha": spec.params.alpha, "epsilon": spec.params.epsilon}
        else:
            logger.info(f"Ignoring {spec.family.value} instance for bounds; using default parameters")
    rows = bounds_table(cfg.rounds_max, **params)
    if _format(cfg, OutputFormat.CSV) == OutputFormat.JSON:
        write_json({"parameters": params, "rows": rows}, cfg.out, _digits())
    else:
        write_table(rows, BOUNDS_COLUMNS, cfg.out, _digits())
    return 0


COMMANDS = {
    "verify": cmd_verify,
    "run-dg": cmd_run_dg,
    "adaptivity-curve": cmd_adaptivity_curve,
    "bounds": cmd_bounds,
}

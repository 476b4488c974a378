import json
import logging

import numpy as np
import pytest

from shared.config import Config
from shared.errors import SpecError
from shared.models import (
    CountProfile, DGReport, FractionalPoint, InstanceFamily, InstanceSpec, PolyRoundParams, RoundLedger,
)
from shared.result_storage import format_json, write_table


def test_config_defaults():
    cfg = Config()
    assert cfg.enumeration_budget == 10 ** 6
    assert cfg.exact_enum_max_n == 22
    assert cfg.optimizer_restarts == 20
    cfg.validate()


def test_config_bad_worker_count_keeps_default(monkeypatch):
    monkeypatch.setenv("ADAPTIVITY_BATCH_WORKERS", "many")
    assert Config().batch_workers == 1


def test_config_validate_collects_errors():
    cfg = Config()
    cfg.batch_workers = 0
    cfg.default_gamma = 2.0
    with pytest.raises(ValueError, match="Configuration errors") as info:
        cfg.validate()
    assert "default_gamma" in str(info.value)
    assert "ADAPTIVITY_BATCH_WORKERS" in str(info.value)


def test_spec_round_trip():
    spec = InstanceSpec.from_json('{"family": "poly_round", "params": {"r": 4, "delta": 0.2}, "seed": 11}')
    assert spec.family == InstanceFamily.POLY_ROUND
    again = InstanceSpec.from_json(spec.to_json())
    assert again.params.r == 4
    assert again.params.delta == 0.2
    assert again.seed == 11


@pytest.mark.parametrize("text", [
    '{"family": "nope"}',
    '{"family": "log_round", "seed": -1}',
    '{"family": "log_round", "params": [1, 2]}',
    'not json',
])
def test_spec_rejects_bad_input(text):
    with pytest.raises(SpecError):
        InstanceSpec.from_json(text)


def test_spec_ignores_unknown_params(caplog):
    with caplog.at_level(logging.WARNING):
        spec = InstanceSpec.from_dict({"family": "log_round", "params": {"k": 10, "colour": "blue"}})
    assert spec.params.k == 10
    assert "colour" in caplog.text


def test_poly_params_alpha_range():
    with pytest.raises(SpecError, match=r"α out of range \(0, 1/24\]"):
        PolyRoundParams(r=4, ell_prime=2, delta=0.4, alpha=0.2, epsilon=0.01)


def test_ledger_counts_rounds():
    ledger = RoundLedger()
    assert ledger.record(5, "a") == 0
    assert ledger.record(3, "b") == 1
    assert ledger.rounds_used == 2
    assert ledger.total_queries == 8
    with pytest.raises(ValueError):
        ledger.record(0)


def test_fractional_point_checks_range():
    with pytest.raises(ValueError):
        FractionalPoint(coords=np.array([0.5, 1.2]))
    point = FractionalPoint(coords=np.array([0.25, 0.75]), block_sizes=np.array([2, 3]))
    assert np.allclose(point.dense(np.array([0, 1, 1, 0, 1])), [0.25, 0.75, 0.75, 0.25, 0.75])


def test_count_profile_rejects_negative_entries():
    with pytest.raises(ValueError):
        CountProfile(x=np.array([-0.1]), y=np.array([0.0]))


def test_dg_report_from_dict_skips_derived_keys():
    report = DGReport(dg_value=0.3, rnd_value=0.1, opt_estimate=0.4, rounds_used=3, iterations=2)
    assert report.delta_statistic == pytest.approx(0.25)
    again = DGReport.from_dict(report.to_dict())
    assert again.dg_value == 0.3
    assert again.rounds_used == 3


def test_table_writer_uses_fixed_digits(tmp_path):
    out = tmp_path / "nested" / "table.csv"
    text = write_table([{"r": 1, "value": 1.0 / 3.0}], ["r", "value"], str(out))
    assert out.read_text() == text
    assert text.splitlines() == ["r,value", "1,0.333333333333"]


def test_json_writer_sorts_keys_and_drops_non_finite():
    text = format_json({"b": float("nan"), "a": np.float64(2.0) / 3.0})
    data = json.loads(text)
    assert list(data) == ["a", "b"]
    assert data["b"] is None
    assert text.endswith("\n")

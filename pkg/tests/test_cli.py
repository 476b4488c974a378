import json

import pytest

from backend.cli import build_parser, main
from backend.commands import load_instance
from shared.errors import SpecError
from shared.models import InstanceFamily

DIRECTED_CUT_JSON = '{"family": "directed_cut", "seed": 5}'
MODULAR_JSON = '{"family": "custom_small", "params": {"kind": "modular", "n": 3, "weights": [0.2, 0.5, 0.3]}}'


def test_parser_defaults():
    args = build_parser().parse_args(["bounds"])
    assert args.seed == 0
    assert args.gamma == 0.05
    assert args.trials == 100
    assert args.rounds_max == 6
    assert args.format is None


def test_parser_rejects_negative_seed():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--seed", "-1"])


def test_bounds_table_to_stdout(capsys):
    assert main(["bounds"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "r,quadr_value,poly_bound,log_round_cap,inv_e_gap"
    assert lines[1].split(",")[:2] == ["1", "0.25"]
    assert len(lines) == 7


def test_bounds_as_json(tmp_path):
    out = tmp_path / "bounds.json"
    assert main(["bounds", "--rounds-max", "3", "--format", "json", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert [row["r"] for row in data["rows"]] == [1, 2, 3]
    assert data["parameters"]["delta"] == 0.4


def test_alpha_out_of_range_exits_with_2(capsys):
    code = main(["verify", "--instance", '{"family": "poly_round", "params": {"alpha": 0.2}}'])
    assert code == 2
    assert "α out of range (0, 1/24]" in capsys.readouterr().err


def test_run_dg_on_directed_cut_is_reproducible(tmp_path):
    outputs = []
    for name in ("first.json", "second.json"):
        out = tmp_path / name
        args = ["run-dg", "--instance", DIRECTED_CUT_JSON, "--exact", "--gamma", "0.2",
                "--samples", "2000", "--out", str(out)]
        assert main(args) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0])["report"]
    assert report["ratio"] >= 0.51
    assert report["num_guesses"] == 15
    assert report["estimator_mode"] == "exact_enum"


def test_run_dg_on_modular_finds_optimum(tmp_path):
    out = tmp_path / "modular.csv"
    assert main(["run-dg", "--instance", MODULAR_JSON, "--exact", "--samples", "500",
                 "--format", "csv", "--out", str(out)]) == 0
    header, row = out.read_text().splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["dg_value"]) == pytest.approx(1.0)
    assert float(values["opt_value"]) == pytest.approx(1.0)


def test_verify_directed_cut(tmp_path):
    out = tmp_path / "verify.json"
    assert main(["verify", "--instance", DIRECTED_CUT_JSON, "--samples", "500", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["passed"] is True
    statuses = {p["name"]: p["status"] for p in data["properties"]}
    assert statuses["monotone"] == "not_applicable"


def test_curve_needs_layered_instance(capsys):
    assert main(["adaptivity-curve", "--instance", DIRECTED_CUT_JSON]) == 2
    assert "layered instance" in capsys.readouterr().err


def test_missing_instance_file(tmp_path, capsys):
    assert main(["verify", "--instance", str(tmp_path / "missing.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_load_instance_sources(tmp_path):
    assert load_instance(None).family == InstanceFamily.LOG_ROUND
    path = tmp_path / "spec.json"
    path.write_text(DIRECTED_CUT_JSON)
    assert load_instance(str(path)).family == InstanceFamily.DIRECTED_CUT
    assert load_instance("  " + MODULAR_JSON).family == InstanceFamily.CUSTOM_SMALL
    with pytest.raises(SpecError):
        load_instance("{broken")

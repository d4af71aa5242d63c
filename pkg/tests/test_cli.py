import csv
import json

import pytest

from worldline import analytic as an
from worldline.cli import CSV_COLUMNS, build_parser, main, read_config, resolve_spec, sidecar_path


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_analytic_to_stdout(capsys):
    assert main(["analytic", "--chi", "1"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert list(rows[0])[: len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    eta = [r for r in rows if r["quantity"] == "eta_te"][0]
    assert float(eta["estimate"]) == float(an.eta_te(1.0))


def test_cp_run_writes_csv_and_sidecar(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["cp-vacuum", "--chi", "inf", "--n-steps", "32", "--n-paths", "2e3", "--output", str(out)]) == 0
    rows = _csv(out)
    assert rows[0]["chi"] == "inf" and float(rows[0]["std_error"]) > 0
    meta = json.loads(sidecar_path(out).read_text())
    assert meta["seed"] == 0 and meta["spec"]["n_paths"] == 2000
    assert meta["oracle"]["inf"] == pytest.approx(1 / 6)
    assert "numpy" in meta["versions"]


def test_replay_is_identical(tmp_path):
    out = tmp_path / "a.csv"
    main(["casimir", "--chi-list", "1,inf", "--n-steps", "16", "--n-paths", "1000", "--seed", "4", "--output", str(out)])
    again = tmp_path / "b.csv"
    assert main(["replay", str(sidecar_path(out)), "--output", str(again)]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_json_format(tmp_path):
    out = tmp_path / "r.json"
    assert main(["cp-embedded", "--chi", "1", "--n-steps", "16", "--n-paths", "500", "--format", "json", "--output", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data[0]["normalized"] > 0


@pytest.mark.parametrize(
    "argv",
    [
        ["cp-vacuum", "--chi", "-1"],
        ["cp-vacuum", "--n-paths", "1.5"],
        ["cp-vacuum", "--estimator", "magic"],
        ["cp-embedded", "--chi", "inf"],
        ["convergence", "--n-list", "16,24,32"],
        ["casimir", "--geometry", "halfspace"],
        ["cp-vacuum", "--preset", "fig4"],
    ],
)
def test_invalid_input_exits_2_without_files(tmp_path, argv):
    out = tmp_path / "x.csv"
    assert main(argv + ["--output", str(out)]) == 2
    assert list(tmp_path.iterdir()) == []


def test_malformed_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_steps = 10\nwhat_is_this = 3\n")
    assert main(["cp-vacuum", "--config", str(cfg), "--output", str(tmp_path / "o.csv")]) == 2
    assert not (tmp_path / "o.csv").exists()


def test_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn_steps = 10\nseed = 5\nn_paths = 1e3\n")
    monkeypatch.setenv("WORLDLINE_SEED", "6")
    args = build_parser().parse_args(["cp-vacuum", "--preset", "fig2", "--config", str(cfg), "--n-steps", "12"])
    spec = resolve_spec(args)
    assert spec.n_steps == 12  # flag beats file
    assert spec.seed == 6  # env beats file
    assert spec.n_paths == 1000  # file beats preset
    assert len(spec.chi_list) == 10  # preset fills the rest


def test_unknown_env_rejected(monkeypatch):
    monkeypatch.setenv("WORLDLINE_TYPO", "1")
    assert main(["analytic"]) == 2


def test_config_json_roundtrip(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "cp-vacuum", "chi_list": [1, "inf"], "n_steps": 8}))
    vals = read_config(cfg)
    assert vals["chi_list"] == [1.0, float("inf")]


def test_tables_subcommand_needs_output():
    assert main(["tables"]) == 2

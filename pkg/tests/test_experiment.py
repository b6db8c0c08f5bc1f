import csv
import json
import subprocess
import sys

import pytest

from fraccheeger import ExperimentConfig, emit_plot_data, load_config, run_experiment
from fraccheeger.cheeger import CheegerEstimates
from fraccheeger.cli import main
from fraccheeger.experiment import CHECK_IDS, _json
from fraccheeger.grid import FracParams

INI = """
[domain]
shape = interval
n_per_axis = 4
s = 0.5

[continuation]
p_schedule = 1.5, 1.25, 1.1, 1.05

[output]
out_dir = {out}

[checks]
enabled = {checks}
seed = 7
"""


# checks that stay meaningful on a four-cell grid; the reference-ball
# comparisons need finer resolution
SMALL_CHECKS = ("torsion_identity", "bracket", "comparison", "ratio", "levelset_linfty",
                "ratio_lower", "estimate_spread", "spread_monotone", "h_s_agreement",
                "oracle_dominance")


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_load_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(INI.format(out=tmp_path / "o", checks="auto"))
    cfg = load_config(path)
    assert cfg.shape == "interval" and cfg.n_per_axis == 4
    assert cfg.p_schedule == (1.5, 1.25, 1.1, 1.05)
    assert cfg.checks is None and cfg.seed == 7
    assert load_config(path, n_per_axis=8).n_per_axis == 8


@pytest.mark.parametrize("bad", ["s = 1.0", "s = -0.1", "colour = red"])
def test_config_rejections(tmp_path, bad):
    path = tmp_path / "run.ini"
    path.write_text(INI.format(out=tmp_path, checks="auto").replace("s = 0.5", bad))
    with pytest.raises(ValueError):
        load_config(path)


def test_config_invariants():
    with pytest.raises(ValueError):
        ExperimentConfig(checks=("no_such_check",))
    with pytest.raises(ValueError):
        ExperimentConfig(p_schedule=(1.5, 1.0))
    with pytest.raises(ValueError):
        ExperimentConfig(shape="custom_mask")


def test_run_outputs_and_plot_rows(tmp_path):
    path = tmp_path / "run.ini"
    out = tmp_path / "out"
    path.write_text(INI.format(out=out, checks=", ".join(SMALL_CHECKS)))
    est, reports = run_experiment(load_config(path))
    assert all(r.passed for r in reports), [r for r in reports if not r.passed]
    assert [r.check_id for r in reports] == list(SMALL_CHECKS)
    rows = read_rows(out / "estimates.csv")
    assert rows[0] == ["p", "lambda", "sup_estimate", "l1_estimate", "phi_l1", "phi_sup",
                       "bracket_ok", "ratio_ok"]
    assert len(rows) == 5
    plot = read_rows(out / "plot_data.csv")
    assert plot[0] == ["p", "series_name", "value"]
    assert len(plot) - 1 == 14
    summary = json.loads((out / "summary.json").read_text())
    refs = {r[1]: r[2] for r in plot if r[0] == ""}
    assert float(refs["level_set_value"]) == summary["level_set_value"]
    assert float(refs["oracle_value"]) == summary["oracle_value"]
    by_p = {(float(r[0]), r[1]): float(r[2]) for r in plot[1:] if r[0]}
    for rec in summary["curves"]:
        for name in ("lambda", "sup_estimate", "l1_estimate"):
            assert by_p[(rec["p"], name)] == rec[name]
    assert summary["all_passed"] is True


def test_plot_data_for_empty_schedule(tmp_path):
    est = CheegerEstimates(FracParams(1, 0.5, 1.5), (), {}, {}, {}, float("nan"), None,
                           float("nan"))
    path = tmp_path / "plot.csv"
    emit_plot_data(est, path)
    assert read_rows(path) == [["p", "series_name", "value"]]


def test_json_writer_uses_17_digits():
    text = _json({"x": 0.1, "y": [1, True, None, float("inf")]})
    assert '"x": 0.10000000000000001' in text
    assert json.loads(text)["y"] == [1, True, None, None]


def test_cli_exit_status(tmp_path, capsys):
    out = tmp_path / "cli"
    args = ["--out", str(out), "--shape", "square", "--n", "16", "--s", "0.5", "--trace"]
    assert main(args) == 0
    assert (out / "summary.json").exists()
    assert any((out / "traces").iterdir())
    printed = capsys.readouterr().out
    assert "PASS" in printed and "FAIL" not in printed
    # a single p = 2 step leaves the estimates far apart
    assert main(["--out", str(out), "--n", "6", "--schedule", "2.0",
                 "--checks", "estimate_spread"]) == 1
    assert main(["--out", str(out), "--s", "1.5"]) == 2


def test_default_square_passes_every_check(tmp_path):
    cfg = ExperimentConfig(out_dir=str(tmp_path))
    assert cfg.shape == "square" and cfg.n_per_axis == 32
    est, reports = run_experiment(cfg)
    assert {r.check_id for r in reports} == set(CHECK_IDS) - {"oracle_dominance"}
    assert all(r.passed for r in reports), [r for r in reports if not r.passed]
    assert len(read_rows(tmp_path / "estimates.csv")) == 1 + len(cfg.p_schedule)


def test_cli_thread_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACCHEEGER_NUM_THREADS", "1")
    assert main(["--out", str(tmp_path), "--n", "4", "--schedule", "1.5",
                 "--checks", "bracket,torsion_identity"]) == 0
    monkeypatch.setenv("FRACCHEEGER_NUM_THREADS", "zero")
    assert main(["--out", str(tmp_path), "--n", "4"]) == 2


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "fraccheeger", "--help"],
                          capture_output=True, text=True, check=True)
    for flag in ("--config", "--out", "--checks", "--schedule", "--shape", "--n", "--s", "--trace"):
        assert flag in done.stdout

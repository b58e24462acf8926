import csv
import io
import os
import subprocess
import sys

import pytest

from coopber import cli, experiments
from coopber.config import ConfigError, diagnostics, load_config, parse_config
from coopber.netcode import NetworkCode
from coopber.oracle import BudgetExceeded, QuadResult

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")

FAST = """\
experiment = custom
snr_db_grid = 0, 5
methods = I0_exact, I0_h, canonical_sim, eq_joint, nc_approx
stopping = 30, 20000
seed = 3
"""


def write(tmp_path, text, name="run.conf"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- parsing -------------------------------------------------------------------

def test_grid_forms():
    assert parse_config("experiment = fig2\nsnr_db_grid = -10:5:10").snr_db_grid == [-10, -5, 0, 5, 10]
    assert parse_config("experiment = fig2\nsnr_db_grid = 1, 2.5, 4").snr_db_grid == [1, 2.5, 4]


def test_defaults():
    cfg = parse_config("experiment = fig7\nsnr_db_grid = 0")
    assert cfg.output_path == "results/fig7.csv"
    assert cfg.stopping.min_errors == 200 and cfg.stopping.max_trials == 10**8
    assert cfg.network_code is None and cfg.seed == 0


def test_matrix_block():
    cfg = parse_config("experiment = fig6\nsnr_db_grid = 0\nG = [\n 1 0 1 1\n 0 1 0 1\n"
                       " 0 0 1 0\n]\nv = 1, 2, 3, 2\n")
    assert cfg.network_code == NetworkCode.default()


@pytest.mark.parametrize("text,line,fragment", [
    ("experiment = fig2\nsnr_db_grid = 5, 0", 2, "snr_db_grid"),
    ("experiment = fig9\nsnr_db_grid = 0", 1, "experiment"),
    ("experiment = fig2\nsnr_db_grid = 0\nbogus = 1", 3, "unknown key"),
    ("experiment = fig2\nsnr_db_grid = 0\nstopping = 0, 10", 3, "min_errors"),
    ("experiment = fig2\nsnr_db_grid = 0\nseed = x", 3, "seed"),
    ("experiment = fig2\nsnr_db_grid = 0\nmethods = nope", 3, "unknown method"),
    ("experiment = fig2\nexperiment = fig4\nsnr_db_grid = 0", 2, "duplicate"),
    ("experiment = fig6\nsnr_db_grid = 0\nG = [\n1 0\n0 0\n]\nv = 1, 1", 3, "empty slot"),
    ("experiment = fig6\nsnr_db_grid = 0\nG = [\n1 2\n]\nv = 1, 1", 4, "0 and 1"),
    ("experiment = fig6\nsnr_db_grid = 0\nG = [\n1 1\n", 3, "not closed"),
    ("experiment = fig2\nsnr_db_grid = 0\njunk", 3, "key = value"),
])
def test_errors_name_their_line(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"line {line}:")


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="snr_db_grid"):
        parse_config("experiment = fig2")
    with pytest.raises(ConfigError, match="experiment"):
        parse_config("snr_db_grid = 0")


@pytest.mark.parametrize("name", ["fig2", "fig4", "fig6", "fig7", "quick"])
def test_shipped_configs_have_no_diagnostics(name):
    cfg = load_config(os.path.join(CONFIGS, f"{name}.conf"))
    assert diagnostics(cfg) == []


def test_non_unit_variances_warn():
    cfg = parse_config("experiment = fig7\nsnr_db_grid = 0\nslot_variances = 1, 2, 1, 1")
    diags = diagnostics(cfg)
    assert len(diags) == 1 and "line 3" in diags[0] and "non-unit" in diags[0]


# -- CLI -----------------------------------------------------------------------

def test_validate_ok(capsys):
    assert cli.main(["validate", "--config", os.path.join(CONFIGS, "fig7.conf")]) == 0
    assert "0 diagnostics" in capsys.readouterr().out


def test_validate_config_error_exit_code(tmp_path, capsys):
    path = write(tmp_path, "experiment = fig2\nsnr_db_grid = 3, 1\n")
    assert cli.main(["validate", "--config", path]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "snr_db_grid" in err


def test_missing_file_is_config_error(tmp_path):
    assert cli.main(["validate", "--config", str(tmp_path / "none.conf")]) == 2


def test_list_experiments(capsys):
    assert cli.main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in ("fig2", "fig4", "fig6", "fig7", "eq_joint", "I0_h2"):
        assert name in out


def test_run_writes_csv(tmp_path, capsys):
    path = write(tmp_path, FAST)
    assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "custom.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["experiment", "method", "source", "snr_db", "value", "errors", "trials",
                       "half_width_95"]
    body = rows[1:]
    assert {r[1] for r in body} == {"I0_exact", "I0_h", "canonical_sim", "eq_joint", "nc_approx"}
    for r in body:
        assert float(r[4]) >= 0
        if r[1] in ("canonical_sim", "eq_joint"):
            assert int(r[5]) <= int(r[6])
            assert float(r[4]) == int(r[5]) / int(r[6])
        else:
            assert r[5] == r[6] == r[7] == "-"
        assert (r[2] == "-") == (r[1] not in ("eq_joint", "nc_approx"))


def test_csv_identical_across_thread_counts(tmp_path):
    path = write(tmp_path, FAST)
    outs = []
    for threads in ("1", "4"):
        d = tmp_path / f"t{threads}"
        assert cli.main(["run", "--config", path, "--out", str(d), "--threads", threads]) == 0
        outs.append((d / "custom.csv").read_bytes())
    assert outs[0] == outs[1]


def test_seed_override_changes_mc_only(tmp_path):
    path = write(tmp_path, FAST)
    texts = []
    for seed in ("3", "4"):
        d = tmp_path / seed
        cli.main(["run", "--config", path, "--out", str(d), "--seed", seed])
        texts.append((d / "custom.csv").read_text().splitlines())
    same = [a == b for a, b in zip(*texts)]
    assert not all(same)
    for a, b in zip(*texts):
        if ",I0_" in a:
            assert a == b


def test_budget_exhaustion_is_flagged_not_fatal(tmp_path, capsys):
    path = write(tmp_path, "experiment = custom\nsnr_db_grid = 30\nmethods = canonical_sim\n"
                           "stopping = 200, 1000\n")
    assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == 0
    assert "budget exhausted" in capsys.readouterr().out


def test_numeric_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(cfg, threads=1):
        raise BudgetExceeded(QuadResult(0.1, 0.01, 10))

    monkeypatch.setattr(experiments, "run_experiment", boom)
    path = write(tmp_path, FAST)
    assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_bad_threads_is_config_error(tmp_path):
    path = write(tmp_path, FAST)
    assert cli.main(["run", "--config", path, "--threads", "0"]) == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "coopber", "validate", "--config",
                          os.path.join(CONFIGS, "quick.conf")], capture_output=True, text=True)
    assert out.returncode == 0


def test_fig2_low_snr_agreement(tmp_path):
    """Q(sqrt snr) tracks the simulated E[Q(sqrt X)] within 10% at -10..-5 dB."""
    path = write(tmp_path, "experiment = fig2\nsnr_db_grid = -10:1:-5\n"
                           "methods = I0_sim, I0_g, I0_h, I0_exact\nstopping = 20000, 10000000\n"
                           "seed = 2\n")
    cfg = load_config(path)
    rows = experiments.run_experiment(cfg)
    idx = {(r.method, r.snr_db): r.value for r in rows}
    for db in cfg.snr_db_grid:
        assert idx[("I0_g", db)] == pytest.approx(idx[("I0_sim", db)], rel=0.10)
        # the impulse form is far off down here
        assert abs(idx[("I0_h", db)] / idx[("I0_exact", db)] - 1) > 0.5
    checks = dict((n, ok) for n, ok, _ in experiments.checks(cfg, rows))
    assert checks["g-based vs simulation, <= 0 dB"]


@pytest.mark.xfail(strict=True, reason="at 0 dB Q(sqrt snr) is about 25% below E[Q(sqrt X)]")
def test_fig2_agreement_at_zero_db():
    cfg = parse_config("experiment = fig2\nsnr_db_grid = 0\nmethods = I0_g, I0_exact\n")
    idx = {r.method: r.value for r in experiments.run_experiment(cfg)}
    assert idx["I0_g"] == pytest.approx(idx["I0_exact"], rel=0.10)

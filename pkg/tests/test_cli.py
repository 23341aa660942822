import pytest

from socialsampling.cli import main
from socialsampling.topology import read_edgelist

CFG = """
topology = grid
rows = 5
cols = 5
alphabet = 4
initial = explicit
initial_weights = 0.4,0.3,0.2,0.1
variant = censored_exchange
schedule = harmonic
schedule_c = 10
horizon = 600
trials = 2
base_seed = 3
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CFG)
    return path


def test_run_twice_identical(tmp_path, cfg_file, capsys):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", str(cfg_file), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfg_file), "--out", str(out2), "--threads", "2"]) == 0
    assert (out1 / "exp.csv").read_bytes() == (out2 / "exp.csv").read_bytes()
    assert (out1 / "exp.json").read_bytes() == (out2 / "exp.json").read_bytes()


def test_run_flag_overrides(tmp_path, cfg_file, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg_file), "--out", str(out),
                 "--trials", "1", "--horizon", "100", "--seed", "9"]) == 0
    text = (out / "exp.json").read_text()
    assert '"trials": "1"' in text
    assert '"horizon": "100"' in text
    assert '"base_seed": "9"' in text


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(CFG + "mystery = 1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "mystery" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "o")]) == 1


def test_usage_error_exit_code(capsys):
    assert main(["run"]) == 1  # --config required


def test_graph_export(tmp_path, capsys):
    out = tmp_path / "g.edges"
    assert main(["graph", "--spec", "grid:3x4", "--out", str(out)]) == 0
    g = read_edgelist(out)
    assert g.n == 12 and g.m == 3 * 3 + 4 * 2


def test_graph_needs_spec_or_config(tmp_path, capsys):
    assert main(["graph", "--out", str(tmp_path / "g.edges")]) == 1


def test_check_passes(capsys):
    assert main(["check", "--rounds", "25"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_sweep_command(tmp_path, capsys):
    cfg = tmp_path / "sw.cfg"
    cfg.write_text(CFG + "sweep = schedule\nsweep_values = harmonic:10, square:1\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "sw_harmonic_10.csv").exists()
    assert (out / "sw_square_1.csv").exists()


def test_sweep_requires_axis(tmp_path, cfg_file, capsys):
    assert main(["sweep", "--config", str(cfg_file), "--out", str(tmp_path / "o")]) == 1


def test_replicate_fig3_desk_scale(tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["replicate", "fig3", "--out", str(out),
                 "--trials", "2", "--horizon", "500"]) == 0
    assert (out / "fig3_grid5x5_censored.csv").exists()
    assert (out / "fig3_grid5x5_censored.json").exists()


def test_replicate_unknown_figure(tmp_path, capsys):
    assert main(["replicate", "fig99", "--out", str(tmp_path / "o")]) == 1


def test_run_with_checkpoints_flag(tmp_path, cfg_file, capsys):
    from socialsampling.protocol import load_checkpoints

    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg_file), "--out", str(out),
                 "--checkpoints"]) == 0
    cps = load_checkpoints(out / "exp_trial0000.checkpoints.jsonl")
    assert cps[0].t == 0
    assert cps[-1].t == 600
    assert cps[0].Q.shape == (25, 4)

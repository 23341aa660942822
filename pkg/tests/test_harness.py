import json

import numpy as np
import pytest

from socialsampling.config import (
    ExperimentConfig,
    Explicit,
    config_from_dict,
    parse_config_text,
    parse_topology_compact,
)
from socialsampling.harness import (
    emit_results,
    replicate_configs,
    run_ensemble,
    run_trial,
    sweep,
)

SMALL = parse_config_text("""
topology = grid
rows = 5
cols = 5
alphabet = 4
initial = explicit
initial_weights = 0.4,0.3,0.2,0.1
variant = censored_exchange
schedule = harmonic
schedule_c = 10
horizon = 800
trials = 3
base_seed = 7
""")


def test_run_trial_deterministic():
    m1, r1 = run_trial(SMALL, 0)
    m2, r2 = run_trial(SMALL, 0)
    assert np.array_equal(m1.mse, m2.mse)
    assert np.array_equal(m1.mass, m2.mass)
    assert r1 == r2
    m3, _ = run_trial(SMALL, 1)
    assert not np.array_equal(m1.mse, m3.mse)


def test_run_trial_single_node_star():
    cfg = ExperimentConfig(
        topology=parse_topology_compact("star:1"), alphabet=3,
        initial=Explicit((0.2, 0.5, 0.3)), variant="censored_exchange",
        horizon=200, trials=1, base_seed=0,
    )
    m, rep = run_trial(cfg, 0)
    assert np.all(m.mse == m.mse[0])
    assert rep.mass_ok


def test_run_trial_mass_conserved_and_improving():
    m, rep = run_trial(SMALL, 0)
    assert m.mass_drift.max() <= 1e-10
    assert m.disagreement[-1] < m.disagreement[0]


def test_ensemble_single_trial_stderr_zero():
    import dataclasses

    cfg = dataclasses.replace(SMALL, trials=1)
    res = run_ensemble(cfg)
    assert np.all(res.mse_stderr == 0.0)
    assert np.array_equal(res.mse_mean, res.trials[0].mse)


def test_ensemble_threads_do_not_change_results():
    seq = run_ensemble(SMALL, threads=1)
    par = run_ensemble(SMALL, threads=2)
    assert np.array_equal(seq.mse_mean, par.mse_mean)
    assert np.array_equal(seq.mass_drift_max, par.mass_drift_max)
    assert seq.reports == par.reports


def test_emit_results_layout(tmp_path):
    res = run_ensemble(SMALL)
    paths = emit_results(res, tmp_path, stem="small", per_trial=True)
    csv = (tmp_path / "small.csv").read_text().splitlines()
    assert csv[0] == "t,mse_mean,mse_stderr,disagreement_mean,mass_drift_max"
    assert len(csv) - 1 == res.rounds.size
    assert (tmp_path / "small_trial0000.csv").exists()
    assert len(paths) == 2 + SMALL.trials


def test_emit_results_byte_identical(tmp_path):
    a = emit_results(run_ensemble(SMALL), tmp_path / "a", stem="x")
    b = emit_results(run_ensemble(SMALL), tmp_path / "b", stem="x")
    assert (tmp_path / "a/x.csv").read_bytes() == (tmp_path / "b/x.csv").read_bytes()
    assert (tmp_path / "a/x.json").read_bytes() == (tmp_path / "b/x.json").read_bytes()


def test_summary_config_round_trips(tmp_path):
    emit_results(run_ensemble(SMALL), tmp_path, stem="rt")
    summary = json.loads((tmp_path / "rt.json").read_text())
    assert config_from_dict(summary["config"]) == SMALL
    assert summary["provenance"]["trials"] == SMALL.trials
    assert summary["max_mass_drift"] <= 1e-10


def test_paired_sweep_shares_initial_draws():
    cfg = parse_config_text("""
topology = grid
rows = 4
cols = 4
alphabet = 3
initial = uniform_support
variant = censored_exchange
schedule = harmonic
schedule_c = 2
horizon = 300
trials = 2
base_seed = 5
sweep = schedule
sweep_values = harmonic:2, square:2
""")
    results = sweep(cfg)
    assert [r.label for r in results] == ["harmonic_2", "square_2"]
    # same seeds, same graph, same opinions: identical metrics at t=0
    a, b = results
    assert a.trials[0].mse[0] == b.trials[0].mse[0]
    assert np.array_equal(a.trials[0].mass[0], b.trials[0].mass[0])
    # but the swept schedule changes the trajectory
    assert a.trials[0].mse[-1] != b.trials[0].mse[-1]


def test_absorption_bookkeeping():
    cfg = ExperimentConfig(
        topology=parse_topology_compact("grid:5x5"), alphabet=4,
        initial=Explicit((0.4, 0.3, 0.2, 0.1)), variant="averaging",
        horizon=10_000, trials=4, base_seed=1, stop_on_absorption=True,
    )
    res = run_ensemble(cfg)
    for m in res.trials:
        assert m.absorbed_at is not None
        assert m.absorbed_atom in (1, 2, 3, 4)


def test_replicate_configs_cover_figures():
    for name in ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"):
        bundles = replicate_configs(name)
        assert bundles
    fig3 = dict(replicate_configs("fig3"))["fig3_grid5x5_censored"]
    assert fig3.topology.describe() == "grid:5x5"
    assert fig3.alphabet == 4
    assert fig3.variant == "censored_exchange"
    assert fig3.schedule == "harmonic" and fig3.schedule_c == 10.0
    fig4 = replicate_configs("fig4")
    assert len(fig4) == 4
    assert all(cfg.sweep_axis == "schedule" for _, cfg in fig4)
    with pytest.raises(Exception):
        replicate_configs("fig99")


def test_ensemble_mse_decreasing_on_large_grid():
    cfg = ExperimentConfig(
        topology=parse_topology_compact("grid:10x10"), alphabet=5,
        initial=Explicit((0.1, 0.25, 0.15, 0.3, 0.2)),
        variant="censored_exchange", schedule="harmonic", schedule_c=10.0,
        horizon=10_000, trials=30, base_seed=12,
    )
    res = run_ensemble(cfg, threads=2)
    i100 = np.searchsorted(res.rounds, 100)
    assert res.mse_mean[-1] < res.mse_mean[i100]
    window = res.mse_mean[i100:]
    assert window[-1] < 0.5 * window[0]
    # noisy but essentially monotone on the log grid
    assert np.mean(np.diff(window) < 0) > 0.8


def test_replicate_fig6_sparsity_structure():
    bundles = replicate_configs("fig6")
    assert len(bundles) == 4
    for _, cfg in bundles:
        assert cfg.alphabet == 150
        assert cfg.sweep_axis == "support"
        assert cfg.sweep_values == ("2", "5", "10", "15")
    kinds = [cfg.topology.kind for _, cfg in bundles]
    assert kinds[0] == "erdos_renyi"


def test_ensemble_failure_carries_trial_index():
    from socialsampling.errors import TrialFailure
    from socialsampling.topology import TopologySpec

    cfg = ExperimentConfig(
        topology=TopologySpec(kind="erdos_renyi", n=6, p=0.0),
        alphabet=2, initial=Explicit((0.5, 0.5)), variant="averaging",
        horizon=10, trials=3, base_seed=0,
    )
    with pytest.raises(TrialFailure) as err:
        run_ensemble(cfg)
    assert err.value.trial_index == 0

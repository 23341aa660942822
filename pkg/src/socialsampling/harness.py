"""Experiment orchestration.

A trial regenerates its topology and initial opinions from a seed
derived from (base_seed, trial_index), runs the protocol for the
configured horizon, and reports trace metrics plus a condition report.
Ensembles aggregate trials on a shared recording grid; sweeps rerun the
ensemble along one axis with paired seeds. Everything is deterministic
in (config, base_seed), independent of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ConditionReport,
    TraceMetrics,
    assemble_condition_report,
    perturbation_ratio_at,
    rate_fit,
    time_to_threshold,
)
from .config import (
    ExperimentConfig,
    Explicit,
    config_hash,
    config_to_dict,
    draw_opinions,
    expand_sweep,
)
from .engine import record_grid, run_trajectory
from .errors import ConfigError, DegenerateWindow, IoFailure, TrialFailure
from .protocol import NetworkState, draw_messages, init_state, save_checkpoints
from .simplex import OpinionSample, empirical_histogram
from .topology import generate


class ConditionProbe:
    """Accumulates condition evidence at each recorded state of a run.

    Uses a random stream detached from the trial's protocol stream, so
    probing never perturbs the trajectory.
    """

    def __init__(self, variant, schedule, graph, rng):
        self.variant = variant
        self.schedule = schedule
        self.graph = graph
        self.rng = rng
        self.mix_residual = 0.0
        self.mix_round: int | None = None
        self.ratio = 0.0

    def __call__(self, t: int, Q: np.ndarray) -> None:
        state = NetworkState(t, Q.copy())
        try:
            r = perturbation_ratio_at(state, self.variant, self.schedule, self.graph)
        except NotImplementedError:
            r = float("nan")
        if not np.isnan(r):
            self.ratio = max(self.ratio, r)
        delta = self.variant.effective_delta(self.schedule, t)
        P, silent = self.variant.sampling(state.Q, self.graph, delta)
        Y = draw_messages(P, silent, self.rng, self.variant.silence_allowed)
        A, B, W = self.variant.realized_weights(self.graph, Y)
        resid = float(np.abs(W.sum(axis=1) - A - B).max())
        if self.mix_round is None or resid > self.mix_residual:
            self.mix_residual, self.mix_round = resid, t


def run_trial(
    config: ExperimentConfig,
    trial_index: int,
    checkpoint_path: str | Path | None = None,
) -> tuple[TraceMetrics, ConditionReport]:
    """Execute one seeded trial: fresh graph, fresh opinions, full run.

    With ``checkpoint_path`` the trajectory's record points are also
    written in the replayable checkpoint format.
    """
    root = np.random.SeedSequence(entropy=(config.base_seed, trial_index))
    graph_ss, init_ss, proto_ss, probe_ss = root.spawn(4)
    graph = generate(config.topology, np.random.default_rng(graph_ss))
    law_rng = np.random.default_rng(init_ss)
    weights = config.initial.realize(law_rng, config.alphabet)
    X = draw_opinions(weights, graph.n, law_rng)
    sample = OpinionSample(X, config.alphabet)
    target = empirical_histogram(sample).weights
    Q0 = init_state(sample).Q

    variant = config.make_variant()
    schedule = config.make_schedule()
    probe = ConditionProbe(variant, schedule, graph, np.random.default_rng(probe_ss))
    traj = run_trajectory(
        Q0,
        variant,
        schedule,
        graph,
        np.random.default_rng(proto_ss),
        config.horizon,
        record_rounds=record_grid(config.horizon, config.record_stride),
        target=target,
        stop_on_absorption=config.stop_on_absorption,
        engine=config.engine,
        keep_checkpoints=checkpoint_path is not None,
        on_record=probe,
    )
    if checkpoint_path is not None:
        save_checkpoints(checkpoint_path, traj.checkpoints)
    absorbed_atom = None
    if traj.absorbed_at is not None:
        absorbed_atom = int(traj.Q_final[0].argmax()) + 1
    metrics = TraceMetrics(
        rounds=traj.rounds,
        mse=traj.mse,
        disagreement=traj.disagreement,
        mass=traj.mass,
        target=target,
        n=graph.n,
        absorbed_at=traj.absorbed_at,
        absorbed_atom=absorbed_atom,
        final_mean=traj.Q_final.sum(axis=0) / graph.n,
        engine=traj.engine,
    )
    report = assemble_condition_report(
        mixing_residual=probe.mix_residual,
        mixing_round=probe.mix_round if probe.mix_residual > 0 else None,
        schedule=schedule,
        variant=variant,
        graph=graph,
        perturbation_ratio=probe.ratio,
        mass_drift=float(metrics.mass_drift.max()),
        mass_round=int(traj.rounds[int(metrics.mass_drift.argmax())]),
    )
    return metrics, report


def _trial_worker(args):
    config, index = args
    return run_trial(config, index)


@dataclass
class EnsembleResult:
    """Aggregated trials of one configuration."""

    config: ExperimentConfig
    label: str
    rounds: np.ndarray
    mse_mean: np.ndarray
    mse_stderr: np.ndarray
    disagreement_mean: np.ndarray
    mass_drift_max: np.ndarray
    trials: list[TraceMetrics]
    reports: list[ConditionReport]
    times_to_threshold: list[int | None]
    provenance: dict


def _run_jobs(config: ExperimentConfig, threads: int):
    if threads <= 1:
        outcomes = []
        for i in range(config.trials):
            try:
                outcomes.append(run_trial(config, i))
            except Exception as exc:
                raise TrialFailure(i, exc) from exc
        return outcomes
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_trial_worker, (config, i)) for i in range(config.trials)]
        outcomes = []
        for i, fut in enumerate(futures):
            try:
                outcomes.append(fut.result())
            except Exception as exc:
                raise TrialFailure(i, exc) from exc
        return outcomes


def run_ensemble(config: ExperimentConfig, threads: int = 1, label: str = "") -> EnsembleResult:
    """Run all trials (optionally in a worker pool) and aggregate.

    Aggregation is an ordered reduce over trial indices, so the worker
    count never changes any output byte; a failing trial aborts the
    ensemble with its index.
    """
    outcomes = _run_jobs(config, threads)
    metrics = [m for m, _ in outcomes]
    reports = [r for _, r in outcomes]
    rounds = metrics[0].rounds
    for m in metrics[1:]:
        if not np.array_equal(m.rounds, rounds):
            raise IoFailure("trials disagree on the recording grid")
    mse = np.stack([m.mse for m in metrics])
    dis = np.stack([m.disagreement for m in metrics])
    drift = np.stack([m.mass_drift for m in metrics])
    k = len(metrics)
    mse_mean = mse.mean(axis=0)
    mse_stderr = mse.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros_like(mse_mean)
    ttt = [time_to_threshold(m.rounds, m.mse, config.mse_threshold) for m in metrics]
    provenance = {
        "package_version": __version__,
        "config_sha256": config_hash(config),
        "base_seed": config.base_seed,
        "trials": config.trials,
        "seed_rule": "numpy SeedSequence((base_seed, trial_index)), 4-way spawn",
        "engines": sorted({m.engine for m in metrics}),
        "label": label,
    }
    return EnsembleResult(
        config=config,
        label=label,
        rounds=rounds,
        mse_mean=mse_mean,
        mse_stderr=mse_stderr,
        disagreement_mean=dis.mean(axis=0),
        mass_drift_max=drift.max(axis=0),
        trials=metrics,
        reports=reports,
        times_to_threshold=ttt,
        provenance=provenance,
    )


def sweep(config: ExperimentConfig, threads: int = 1) -> list[EnsembleResult]:
    """One ensemble per axis point, sharing base seeds across points."""
    return [run_ensemble(cfg, threads=threads, label=label)
            for label, cfg in expand_sweep(config)]


# --------------------------------------------------------------------------
# Result emission
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _summary_dict(result: EnsembleResult) -> dict:
    cfg = result.config
    try:
        slope = rate_fit(result.rounds, result.mse_mean,
                         t_min=max(10, cfg.horizon // 100), t_max=cfg.horizon)
    except DegenerateWindow:
        slope = None
    reached = [t for t in result.times_to_threshold if t is not None]
    quantiles = {}
    if reached:
        qs = np.quantile(np.array(reached, float), [0.1, 0.5, 0.9])
        quantiles = {"q10": qs[0], "q50": qs[1], "q90": qs[2]}
    absorbed = [m.absorbed_atom for m in result.trials]
    summary = {
        "config": config_to_dict(cfg),
        "label": result.label,
        "provenance": result.provenance,
        "final_mse_mean": float(result.mse_mean[-1]),
        "final_disagreement_mean": float(result.disagreement_mean[-1]),
        "max_mass_drift": float(result.mass_drift_max.max()),
        "rate_fit_slope": slope,
        "mse_threshold": cfg.mse_threshold,
        "time_to_threshold": {
            "reached_fraction": len(reached) / len(result.times_to_threshold),
            "per_trial": result.times_to_threshold,
            **quantiles,
        },
        "absorbed_fraction": sum(a is not None for a in absorbed) / len(absorbed),
        "absorbed_atoms": absorbed,
        "condition_reports": [r.to_dict() for r in result.reports],
    }
    return summary


def emit_results(
    result: EnsembleResult,
    outdir: str | Path,
    stem: str | None = None,
    per_trial: bool = False,
) -> list[Path]:
    """Write the per-round CSV and the JSON summary (optionally per-trial
    CSVs); returns the written paths. Output bytes are a pure function of
    the result."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {outdir}: {exc}") from exc
    if stem is None:
        stem = result.label or f"run_{config_hash(result.config)}"
    paths = []
    csv_path = outdir / f"{stem}.csv"
    lines = ["t,mse_mean,mse_stderr,disagreement_mean,mass_drift_max"]
    for i, t in enumerate(result.rounds):
        lines.append(
            f"{int(t)},{_fmt(result.mse_mean[i])},{_fmt(result.mse_stderr[i])},"
            f"{_fmt(result.disagreement_mean[i])},{_fmt(result.mass_drift_max[i])}"
        )
    try:
        csv_path.write_text("\n".join(lines) + "\n")
        paths.append(csv_path)
        json_path = outdir / f"{stem}.json"
        json_path.write_text(json.dumps(_summary_dict(result), indent=2, sort_keys=True) + "\n")
        paths.append(json_path)
        if per_trial:
            for i, m in enumerate(result.trials):
                tp = outdir / f"{stem}_trial{i:04d}.csv"
                rows = ["t,mse,disagreement,mass_drift"]
                drift = m.mass_drift
                for j, t in enumerate(m.rounds):
                    rows.append(
                        f"{int(t)},{_fmt(m.mse[j])},{_fmt(m.disagreement[j])},{_fmt(drift[j])}"
                    )
                tp.write_text("\n".join(rows) + "\n")
                paths.append(tp)
    except OSError as exc:
        raise IoFailure(f"cannot write results under {outdir}: {exc}") from exc
    return paths


# --------------------------------------------------------------------------
# Bundled scenario configs
# --------------------------------------------------------------------------

_LAW_5 = Explicit((0.1, 0.25, 0.15, 0.3, 0.2))
_LAW_4 = Explicit((0.4, 0.3, 0.2, 0.1))

_TOPOLOGIES_100 = ("grid:10x10", "preferential_attachment:100:3",
                   "watts_strogatz:10x10:0.1", "star:100")


def replicate_configs(name: str) -> list[tuple[str, ExperimentConfig]]:
    """Bundled desk-scale scenario configs for the reference figures.

    Horizons and trial counts are chosen so the curves flatten at this
    scale; both are recorded in the emitted provenance and can be raised
    from the command line.
    """
    from .config import Skewed, UniformSupport, parse_topology_compact

    def base(topology: str, **kw) -> ExperimentConfig:
        return ExperimentConfig(topology=parse_topology_compact(topology), **kw)

    if name == "fig1":
        # unit-step averaging on the small grid: absorption at a random atom
        cfg = base("grid:5x5", alphabet=4, initial=_LAW_4, variant="averaging",
                   horizon=10_000, trials=500, stop_on_absorption=True)
        return [("fig1_grid5x5_averaging", cfg)]
    if name == "fig2":
        cfg = base("grid:5x5", alphabet=4, initial=_LAW_4, variant="decaying_averaging",
                   schedule="harmonic", schedule_c=10.0, horizon=30_000, trials=100)
        return [("fig2_grid5x5_decaying", cfg)]
    if name == "fig3":
        cfg = base("grid:5x5", alphabet=4, initial=_LAW_4, variant="censored_exchange",
                   schedule="harmonic", schedule_c=10.0, horizon=100_000, trials=50)
        return [("fig3_grid5x5_censored", cfg)]
    if name == "fig4":
        out = []
        for topo in _TOPOLOGIES_100:
            cfg = base(topo, alphabet=5, initial=_LAW_5, variant="censored_exchange",
                       horizon=30_000, trials=20,
                       sweep_axis="schedule",
                       sweep_values=("harmonic:1", "constant:0.05", "square:1"))
            out.append((f"fig4_{topo.split(':')[0]}", cfg))
        return out
    if name == "fig5":
        out = []
        for topo in _TOPOLOGIES_100:
            cfg = base(topo, alphabet=5, initial=UniformSupport(None),
                       variant="censored_exchange", schedule="harmonic", schedule_c=1.0,
                       horizon=100_000, trials=30, mse_threshold=0.01,
                       sweep_axis="alphabet", sweep_values=("3", "5", "8", "12"))
            out.append((f"fig5_{topo.split(':')[0]}", cfg))
        return out
    if name == "fig6":
        out = []
        for topo in ("erdos_renyi:100:0.6",) + _TOPOLOGIES_100[:3]:
            cfg = base(topo, alphabet=150, initial=UniformSupport(None),
                       variant="censored_exchange", schedule="harmonic", schedule_c=1.0,
                       horizon=30_000, trials=10,
                       sweep_axis="support", sweep_values=("2", "5", "10", "15"))
            out.append((f"fig6_{topo.split(':')[0]}", cfg))
        return out
    if name == "fig7":
        out = []
        for topo in ("erdos_renyi:100:0.6",) + _TOPOLOGIES_100[:3]:
            cfg = base(topo, alphabet=5, initial=Skewed(), variant="censored_exchange",
                       schedule="harmonic", schedule_c=1.0, horizon=30_000, trials=20,
                       sweep_axis="alphabet", sweep_values=("5", "12", "26"))
            out.append((f"fig7_{topo.split(':')[0]}", cfg))
        return out
    raise ConfigError(f"unknown replicate scenario {name!r}; use fig1..fig7")

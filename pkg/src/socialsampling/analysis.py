"""Stochastic-approximation instrumentation.

Every realized round splits exactly into mean dynamics, a perturbation
term, and zero-conditional-mean noise:

    Q(t+1) = Q(t) + d(t) [ Hbar(t) Q(t) + C(t) + M(t) ],

with Hbar(t) the expected weight structure, C(t) the bias from sampling
away from the estimate (and message-dependent weights), and M(t) a
martingale difference. This module extracts that split from recorded
rounds, verifies it, evaluates the convergence conditions, and provides
the trace metrics used by the experiment harness.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    DegenerateWindow,
    DimensionMismatch,
    ReconstructionMismatch,
    TooLargeToEnumerate,
)
from .protocol import (
    AlgorithmVariant,
    CensoredExchange,
    NetworkState,
    RoundRecord,
    StepSchedule,
    _AveragingFamily,
    message_matrix,
)
from .topology import Graph, is_connected, spectrum

RECONSTRUCTION_TOL = 1e-12
MIXING_TOL = 1e-12
MASS_TOL = 1e-10
ENUM_CAP = 10**6


# --------------------------------------------------------------------------
# Step decomposition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StepDecomposition:
    """The (Hbar, C, M) split of one realized round."""

    Hbar: np.ndarray
    C: np.ndarray
    Mnoise: np.ndarray
    expected_weights: tuple[np.ndarray, np.ndarray, np.ndarray]


def _split_terms(Qb, P, Y1, A, B, W, Abar, Bbar, Wbar):
    """C and M for given realized and expected weights (pure algebra)."""
    WB = W - np.diag(B)
    WBbar = Wbar - np.diag(Bbar)
    C = WB @ (P - Qb) + (WB - WBbar) @ Y1
    Mn = (
        (WB - np.diag(A) - WBbar + np.diag(Abar)) @ Qb
        + WBbar @ (Y1 - P)
        + (WBbar - WB) @ P
    )
    return C, Mn


def decompose(record: RoundRecord, variant: AlgorithmVariant) -> StepDecomposition:
    """Split one recorded round and verify it reproduces the realized step."""
    g = record.graph
    Abar, Bbar, Wbar = variant.expected_weights(g, record.silent)
    Hbar = Wbar - np.diag(Bbar) - np.diag(Abar)
    Y1 = message_matrix(record.Y, record.Q_before.shape[1])
    C, Mn = _split_terms(
        record.Q_before, record.P, Y1, record.A, record.B, record.W, Abar, Bbar, Wbar
    )
    recon = record.Q_before + record.delta * (Hbar @ record.Q_before + C + Mn)
    err = np.abs(recon - record.Q_after).max()
    if err > RECONSTRUCTION_TOL:
        raise ReconstructionMismatch(
            f"round {record.t}: reconstruction off by {err:.3e} "
            f"(> {RECONSTRUCTION_TOL:.0e}); expected-weight formulas are wrong"
        )
    return StepDecomposition(Hbar=Hbar, C=C, Mnoise=Mn, expected_weights=(Abar, Bbar, Wbar))


# --------------------------------------------------------------------------
# Exhaustive-outcome oracles
# --------------------------------------------------------------------------

def _outcome_options(P: np.ndarray, silent: np.ndarray):
    n, M = P.shape
    options = []
    for i in range(n):
        opts = []
        if silent[i] > 0.0:
            opts.append((0, float(silent[i])))
        for m in range(M):
            if P[i, m] > 0.0:
                opts.append((m + 1, float(P[i, m])))
        options.append(opts)
    return options


def _enumerate_outcomes(P, silent, cap):
    options = _outcome_options(P, silent)
    total = math.prod(len(o) for o in options)
    if total > cap:
        raise TooLargeToEnumerate(f"{total} joint outcomes exceed the cap {cap}")
    for combo in itertools.product(*options):
        Y = np.array([m for m, _ in combo], dtype=np.int64)
        prob = math.prod(p for _, p in combo)
        yield Y, prob


def _enumerated_mean(state, variant, schedule, graph, cap, which):
    delta = variant.effective_delta(schedule, state.t)
    P, silent = variant.sampling(state.Q, graph, delta)
    Abar, Bbar, Wbar = variant.expected_weights(graph, silent)
    acc = np.zeros_like(state.Q)
    for Y, prob in _enumerate_outcomes(P, silent, cap):
        A, B, W = variant.realized_weights(graph, Y)
        Y1 = message_matrix(Y, state.M)
        C, Mn = _split_terms(state.Q, P, Y1, A, B, W, Abar, Bbar, Wbar)
        acc += prob * (Mn if which == "noise" else C)
    return acc


def conditional_mean_noise(
    state: NetworkState,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
    cap: int = ENUM_CAP,
) -> np.ndarray:
    """Exact E[M(t) | history] by enumerating every joint message outcome.

    Should be the zero matrix for any correct expected-weight formula;
    this is the independent oracle for ``decompose``.
    """
    return _enumerated_mean(state, variant, schedule, graph, cap, "noise")


def conditional_mean_perturbation(
    state: NetworkState,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
    cap: int = ENUM_CAP,
) -> np.ndarray:
    """Exact E[C(t) | history] by outcome enumeration."""
    return _enumerated_mean(state, variant, schedule, graph, cap, "perturbation")


def expected_perturbation(
    state: NetworkState,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
) -> np.ndarray:
    """Closed-form E[C(t) | history] for the built-in variants.

    Averaging rules have deterministic weights, so the conditional mean
    is just W (P - Q) (identically zero while P = Q). For censored
    exchange the message-dependent weights contribute cross terms driven
    by the per-node activity probabilities.
    """
    delta = variant.effective_delta(schedule, state.t)
    P, silent = variant.sampling(state.Q, graph, delta)
    Abar, Bbar, Wbar = variant.expected_weights(graph, silent)
    base = (Wbar - np.diag(Bbar)) @ (P - state.Q)
    if isinstance(variant, _AveragingFamily):
        return base
    if isinstance(variant, CensoredExchange):
        a = 1.0 - silent
        adj = graph.adjacency.astype(np.float64)
        recv = a[:, None] * (adj @ ((1.0 - a)[:, None] * P))
        pay = ((1.0 - a) * (adj @ a))[:, None] * P
        return base + recv - pay
    raise NotImplementedError(f"no closed form for variant {variant.name!r}")


# --------------------------------------------------------------------------
# Condition report
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    """Measured pass/fail evidence for the five convergence conditions."""

    # 1: per-node row identity of the realized weights
    mixing_residual: float
    mixing_round: int | None
    mixing_ok: bool
    # 2: step-size schedule classification (closed form)
    schedule_kind: str
    schedule_vanishes: bool
    schedule_sum_diverges: bool
    schedule_square_summable: bool
    schedule_ok: bool
    # 3: limiting mean dynamics
    dyn_symmetric: bool
    dyn_rowsum_residual: float
    dyn_zero_multiplicity: int
    dyn_largest_nonzero: float
    dyn_spectral_radius: float
    dyn_literal_contraction: bool
    dyn_ok: bool
    # 4: sup_t ||E[C|history]|| / d(t) over checked rounds
    perturbation_ratio: float
    perturbation_finite: bool
    # 5: worst drift of the column sums from their initial value
    mass_drift: float
    mass_round: int | None
    mass_ok: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, (np.floating, np.integer)):
                out[k] = v.item()
        return out


def schedule_facts(schedule: StepSchedule | None) -> dict:
    if schedule is None:  # unit step
        return {
            "schedule_kind": "unit",
            "schedule_vanishes": False,
            "schedule_sum_diverges": True,
            "schedule_square_summable": False,
            "schedule_ok": False,
        }
    facts = schedule.classify()
    return {
        "schedule_kind": schedule.kind,
        "schedule_vanishes": facts["vanishes"],
        "schedule_sum_diverges": facts["sum_diverges"],
        "schedule_square_summable": facts["square_summable"],
        "schedule_ok": facts["admissible"],
    }


def dynamics_facts(variant: AlgorithmVariant, graph: Graph, zero_tol: float = 1e-8) -> dict:
    H = variant.limiting_dynamics(graph)
    symmetric = bool(np.abs(H - H.T).max() <= 1e-12)
    rowsum = float(np.abs(H.sum(axis=1)).max())
    eigs = spectrum(H)
    radius = float(np.abs(eigs).max()) if eigs.size else 0.0
    ztol = zero_tol * max(1.0, radius)
    zero_mult = int((np.abs(eigs) <= ztol).sum())
    nonzero = eigs[np.abs(eigs) > ztol]
    largest_nonzero = float(nonzero.max()) if nonzero.size else 0.0
    no_positive = not nonzero.size or largest_nonzero < 0.0
    simple_zero = zero_mult == 1 if is_connected(graph) else zero_mult >= 1
    return {
        "dyn_symmetric": symmetric,
        "dyn_rowsum_residual": rowsum,
        "dyn_zero_multiplicity": zero_mult,
        "dyn_largest_nonzero": largest_nonzero,
        "dyn_spectral_radius": radius,
        "dyn_literal_contraction": bool(radius < 1.0),
        "dyn_ok": bool(symmetric and rowsum <= 1e-9 and no_positive and simple_zero),
    }


def perturbation_ratio_at(
    state: NetworkState,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
    enum_cap: int = 0,
) -> float:
    """||E[C|history]||_F / d(t) at one state; exact enumeration when the
    outcome space fits under ``enum_cap``, closed form otherwise."""
    delta = variant.effective_delta(schedule, state.t)
    if enum_cap:
        try:
            ec = conditional_mean_perturbation(state, variant, schedule, graph, cap=enum_cap)
            return float(np.linalg.norm(ec) / delta)
        except TooLargeToEnumerate:
            pass
    ec = expected_perturbation(state, variant, schedule, graph)
    return float(np.linalg.norm(ec) / delta)


def assemble_condition_report(
    mixing_residual: float,
    mixing_round: int | None,
    schedule: StepSchedule | None,
    variant: AlgorithmVariant,
    graph: Graph,
    perturbation_ratio: float,
    mass_drift: float,
    mass_round: int | None,
) -> ConditionReport:
    return ConditionReport(
        mixing_residual=float(mixing_residual),
        mixing_round=mixing_round,
        mixing_ok=bool(mixing_residual <= MIXING_TOL),
        **schedule_facts(schedule),
        **dynamics_facts(variant, graph),
        perturbation_ratio=float(perturbation_ratio),
        perturbation_finite=bool(np.isfinite(perturbation_ratio)),
        mass_drift=float(mass_drift),
        mass_round=mass_round,
        mass_ok=bool(mass_drift <= MASS_TOL),
    )


def check_conditions(
    records: list[RoundRecord],
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
    enum_cap: int = 1000,
) -> ConditionReport:
    """Evaluate the five conditions on a recorded trajectory segment."""
    if not records:
        raise ValueError("need at least one recorded round")
    mix_res, mix_round = 0.0, None
    for rec in records:
        resid = float(np.abs(rec.W.sum(axis=1) - rec.A - rec.B).max())
        if mix_round is None or resid > mix_res:
            mix_res, mix_round = resid, rec.t
    ratio = 0.0
    for rec in records:
        r = perturbation_ratio_at(
            NetworkState(rec.t, rec.Q_before), variant, schedule, graph, enum_cap=enum_cap
        )
        ratio = max(ratio, r)
    ref = records[0].Q_before.sum(axis=0)
    drift, drift_round = 0.0, None
    for rec in records:
        d = float(np.abs(rec.Q_after.sum(axis=0) - ref).max())
        if drift_round is None or d > drift:
            drift, drift_round = d, rec.t
    return assemble_condition_report(
        mixing_residual=mix_res,
        mixing_round=mix_round if mix_res > MIXING_TOL else None,
        schedule=schedule,
        variant=variant,
        graph=graph,
        perturbation_ratio=ratio,
        mass_drift=drift,
        mass_round=drift_round if drift > MASS_TOL else None,
    )


# --------------------------------------------------------------------------
# Trace metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceMetrics:
    """Per-recorded-round metrics of one trial."""

    rounds: np.ndarray
    mse: np.ndarray
    disagreement: np.ndarray
    mass: np.ndarray          # (records, M) column sums of Q
    target: np.ndarray        # histogram the run is measured against
    n: int
    absorbed_at: int | None = None
    absorbed_atom: int | None = None      # 1-indexed consensus opinion, if absorbed
    final_mean: np.ndarray | None = None  # network-average row at the horizon
    engine: str = ""

    @property
    def mass_drift(self) -> np.ndarray:
        return np.abs(self.mass - self.mass[0]).max(axis=1)


def mse_per_node(Q: np.ndarray, pi: np.ndarray) -> float:
    """(1/n) ||Q - 1 pi||_F^2."""
    Q = np.asarray(Q, float)
    pi = np.asarray(pi, float)
    if Q.ndim != 2 or pi.ndim != 1 or Q.shape[1] != pi.size:
        raise DimensionMismatch(f"state {Q.shape} vs target {pi.shape}")
    diff = Q - pi[None, :]
    return float((diff * diff).sum() / Q.shape[0])


def disagreement(Q: np.ndarray) -> float:
    """Largest pairwise distance between node estimates."""
    Q = np.asarray(Q, float)
    dd = Q[:, None, :] - Q[None, :, :]
    return float(np.sqrt((dd * dd).sum(axis=2)).max())


def time_to_threshold(rounds: np.ndarray, mse: np.ndarray, tau: float) -> int | None:
    """First recorded round with mse <= tau, or None."""
    if tau <= 0:
        raise ValueError("threshold must be positive")
    hits = np.nonzero(np.asarray(mse) <= tau)[0]
    if hits.size == 0:
        return None
    return int(np.asarray(rounds)[hits[0]])


def rate_fit(rounds: np.ndarray, mse: np.ndarray, t_min: float, t_max: float) -> float:
    """Least-squares slope of log(mse) against log(t) over the window."""
    rounds = np.asarray(rounds, float)
    mse = np.asarray(mse, float)
    keep = (rounds >= t_min) & (rounds <= t_max) & (rounds > 0) & (mse > 0)
    if keep.sum() < 2 or np.unique(rounds[keep]).size < 2:
        raise DegenerateWindow(f"only {int(keep.sum())} usable points in [{t_min}, {t_max}]")
    return float(np.polyfit(np.log(rounds[keep]), np.log(mse[keep]), 1)[0])

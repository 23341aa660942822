"""Fast trajectory execution.

Trials run many cheap rounds on small matrices, so the hot loop is
compiled with numba when available; a numpy fallback implements the
identical arithmetic (same operation order, same uniform stream), and
the two engines are held bit-for-bit equal by tests. Uniforms are drawn
in chunks of ``rng.random((rounds, n))``, which produces the same stream
as one ``rng.random(n)`` call per round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .protocol import (
    ABSORPTION_TOL,
    AlgorithmVariant,
    CensoredExchange,
    StepSchedule,
    _AveragingFamily,
    draw_messages,
)
from .topology import Graph, max_degree

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None
    HAVE_NUMBA = False


def record_grid(horizon: int, stride: str | int = "log") -> np.ndarray:
    """Rounds at which metrics are recorded; always contains 0 and the
    horizon. The default grid is geometric, ceil(1.2^k)."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if stride == "log":
        pts = {0, horizon}
        v = 1.0
        while v <= horizon:
            pts.add(int(np.ceil(v)))
            v *= 1.2
        return np.array(sorted(pts), dtype=np.int64)
    n = int(stride)
    if n < 1:
        raise ValueError("linear stride must be >= 1")
    pts = set(range(0, horizon + 1, n))
    pts.update((0, horizon))
    return np.array(sorted(pts), dtype=np.int64)


@dataclass
class TrajectoryResult:
    """Metrics sampled along one trial."""

    rounds: np.ndarray
    mse: np.ndarray
    disagreement: np.ndarray
    mass: np.ndarray          # (records, M) column sums of Q
    target: np.ndarray        # the histogram the mse is measured against
    Q_final: np.ndarray
    t_final: int
    absorbed_at: int | None
    engine: str
    states: np.ndarray | None = None  # (records, n, M) when kept
    checkpoints: list | None = None   # protocol.Checkpoint per record, when kept


def trace_point(Q: np.ndarray, target: np.ndarray) -> tuple[float, float, np.ndarray]:
    """(mse per node, max pairwise row distance, column sums)."""
    n = Q.shape[0]
    diff = Q - target[None, :]
    mse = float((diff * diff).sum() / n)
    dd = Q[:, None, :] - Q[None, :, :]
    dis = float(np.sqrt((dd * dd).sum(axis=2)).max())
    return mse, dis, Q.sum(axis=0)


# --------------------------------------------------------------------------
# numpy round loops (reference arithmetic)
# --------------------------------------------------------------------------

def _avg_rounds_np(Q, adj, a_diag, wbase, deltas, U, project, check_absorb):
    k, n = U.shape
    M = Q.shape[1]
    rows = np.arange(n)
    for r in range(k):
        delta = deltas[r]
        if project:
            src = np.where(Q > 0.0, Q, 0.0)
            cum = np.cumsum(src, axis=1)
            v = U[r] * cum[:, -1]
        else:
            src = Q
            cum = np.cumsum(Q, axis=1)
            v = U[r]
        idx = (v[:, None] < cum).argmax(axis=1)
        miss = v >= cum[:, -1]
        if miss.any():
            pos = src > 0.0
            last = M - 1 - np.argmax(pos[:, ::-1], axis=1)
            idx = np.where(miss, last, idx)
        Y1 = np.zeros((n, M), dtype=np.int64)
        Y1[rows, idx] = 1
        counts = adj @ Y1
        coef = 1.0 - delta * a_diag
        wd = delta * wbase
        Q[:] = coef[:, None] * Q + wd * counts
        if check_absorb:
            m0 = int(Q[0].argmax())
            if Q[:, m0].min() >= 1.0 - ABSORPTION_TOL:
                return r
    return -1


def _censor_rounds_np(Q, adj, dmax, deltas, U):
    k, n = U.shape
    M = Q.shape[1]
    rows = np.arange(n)
    for r in range(k):
        delta = deltas[r]
        thresh = dmax * delta
        P = np.where(Q >= thresh, Q, 0.0)
        cum = np.cumsum(P, axis=1)
        u = U[r]
        idx = (u[:, None] < cum).argmax(axis=1)
        act = u < cum[:, -1]
        Y1 = np.zeros((n, M), dtype=np.int64)
        Y1[rows[act], idx[act]] = 1
        acti = act.astype(np.int64)
        N = (adj @ acti) * acti
        net = acti[:, None] * (adj @ Y1) - N[:, None] * Y1
        Q += delta * net
    return -1


# --------------------------------------------------------------------------
# numba kernels (same arithmetic, loop form)
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _avg_rounds_nb(Q, nbr, ptr, a_diag, wbase, deltas, U, project, check_absorb):
        k, n = U.shape
        M = Q.shape[1]
        msg = np.empty(n, np.int64)
        counts = np.empty((n, M), np.int64)
        prow = np.empty(M, np.float64)
        for r in range(k):
            delta = deltas[r]
            for i in range(n):
                u = U[r, i]
                sel = -1
                if project:
                    tot = 0.0
                    for m in range(M):
                        q = Q[i, m]
                        p = q if q > 0.0 else 0.0
                        prow[m] = p
                        tot += p
                    v = u * tot
                    cm = 0.0
                    for m in range(M):
                        cm += prow[m]
                        if v < cm:
                            sel = m
                            break
                    if sel < 0:
                        for m in range(M - 1, -1, -1):
                            if prow[m] > 0.0:
                                sel = m
                                break
                else:
                    cm = 0.0
                    for m in range(M):
                        cm += Q[i, m]
                        if u < cm:
                            sel = m
                            break
                    if sel < 0:
                        for m in range(M - 1, -1, -1):
                            if Q[i, m] > 0.0:
                                sel = m
                                break
                msg[i] = sel
            for i in range(n):
                for m in range(M):
                    counts[i, m] = 0
            for i in range(n):
                for e in range(ptr[i], ptr[i + 1]):
                    counts[i, msg[nbr[e]]] += 1
            wd = delta * wbase
            for i in range(n):
                coef = 1.0 - delta * a_diag[i]
                for m in range(M):
                    t1 = coef * Q[i, m]
                    t2 = wd * counts[i, m]
                    Q[i, m] = t1 + t2
            if check_absorb:
                m0 = 0
                best = Q[0, 0]
                for m in range(1, M):
                    if Q[0, m] > best:
                        best = Q[0, m]
                        m0 = m
                absorbed = True
                for i in range(n):
                    if Q[i, m0] < 1.0 - 1e-9:
                        absorbed = False
                        break
                if absorbed:
                    return r
        return -1

    @numba.njit(cache=True)
    def _censor_rounds_nb(Q, nbr, ptr, dmax, deltas, U):
        k, n = U.shape
        M = Q.shape[1]
        msg = np.empty(n, np.int64)
        net = np.empty((n, M), np.int64)
        for r in range(k):
            delta = deltas[r]
            thresh = dmax * delta
            for i in range(n):
                u = U[r, i]
                cm = 0.0
                sel = 0
                for m in range(M):
                    q = Q[i, m]
                    if q >= thresh:
                        cm += q
                        if u < cm:
                            sel = m + 1
                            break
                msg[i] = sel
            for i in range(n):
                for m in range(M):
                    net[i, m] = 0
            for i in range(n):
                if msg[i] == 0:
                    continue
                ni = 0
                for e in range(ptr[i], ptr[i + 1]):
                    j = nbr[e]
                    if msg[j] != 0:
                        ni += 1
                        net[i, msg[j] - 1] += 1
                net[i, msg[i] - 1] -= ni
            for i in range(n):
                if msg[i] == 0:
                    continue
                for m in range(M):
                    v = net[i, m]
                    if v != 0:
                        Q[i, m] = Q[i, m] + delta * v
        return -1


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------

def resolve_engine(engine: str, variant: AlgorithmVariant) -> str:
    supported = isinstance(variant, (_AveragingFamily, CensoredExchange))
    if engine == "auto":
        return "numba" if (HAVE_NUMBA and supported) else "numpy"
    if engine == "numba":
        if not HAVE_NUMBA:
            raise ValueError("numba engine requested but numba is not installed")
        if not supported:
            raise ValueError(f"variant {variant.name!r} has no compiled kernel")
        return "numba"
    if engine == "numpy":
        return "numpy"
    raise ValueError(f"unknown engine {engine!r}")


def _deltas(variant: AlgorithmVariant, schedule: StepSchedule | None, t0: int, k: int):
    if variant.fixed_unit_step or schedule is None:
        return np.ones(k)
    return schedule.values(t0, k)


def run_trajectory(
    Q0: np.ndarray,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
    rng: np.random.Generator,
    horizon: int,
    record_rounds: np.ndarray | None = None,
    target: np.ndarray | None = None,
    stop_on_absorption: bool = False,
    engine: str = "auto",
    keep_states: bool = False,
    keep_checkpoints: bool = False,
    on_record: Callable[[int, np.ndarray], None] | None = None,
    t0: int = 0,
) -> TrajectoryResult:
    """Run one trial from round ``t0`` (usually 0) to ``horizon``,
    recording metrics on a fixed round grid. With ``stop_on_absorption``
    (averaging rules) the loop exits once every row sits within tolerance
    of one elementary vector; later grid points repeat the frozen
    metrics, so the grid is identical across trials regardless of when
    absorption happens. Checkpoints capture (t, Q, RNG position) at
    record points; resuming from one with ``t0=checkpoint.t`` replays the
    original tail bit for bit."""
    from .protocol import Checkpoint, rng_state

    Q = np.array(Q0, dtype=np.float64, copy=True)
    n, M = Q.shape
    if target is None:
        target = Q.sum(axis=0) / n
    grid = record_grid(horizon) if record_rounds is None else np.asarray(record_rounds, np.int64)
    grid = grid[grid >= t0]
    eng = resolve_engine(engine, variant)

    averaging = isinstance(variant, _AveragingFamily)
    censored = isinstance(variant, CensoredExchange)
    if not (averaging or censored):
        return _run_generic(
            Q, variant, schedule, graph, rng, grid, target,
            keep_states, keep_checkpoints, on_record, t0,
        )
    if averaging:
        a_diag, _, _ = variant.realized_weights(graph, np.zeros(n, np.int64))
        wbase = 1.0 / (max_degree(graph) + 1)
        project = bool(variant.project_sampling)
        check_absorb = bool(stop_on_absorption)
    else:
        dmax = float(max_degree(graph))
    if eng == "numba":
        nbr, ptr = graph.neighbor_lists()
    else:
        adj = graph.adjacency.astype(np.int64)

    R = grid.size
    mse = np.empty(R)
    dis = np.empty(R)
    mass = np.empty((R, M))
    states = np.empty((R, n, M)) if keep_states else None
    checkpoints = [] if keep_checkpoints else None

    def record(i: int, t: int, replayable: bool):
        mse[i], dis[i], mass[i] = trace_point(Q, target)
        if states is not None:
            states[i] = Q
        if checkpoints is not None and replayable:
            # only exact resume points: an early absorption stop consumes
            # the rest of its uniform chunk, so frozen records are skipped
            checkpoints.append(Checkpoint(t, Q.copy(), rng_state(rng)))
        if on_record is not None:
            on_record(t, Q)

    t = t0
    absorbed_at: int | None = None
    i0 = 0
    if grid[0] == t0:
        record(0, t0, True)
        i0 = 1
    for i in range(i0, R):
        stop_t = int(grid[i])
        if absorbed_at is None:
            k = stop_t - t
            deltas = _deltas(variant, schedule, t, k)
            U = rng.random((k, n))
            if averaging:
                if eng == "numba":
                    r = _avg_rounds_nb(Q, nbr, ptr, a_diag, wbase, deltas, U,
                                       project, check_absorb)
                else:
                    r = _avg_rounds_np(Q, adj, a_diag, wbase, deltas, U,
                                       project, check_absorb)
            else:
                if eng == "numba":
                    r = _censor_rounds_nb(Q, nbr, ptr, dmax, deltas, U)
                else:
                    r = _censor_rounds_np(Q, adj, dmax, deltas, U)
            if r >= 0:
                t = t + r + 1
                absorbed_at = t
            else:
                t = stop_t
        record(i, int(grid[i]), absorbed_at is None)
    return TrajectoryResult(
        rounds=grid.copy(),
        mse=mse,
        disagreement=dis,
        mass=mass,
        target=np.asarray(target, float),
        Q_final=Q,
        t_final=int(grid[-1]) if absorbed_at is None else max(int(grid[-1]), t),
        absorbed_at=absorbed_at,
        engine=eng,
        states=states,
        checkpoints=checkpoints,
    )


def _run_generic(Q, variant, schedule, graph, rng, grid, target,
                 keep_states, keep_checkpoints, on_record, t0=0):
    """Round-by-round fallback for custom weight rules."""
    from .protocol import Checkpoint, rng_state

    n, M = Q.shape
    R = grid.size
    mse = np.empty(R)
    dis = np.empty(R)
    mass = np.empty((R, M))
    states = np.empty((R, n, M)) if keep_states else None
    checkpoints = [] if keep_checkpoints else None

    def record(i, t):
        mse[i], dis[i], mass[i] = trace_point(Q, target)
        if states is not None:
            states[i] = Q
        if checkpoints is not None:
            checkpoints.append(Checkpoint(t, Q.copy(), rng_state(rng)))
        if on_record is not None:
            on_record(t, Q)

    t = t0
    start = 0
    if grid[0] == t0:
        record(0, t0)
        start = 1
    for i in range(start, R):
        while t < grid[i]:
            delta = variant.effective_delta(schedule, t)
            P, silent = variant.sampling(Q, graph, delta)
            Y = draw_messages(P, silent, rng, silence_allowed=variant.silence_allowed)
            A, B, W = variant.realized_weights(graph, Y)
            Y1 = np.zeros((n, M))
            act = Y > 0
            Y1[np.nonzero(act)[0], Y[act] - 1] = 1.0
            Q = Q - delta * (A[:, None] * Q) - delta * (B[:, None] * Y1) + delta * (W @ Y1)
            t += 1
        record(i, t)
    return TrajectoryResult(
        rounds=grid.copy(),
        mse=mse,
        disagreement=dis,
        mass=mass,
        target=np.asarray(target, float),
        Q_final=Q,
        t_final=int(grid[-1]),
        absorbed_at=None,
        engine="generic",
        states=states,
        checkpoints=checkpoints,
    )

"""The social-sampling state machine.

Each round, every node draws one message from a sampling distribution
built from its current estimate, broadcasts it to its neighbors, and
applies a linear update

    Q_i(t+1) = (1 - d(t) A_ii) Q_i(t) - d(t) B_ii Y_i(t)
               + sum_{j in N_i} d(t) W_ij Y_j(t),

where silent messages contribute the zero vector. Three concrete weight
rules are provided: plain averaging (unit step), averaging with a
decaying step, and censored mass exchange (which conserves the column
sums of Q exactly).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import (
    Condition1Violation,
    InvalidRow,
    SimplexViolation,
)
from .simplex import NEG_TOL, SUM_TOL, OpinionSample
from .topology import Graph, max_degree

CONDITION1_TOL = 1e-12
SIMPLEX_STEP_TOL = 1e-9
ABSORPTION_TOL = 1e-9


# --------------------------------------------------------------------------
# Step-size schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSchedule:
    """Per-round gain d(t).

    kinds: ``constant`` d=c, ``harmonic`` d=c/(t+1), ``square`` d=c/(t+1)^2.
    The applied value is min(cap, formula); ``cap=None`` disables capping
    (replication mode for the nominal c=10 figures).
    """

    kind: str
    c: float
    cap: float | None = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "harmonic", "square"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.c <= 0:
            raise ValueError("schedule constant must be positive")
        if self.cap is not None and not 0.0 < self.cap <= 1.0:
            raise ValueError("schedule cap must lie in (0, 1]")

    def value(self, t: int) -> float:
        if self.kind == "constant":
            v = self.c
        elif self.kind == "harmonic":
            v = self.c / (t + 1)
        else:
            v = self.c / ((t + 1) * (t + 1))
        if self.cap is not None and v > self.cap:
            return self.cap
        return v

    def values(self, t0: int, count: int) -> np.ndarray:
        """Vector of d(t) for t0 <= t < t0+count (same floats as value)."""
        t = np.arange(t0, t0 + count, dtype=np.float64)
        if self.kind == "constant":
            v = np.full(count, self.c)
        elif self.kind == "harmonic":
            v = self.c / (t + 1.0)
        else:
            v = self.c / ((t + 1.0) * (t + 1.0))
        if self.cap is not None:
            v = np.minimum(v, self.cap)
        return v

    def classify(self) -> dict:
        """Closed-form facts used by the step-size condition checker."""
        vanishes = self.kind in ("harmonic", "square")
        sum_diverges = self.kind in ("constant", "harmonic")
        square_summable = self.kind in ("harmonic", "square")
        return {
            "vanishes": vanishes,
            "sum_diverges": sum_diverges,
            "square_summable": square_summable,
            "admissible": vanishes and sum_diverges and square_summable,
        }


def constant(c: float, cap: float | None = 1.0) -> StepSchedule:
    return StepSchedule("constant", c, cap)


def harmonic(c: float, cap: float | None = 1.0) -> StepSchedule:
    return StepSchedule("harmonic", c, cap)


def square(c: float, cap: float | None = 1.0) -> StepSchedule:
    return StepSchedule("square", c, cap)


def eval_schedule(schedule: StepSchedule, t: int) -> float:
    """Applied step size at round t (capped formula value)."""
    if t < 0:
        raise ValueError("round index must be nonnegative")
    return schedule.value(t)


# --------------------------------------------------------------------------
# Network state and per-round record
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkState:
    """Round index plus the n x M matrix of per-node estimates."""

    t: int
    Q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=np.float64)
        q.setflags(write=False)
        object.__setattr__(self, "Q", q)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def M(self) -> int:
        return self.Q.shape[1]


@dataclass(frozen=True)
class RoundRecord:
    """Everything realized in one round, for decomposition and replay."""

    t: int
    delta: float
    P: np.ndarray        # (n, M) opinion sampling weights
    silent: np.ndarray   # (n,) per-node silence probability
    Y: np.ndarray        # (n,) message indices, 0 = silent
    A: np.ndarray        # (n,) diagonal of A(t)
    B: np.ndarray        # (n,) diagonal of B(t)
    W: np.ndarray        # (n, n) realized exchange weights
    Q_before: np.ndarray
    Q_after: np.ndarray
    graph: Graph

    def __post_init__(self):
        for name in ("P", "silent", "Y", "A", "B", "W", "Q_before", "Q_after"):
            arr = getattr(self, name)
            arr.setflags(write=False)


def message_matrix(Y: np.ndarray, M: int, dtype=np.float64) -> np.ndarray:
    """Stack message embeddings: zero rows for silence, e_m otherwise."""
    n = Y.shape[0]
    out = np.zeros((n, M), dtype=dtype)
    active = Y > 0
    out[np.nonzero(active)[0], Y[active] - 1] = 1
    return out


# --------------------------------------------------------------------------
# Algorithm variants
# --------------------------------------------------------------------------

class AlgorithmVariant:
    """Weight/sampling rule plugged into the generic linear update."""

    name: str = "custom"
    preserves_simplex: bool = False
    fixed_unit_step: bool = False
    # Whether the sampling rule can genuinely emit silence. Rules with
    # P = Q always transmit; a uniform landing past the accumulated row
    # total (an ulp-level event) is clamped, never read as silence.
    silence_allowed: bool = True

    def effective_delta(self, schedule: StepSchedule | None, t: int) -> float:
        if self.fixed_unit_step or schedule is None:
            return 1.0
        return schedule.value(t)

    def sampling(self, Q: np.ndarray, graph: Graph, delta: float):
        """Return (P, silent): per-node opinion weights and silence mass."""
        raise NotImplementedError

    def realized_weights(self, graph: Graph, Y: np.ndarray):
        """Return diagonal vectors A, B and the matrix W for this round."""
        raise NotImplementedError

    def expected_weights(self, graph: Graph, silent: np.ndarray):
        """Conditional expectations (Abar, Bbar, Wbar) given the history."""
        raise NotImplementedError

    def limiting_dynamics(self, graph: Graph) -> np.ndarray:
        """The time-invariant mean-dynamics matrix the iterates contract to."""
        raise NotImplementedError


def _validated_rows(Q: np.ndarray) -> None:
    sums = np.cumsum(Q, axis=1)[:, -1]
    bad = (Q.min(axis=1) < -NEG_TOL) | (np.abs(sums - 1.0) > SUM_TOL)
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        raise InvalidRow(
            f"sampling row {i} is not a distribution "
            f"(min {Q[i].min():.3e}, sum {sums[i]!r})"
        )


def _project_rows(Q: np.ndarray) -> np.ndarray:
    """Zero negative entries and renormalize each row."""
    P = np.where(Q > 0.0, Q, 0.0)
    totals = np.cumsum(P, axis=1)[:, -1]
    return P / totals[:, None]


class _AveragingFamily(AlgorithmVariant):
    """Shared weights for the two averaging rules:
    A_ii = d_i/(d_max+1), B = 0, W_ij = 1/(d_max+1) on edges."""

    project_sampling: bool = False
    silence_allowed = False

    def sampling(self, Q: np.ndarray, graph: Graph, delta: float):
        n = Q.shape[0]
        if self.project_sampling:
            return _project_rows(Q), np.zeros(n)
        _validated_rows(Q)
        return Q.copy(), np.zeros(n)

    def _base(self, graph: Graph):
        wbase = 1.0 / (max_degree(graph) + 1)
        W = graph.adjacency * wbase
        A = W.sum(axis=1)  # = d_i * wbase; row sums make Condition 1 exact
        return A, np.zeros(graph.n), W

    def realized_weights(self, graph: Graph, Y: np.ndarray):
        return self._base(graph)

    def expected_weights(self, graph: Graph, silent: np.ndarray):
        return self._base(graph)

    def limiting_dynamics(self, graph: Graph) -> np.ndarray:
        A, _, W = self._base(graph)
        return W - np.diag(A)


@dataclass(frozen=True)
class Averaging(_AveragingFamily):
    """Unit-step averaging of social samples; absorbs at a random
    elementary consensus whose expectation is the target histogram."""

    name = "averaging"
    preserves_simplex = True
    fixed_unit_step = True


@dataclass(frozen=True)
class DecayingAveraging(_AveragingFamily):
    """Averaging of social samples with a decaying step size; converges
    to a random common distribution with mean equal to the target."""

    name = "decaying_averaging"
    # Rows provably stay in the simplex whenever d(t) * A_ii <= 1, which the
    # default schedule cap guarantees; with project_sampling the uncapped
    # nominal schedule is allowed and out-of-simplex rows are projected
    # before sampling.
    project_sampling: bool = False

    @property
    def preserves_simplex(self) -> bool:  # type: ignore[override]
        return not self.project_sampling


@dataclass(frozen=True)
class CensoredExchange(AlgorithmVariant):
    """Mass exchange with censoring.

    Opinions whose estimated mass falls below d_max * d(t) are silenced.
    An edge exchanges only when both endpoints are non-silent: the sender
    pays d(t) along its sampled opinion to each active neighbor and
    receives theirs, so column sums of Q are conserved on every path.
    """

    name = "censored_exchange"
    preserves_simplex = True

    def sampling(self, Q: np.ndarray, graph: Graph, delta: float):
        thresh = max_degree(graph) * delta
        P = np.where(Q >= thresh, Q, 0.0)
        silent = 1.0 - np.cumsum(P, axis=1)[:, -1]
        np.clip(silent, 0.0, 1.0, out=silent)
        return P, silent

    def realized_weights(self, graph: Graph, Y: np.ndarray):
        act = (Y > 0).astype(np.float64)
        W = graph.adjacency * np.outer(act, act)
        B = W.sum(axis=1)
        return np.zeros(graph.n), B, W

    def expected_weights(self, graph: Graph, silent: np.ndarray):
        a = 1.0 - silent
        Wbar = graph.adjacency * np.outer(a, a)
        Bbar = Wbar.sum(axis=1)
        return np.zeros(graph.n), Bbar, Wbar

    def limiting_dynamics(self, graph: Graph) -> np.ndarray:
        # Thresholds vanish with d(t), so the all-active weights are the limit.
        adj = graph.adjacency.astype(np.float64)
        return adj - np.diag(adj.sum(axis=1))


@dataclass(frozen=True)
class Custom(AlgorithmVariant):
    """Hook for arbitrary rules of the generic linear update.

    ``sampling_rule(Q, graph, delta) -> (P, silent)``,
    ``weight_rule(graph, Y) -> (A, B, W)``,
    ``expectation_rule(graph, silent) -> (Abar, Bbar, Wbar)``,
    ``limit_rule(graph) -> Hbar`` (optional).
    """

    sampling_rule: Callable = None
    weight_rule: Callable = None
    expectation_rule: Callable = None
    limit_rule: Callable | None = None
    label: str = "custom"
    simplex_preserving: bool = False

    def __post_init__(self):
        object.__setattr__(self, "name", self.label)
        object.__setattr__(self, "preserves_simplex", self.simplex_preserving)

    def sampling(self, Q, graph, delta):
        return self.sampling_rule(Q, graph, delta)

    def realized_weights(self, graph, Y):
        return self.weight_rule(graph, Y)

    def expected_weights(self, graph, silent):
        return self.expectation_rule(graph, silent)

    def limiting_dynamics(self, graph):
        if self.limit_rule is None:
            raise NotImplementedError("no limiting dynamics supplied")
        return self.limit_rule(graph)


# --------------------------------------------------------------------------
# Protocol operations
# --------------------------------------------------------------------------

def init_state(sample: OpinionSample) -> NetworkState:
    """Q_i(0) = e_{X_i}: every node starts certain of its own opinion."""
    Q = np.zeros((sample.n, sample.M))
    Q[np.arange(sample.n), sample.values - 1] = 1.0
    return NetworkState(0, Q)


def sampling_matrix(
    state: NetworkState,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
):
    """Per-node sampling rows (P, silent) for the current round."""
    delta = variant.effective_delta(schedule, state.t)
    return variant.sampling(state.Q, graph, delta)


def realize_weights(
    variant: AlgorithmVariant,
    graph: Graph,
    Y: np.ndarray,
    t: int = 0,
):
    """Realized (A, B, W) for the drawn messages; enforces the mixing
    identity sum_j W_ij - A_ii - B_ii = 0 per node."""
    A, B, W = variant.realized_weights(graph, Y)
    resid = np.abs(W.sum(axis=1) - A - B)
    worst = float(resid.max()) if resid.size else 0.0
    if worst > CONDITION1_TOL:
        i = int(resid.argmax())
        raise Condition1Violation(f"node {i}: row identity residual {worst:.3e}")
    return A, B, W


def apply_update(
    state: NetworkState,
    A: np.ndarray,
    B: np.ndarray,
    W: np.ndarray,
    Y: np.ndarray,
    delta: float,
    enforce_simplex: bool = False,
) -> NetworkState:
    """One synchronous application of the linear update."""
    Q = state.Q
    Y1 = message_matrix(Y, state.M)
    Qn = Q - delta * (A[:, None] * Q) - delta * (B[:, None] * Y1) + delta * (W @ Y1)
    if enforce_simplex:
        sums = Qn.sum(axis=1)
        if Qn.min() < -SIMPLEX_STEP_TOL or np.abs(sums - 1.0).max() > SIMPLEX_STEP_TOL:
            i = int(np.unravel_index(Qn.argmin(), Qn.shape)[0])
            raise SimplexViolation(
                f"row {i} left the simplex at round {state.t} "
                f"(min {Qn.min():.3e}, worst sum {sums[np.abs(sums - 1).argmax()]!r})"
            )
    return NetworkState(state.t + 1, Qn)


def draw_messages(
    P: np.ndarray,
    silent: np.ndarray,
    rng: np.random.Generator,
    silence_allowed: bool = True,
) -> np.ndarray:
    """Sample one message per node, consuming exactly n uniforms.

    Matches ``simplex.sample_message`` draw for draw: inverse CDF over the
    cumulative opinion weights, with the tail of the unit interval given
    to silence. When silence is not allowed (the P = Q rules), a uniform
    past the accumulated total is clamped to the last positive opinion.
    """
    n, M = P.shape
    u = rng.random(n)
    cum = np.cumsum(P, axis=1)
    idx = (u[:, None] < cum).argmax(axis=1)
    hit = u < cum[:, -1]
    Y = np.where(hit, idx + 1, 0).astype(np.int64)
    if not silence_allowed:
        miss = np.nonzero(~hit)[0]
        for i in miss:
            positive = np.nonzero(P[i] > 0)[0]
            Y[i] = positive[-1] + 1
    return Y


def step(
    state: NetworkState,
    variant: AlgorithmVariant,
    schedule: StepSchedule | None,
    graph: Graph,
    rng: np.random.Generator,
) -> tuple[NetworkState, RoundRecord]:
    """Run one full round and capture every intermediate quantity."""
    delta = variant.effective_delta(schedule, state.t)
    P, silent = variant.sampling(state.Q, graph, delta)
    Y = draw_messages(P, silent, rng, silence_allowed=variant.silence_allowed)
    A, B, W = realize_weights(variant, graph, Y, state.t)
    new = apply_update(state, A, B, W, Y, delta, enforce_simplex=variant.preserves_simplex)
    record = RoundRecord(
        t=state.t,
        delta=delta,
        P=P,
        silent=silent,
        Y=Y,
        A=A,
        B=B,
        W=W,
        Q_before=state.Q,
        Q_after=new.Q,
        graph=graph,
    )
    return new, record


# --------------------------------------------------------------------------
# Trajectory checkpoints
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    """Replayable snapshot: round index, estimates, RNG position."""

    t: int
    Q: np.ndarray
    rng_state: dict = field(repr=False)


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


def save_checkpoints(path: str | Path, checkpoints: Iterable[Checkpoint]) -> None:
    """One JSON object per line: t, row-major flattened Q at full precision,
    and the RNG position needed to resume the trajectory."""
    with open(path, "w") as fh:
        for cp in checkpoints:
            n, M = cp.Q.shape
            obj = {
                "t": cp.t,
                "n": n,
                "M": M,
                "q": [float(x) for x in cp.Q.ravel(order="C")],
                "rng": cp.rng_state,
            }
            fh.write(json.dumps(obj) + "\n")


def load_checkpoints(path: str | Path) -> list[Checkpoint]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        Q = np.array(obj["q"], dtype=np.float64).reshape(obj["n"], obj["M"])
        out.append(Checkpoint(t=int(obj["t"]), Q=Q, rng_state=obj["rng"]))
    return out

"""Probability-simplex primitives.

Distributions are dense row vectors over an opinion alphabet [1, M].
Messages are either an opinion index or silence; silence embeds as the
zero vector, opinion m as the elementary row vector e_m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadSum, EmptySample, IndexOutOfRange, NegativeMass

# Module-level tolerances; callers may monkeypatch for looser regimes.
SUM_TOL = 1e-9
NEG_TOL = 1e-12

SILENT = 0


def _as_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise BadSum(f"weights must be a nonempty 1-D vector, got shape {w.shape}")
    return w


@dataclass(frozen=True)
class Distribution:
    """A point on the M-simplex: nonnegative weights summing to 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = _as_weights(self.weights)
        if w.min() < -NEG_TOL:
            raise NegativeMass(f"weight {w.min():.3e} below -{NEG_TOL:.0e}")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise BadSum(f"weights sum to {w.sum()!r}, expected 1 within {SUM_TOL:.0e}")
        w = w.copy()
        w[w < 0] = 0.0
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return self.weights.size

    def __len__(self) -> int:
        return self.M


@dataclass(frozen=True)
class SubDistribution:
    """Nonnegative weights with total mass at most 1; the deficit is the
    probability of staying silent."""

    weights: np.ndarray

    def __post_init__(self):
        w = _as_weights(self.weights)
        if w.min() < -NEG_TOL:
            raise NegativeMass(f"weight {w.min():.3e} below -{NEG_TOL:.0e}")
        if w.sum() > 1.0 + SUM_TOL:
            raise BadSum(f"weights sum to {w.sum()!r} > 1")
        w = w.copy()
        w[w < 0] = 0.0
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return self.weights.size

    @property
    def silent_mass(self) -> float:
        return max(0.0, min(1.0, 1.0 - float(self.weights.sum())))


@dataclass(frozen=True)
class Message:
    """One transmitted message: opinion index in [1, M], or 0 for silence."""

    m: int = SILENT

    def __post_init__(self):
        if self.m < 0:
            raise IndexOutOfRange(f"message index {self.m} < 0")

    @property
    def is_silent(self) -> bool:
        return self.m == SILENT

    def embed(self, M: int) -> np.ndarray:
        """Vector form: the zero vector for silence, e_m otherwise."""
        if self.is_silent:
            return np.zeros(M)
        return elementary(self.m, M).weights.copy()

    @classmethod
    def silent(cls) -> "Message":
        return cls(SILENT)

    @classmethod
    def opinion(cls, m: int) -> "Message":
        if m < 1:
            raise IndexOutOfRange(f"opinion index {m} < 1")
        return cls(m)


@dataclass(frozen=True)
class OpinionSample:
    """Initial opinions of the n agents, each an index in [1, M]."""

    values: np.ndarray
    M: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 1:
            raise IndexOutOfRange("opinion values must be a 1-D integer vector")
        if v.size and (v.min() < 1 or v.max() > self.M):
            raise IndexOutOfRange(
                f"opinions must lie in [1, {self.M}], got range [{v.min()}, {v.max()}]"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


def make_distribution(weights) -> Distribution:
    """Validate, clamp tiny negatives to zero and renormalize."""
    d = Distribution(np.asarray(weights, dtype=np.float64))
    w = d.weights
    s = w.sum()
    if s != 1.0:
        w = w / s
    return Distribution(w)


def elementary(m: int, M: int) -> Distribution:
    """e_m: all mass on opinion m (1-indexed)."""
    if not 1 <= m <= M:
        raise IndexOutOfRange(f"elementary index {m} outside [1, {M}]")
    w = np.zeros(M)
    w[m - 1] = 1.0
    return Distribution(w)


def sample_message(p: SubDistribution | Distribution, rng: np.random.Generator) -> Message:
    """Draw one message by inverse CDF with a single uniform.

    Consumes exactly one draw from ``rng``. Opinions occupy the front of
    the unit interval in index order; the tail is silence. A
    ``Distribution`` never yields silence: a uniform landing past the
    accumulated total (a few-ulp event) is clamped to the last opinion
    with positive weight.
    """
    w = p.weights
    cum = np.cumsum(w)
    u = rng.random()
    idx = int(np.searchsorted(cum, u, side="right"))
    if idx < w.size:
        return Message(idx + 1)
    if isinstance(p, Distribution):
        positive = np.nonzero(w > 0)[0]
        return Message(int(positive[-1]) + 1)
    return Message(SILENT)


def empirical_histogram(sample: OpinionSample) -> Distribution:
    """Normalized histogram of the opinions: the estimation target."""
    if sample.n == 0:
        raise EmptySample("cannot build a histogram from zero opinions")
    counts = np.bincount(sample.values, minlength=sample.M + 1)[1:]
    return Distribution(counts / sample.n)

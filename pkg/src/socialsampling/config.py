"""Experiment configuration.

Configs are flat ``key = value`` text (one pair per line, ``#`` starts a
comment). Unknown keys are errors so that a config file always means
exactly what it ran. The same keys round-trip through the JSON summaries
emitted by the harness.

Schema (see README for the full table)::

    topology   grid | star | erdos_renyi | preferential_attachment | watts_strogatz
    rows, cols             grid / watts_strogatz dimensions
    n                      node count (star / erdos_renyi / preferential_attachment)
    p                      edge probability (erdos_renyi)
    m_new                  edges per new vertex (preferential_attachment)
    rewire_p               rewiring probability (watts_strogatz)
    require_connected      resample random graphs until connected (default true)
    alphabet               opinion alphabet size M
    initial    explicit | uniform_support | skewed
    initial_weights        comma list (explicit)
    support                support size M* (uniform_support; default M)
    variant    averaging | decaying_averaging | censored_exchange
    schedule   harmonic | constant | square   (default harmonic)
    schedule_c             schedule constant (default 10)
    schedule_cap           cap in (0,1] or "none" (default 1.0)
    horizon, trials, base_seed, record_stride ("log" or an integer)
    stop_on_absorption, paper_delta            booleans
    engine     auto | numba | numpy
    mse_threshold          time-to-threshold target (default 0.01)
    sweep      schedule | topology | alphabet | support   (optional)
    sweep_values           comma list of axis points
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .protocol import (
    Averaging,
    CensoredExchange,
    DecayingAveraging,
    StepSchedule,
)
from .topology import TopologySpec


# --------------------------------------------------------------------------
# Initial opinion laws
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Explicit:
    """Fixed weight vector."""

    weights: tuple[float, ...]
    kind = "explicit"

    def realize(self, rng: np.random.Generator, M: int) -> np.ndarray:
        if len(self.weights) != M:
            raise ConfigError(
                f"field 'initial_weights': {len(self.weights)} weights but alphabet = {M}"
            )
        return np.asarray(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class UniformSupport:
    """Uniform on a random support of ``support`` of the M bins (the
    support choice is part of the trial's randomness)."""

    support: int | None = None
    kind = "uniform_support"

    def realize(self, rng: np.random.Generator, M: int) -> np.ndarray:
        k = M if self.support is None else self.support
        if not 1 <= k <= M:
            raise ConfigError(f"field 'support': {k} outside [1, {M}]")
        idx = np.sort(rng.permutation(M)[:k])
        w = np.zeros(M)
        w[idx] = 1.0 / k
        return w


@dataclass(frozen=True)
class Skewed:
    """Two heavy bins (0.38 each) and the remaining 0.24 spread evenly."""

    kind = "skewed"

    def realize(self, rng: np.random.Generator, M: int) -> np.ndarray:
        if M < 3:
            raise ConfigError(f"field 'alphabet': skewed law needs M >= 3, got {M}")
        w = np.full(M, 0.24 / (M - 2))
        w[0] = w[1] = 0.38
        return w


def draw_opinions(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. opinion indices in [1, M] by inverse CDF."""
    cum = np.cumsum(weights)
    u = rng.random(n)
    idx = np.searchsorted(cum, u, side="right")
    if (idx >= weights.size).any():
        last = int(np.nonzero(weights > 0)[0][-1])
        idx = np.where(idx >= weights.size, last, idx)
    return (idx + 1).astype(np.int64)


# --------------------------------------------------------------------------
# Experiment config
# --------------------------------------------------------------------------

VARIANT_NAMES = ("averaging", "decaying_averaging", "censored_exchange")
SCHEDULE_NAMES = ("constant", "harmonic", "square")
SWEEP_AXES = ("schedule", "topology", "alphabet", "support")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologySpec
    alphabet: int
    initial: Explicit | UniformSupport | Skewed
    variant: str
    schedule: str = "harmonic"
    schedule_c: float = 10.0
    schedule_cap: float | None = 1.0
    horizon: int = 10_000
    trials: int = 1
    base_seed: int = 0
    record_stride: str | int = "log"
    stop_on_absorption: bool = False
    paper_delta: bool = False
    engine: str = "auto"
    mse_threshold: float = 0.01
    sweep_axis: str | None = None
    sweep_values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.variant not in VARIANT_NAMES:
            raise ConfigError(f"field 'variant': unknown variant {self.variant!r}")
        if self.schedule not in SCHEDULE_NAMES:
            raise ConfigError(f"field 'schedule': unknown schedule {self.schedule!r}")
        if self.trials < 1:
            raise ConfigError(f"field 'trials': must be >= 1, got {self.trials}")
        if self.horizon < 1:
            raise ConfigError(f"field 'horizon': must be >= 1, got {self.horizon}")
        if self.alphabet < 1:
            raise ConfigError(f"field 'alphabet': must be >= 1, got {self.alphabet}")
        if self.sweep_axis is not None and self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"field 'sweep': unknown axis {self.sweep_axis!r}")

    def make_variant(self):
        if self.variant == "averaging":
            return Averaging()
        if self.variant == "decaying_averaging":
            return DecayingAveraging(project_sampling=self.paper_delta)
        return CensoredExchange()

    def make_schedule(self) -> StepSchedule | None:
        if self.variant == "averaging":
            return None
        cap = None if self.paper_delta else self.schedule_cap
        return StepSchedule(self.schedule, self.schedule_c, cap)


# --------------------------------------------------------------------------
# Flat text parsing / serialization
# --------------------------------------------------------------------------

_TOPOLOGY_KEYS = {
    "grid": ("rows", "cols"),
    "star": ("n",),
    "erdos_renyi": ("n", "p"),
    "preferential_attachment": ("n", "m_new"),
    "watts_strogatz": ("rows", "cols", "rewire_p"),
}


class _Fields:
    """Key/value pairs with line numbers, consumed one key at a time."""

    def __init__(self, pairs: dict[str, tuple[str, int]]):
        self.pairs = pairs

    def pop(self, key: str, default=None, required: bool = False):
        if key in self.pairs:
            return self.pairs.pop(key)[0]
        if required:
            raise ConfigError(f"field {key!r}: missing required key")
        return default

    def pop_typed(self, key: str, conv, default=None, required: bool = False):
        raw = self.pop(key, None, required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"field {key!r}: bad value {raw!r} ({exc})") from exc

    def reject_unknown(self):
        if self.pairs:
            key, (_, line) = next(iter(self.pairs.items()))
            raise ConfigError(f"line {line}: unknown key {key!r}")


def _to_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_cap(raw: str) -> float | None:
    if raw.strip().lower() in ("none", "off"):
        return None
    return float(raw)


def _to_stride(raw: str):
    if raw.strip().lower() == "log":
        return "log"
    return int(raw)


def parse_topology_compact(text: str, require_connected: bool = True) -> TopologySpec:
    """Compact forms: grid:5x5, star:100, erdos_renyi:100:0.6,
    preferential_attachment:100:3, watts_strogatz:10x10:0.1."""
    parts = text.strip().split(":")
    kind = parts[0]
    try:
        if kind == "grid":
            r, c = parts[1].split("x")
            return TopologySpec(kind="grid", rows=int(r), cols=int(c))
        if kind == "star":
            return TopologySpec(kind="star", n=int(parts[1]))
        if kind == "erdos_renyi":
            return TopologySpec(kind="erdos_renyi", n=int(parts[1]), p=float(parts[2]),
                                require_connected=require_connected)
        if kind == "preferential_attachment":
            return TopologySpec(kind="preferential_attachment", n=int(parts[1]),
                                m_new=int(parts[2]), require_connected=require_connected)
        if kind == "watts_strogatz":
            r, c = parts[1].split("x")
            return TopologySpec(kind="watts_strogatz", rows=int(r), cols=int(c),
                                rewire_p=float(parts[2]), require_connected=require_connected)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad topology spec {text!r} ({exc})") from exc
    raise ConfigError(f"bad topology spec {text!r} (unknown kind)")


def topology_compact(spec: TopologySpec) -> str:
    return spec.describe()


def parse_config_text(text: str) -> ExperimentConfig:
    pairs: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = body.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = (value, lineno)
    return _config_from_fields(_Fields(pairs))


def parse_config_file(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def config_from_dict(d: dict) -> ExperimentConfig:
    pairs = {str(k): (str(v), 0) for k, v in d.items()}
    return _config_from_fields(_Fields(pairs))


def _config_from_fields(f: _Fields) -> ExperimentConfig:
    kind = f.pop("topology", required=True)
    if kind not in _TOPOLOGY_KEYS:
        raise ConfigError(f"field 'topology': unknown kind {kind!r}")
    require_connected = f.pop_typed("require_connected", _to_bool, default=True)
    topo_kwargs = {"kind": kind, "require_connected": require_connected}
    convs = {"rows": int, "cols": int, "n": int, "p": float, "m_new": int, "rewire_p": float}
    for key in _TOPOLOGY_KEYS[kind]:
        default = {"m_new": 3, "rewire_p": 0.1}.get(key)
        val = f.pop_typed(key, convs[key], default=default, required=default is None)
        topo_kwargs[key] = val
    topology = TopologySpec(**topo_kwargs)

    alphabet = f.pop_typed("alphabet", int, required=True)
    init_kind = f.pop("initial", default="uniform_support")
    if init_kind == "explicit":
        raw = f.pop("initial_weights", required=True)
        weights = tuple(float(x) for x in raw.split(","))
        initial = Explicit(weights)
    elif init_kind == "uniform_support":
        support = f.pop_typed("support", int, default=None)
        initial = UniformSupport(support)
    elif init_kind == "skewed":
        initial = Skewed()
    else:
        raise ConfigError(f"field 'initial': unknown law {init_kind!r}")

    sweep_axis = f.pop("sweep", default=None)
    sweep_values: tuple[str, ...] = ()
    if sweep_axis is not None:
        raw = f.pop("sweep_values", required=True)
        sweep_values = tuple(s.strip() for s in raw.split(",") if s.strip())
        if not sweep_values:
            raise ConfigError("field 'sweep_values': empty axis")

    cfg = ExperimentConfig(
        topology=topology,
        alphabet=alphabet,
        initial=initial,
        variant=f.pop("variant", required=True),
        schedule=f.pop("schedule", default="harmonic"),
        schedule_c=f.pop_typed("schedule_c", float, default=10.0),
        schedule_cap=f.pop_typed("schedule_cap", _to_cap, default=1.0),
        horizon=f.pop_typed("horizon", int, default=10_000),
        trials=f.pop_typed("trials", int, default=1),
        base_seed=f.pop_typed("base_seed", int, default=0),
        record_stride=f.pop_typed("record_stride", _to_stride, default="log"),
        stop_on_absorption=f.pop_typed("stop_on_absorption", _to_bool, default=False),
        paper_delta=f.pop_typed("paper_delta", _to_bool, default=False),
        engine=f.pop("engine", default="auto"),
        mse_threshold=f.pop_typed("mse_threshold", float, default=0.01),
        sweep_axis=sweep_axis,
        sweep_values=sweep_values,
    )
    f.reject_unknown()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Flat string dict; parses back to an equal config."""
    out: dict[str, str] = {"topology": cfg.topology.kind}
    for key in _TOPOLOGY_KEYS[cfg.topology.kind]:
        out[key] = repr(getattr(cfg.topology, key))
    out["require_connected"] = str(cfg.topology.require_connected).lower()
    out["alphabet"] = str(cfg.alphabet)
    out["initial"] = cfg.initial.kind
    if isinstance(cfg.initial, Explicit):
        out["initial_weights"] = ",".join(repr(w) for w in cfg.initial.weights)
    elif isinstance(cfg.initial, UniformSupport) and cfg.initial.support is not None:
        out["support"] = str(cfg.initial.support)
    out["variant"] = cfg.variant
    out["schedule"] = cfg.schedule
    out["schedule_c"] = repr(cfg.schedule_c)
    out["schedule_cap"] = "none" if cfg.schedule_cap is None else repr(cfg.schedule_cap)
    out["horizon"] = str(cfg.horizon)
    out["trials"] = str(cfg.trials)
    out["base_seed"] = str(cfg.base_seed)
    out["record_stride"] = str(cfg.record_stride)
    out["stop_on_absorption"] = str(cfg.stop_on_absorption).lower()
    out["paper_delta"] = str(cfg.paper_delta).lower()
    out["engine"] = cfg.engine
    out["mse_threshold"] = repr(cfg.mse_threshold)
    if cfg.sweep_axis is not None:
        out["sweep"] = cfg.sweep_axis
        out["sweep_values"] = ",".join(cfg.sweep_values)
    return out


def serialize_config(cfg: ExperimentConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in config_to_dict(cfg).items()) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Sweep expansion
# --------------------------------------------------------------------------

def expand_sweep(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """One (label, config) pair per axis point; the base seed is shared so
    trials are paired across points."""
    if cfg.sweep_axis is None:
        raise ConfigError("field 'sweep': config has no sweep axis")
    base = dataclasses.replace(cfg, sweep_axis=None, sweep_values=())
    out: list[tuple[str, ExperimentConfig]] = []
    for value in cfg.sweep_values:
        if cfg.sweep_axis == "schedule":
            parts = value.split(":")
            kind = parts[0]
            if kind not in SCHEDULE_NAMES:
                raise ConfigError(f"field 'sweep_values': unknown schedule {value!r}")
            c = float(parts[1]) if len(parts) > 1 else cfg.schedule_c
            point = dataclasses.replace(base, schedule=kind, schedule_c=c)
            label = f"{kind}_{c:g}"
        elif cfg.sweep_axis == "topology":
            spec = parse_topology_compact(value, cfg.topology.require_connected)
            point = dataclasses.replace(base, topology=spec)
            label = spec.describe().replace(":", "_").replace(".", "p")
        elif cfg.sweep_axis == "alphabet":
            point = dataclasses.replace(base, alphabet=int(value))
            label = f"M{int(value)}"
        else:  # support
            initial = UniformSupport(int(value))
            point = dataclasses.replace(base, initial=initial)
            label = f"support{int(value)}"
        out.append((label, point))
    return out

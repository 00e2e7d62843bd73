"""Fixed-timestep leaky integrate-and-fire engine.

The engine is event driven: a neuron's membrane is only brought up to date
when a synaptic increment reaches it, using ``V * decay**elapsed`` for the
steps it sat idle.  Because a leaking neuron with no input can never cross a
positive threshold, this is exactly the per-step update
``V <- V * decay + inputs`` evaluated lazily.

Timing model
------------
* Every synapse hop costs one timestep: spikes emitted at step ``t`` are
  integrated by their targets at step ``t + 1``.
* External input enters through *input populations* (spike generators).
  A generator spike scheduled for step ``t`` is emitted at ``t`` and
  therefore reaches its target population at ``t + 1``, like any other hop.
  A volley injected at step ``t`` into a chain of ``k`` LIF layers produces
  the first output spike at step ``t + k``.
* Within a step the membrane decays first, then integrates.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy import sparse

__all__ = [
    "ConfigError",
    "SchedulingError",
    "SpikeInputError",
    "EngineConfig",
    "Population",
    "SynapseSet",
    "SpikeBatch",
    "Network",
    "Engine",
    "decay_factor",
]

W_MIN_DEFAULT = -256
W_MAX_DEFAULT = 255
WTA_TIE_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid network or engine configuration."""


class SchedulingError(RuntimeError):
    """A spike batch was presented for the wrong timestep."""


class SpikeInputError(ValueError):
    """A spike addresses a neuron that does not exist."""


def decay_factor(decay_tau: float) -> float:
    """Per-step membrane multiplier ``exp(-1/tau)``; ``inf`` means no leak."""
    if decay_tau < 1:
        raise ConfigError(f"decay_tau must be >= 1 timestep, got {decay_tau}")
    if math.isinf(decay_tau):
        return 1.0
    return math.exp(-1.0 / decay_tau)


@dataclass(frozen=True)
class EngineConfig:
    timestep_us: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.timestep_us <= 0:
            raise ConfigError("timestep_us must be positive")


@dataclass
class Population:
    """A group of neurons sharing dynamics; ``threshold`` may be per neuron.

    ``kind="input"`` populations have no state: they emit exactly the spikes
    handed to :meth:`Engine.step`.  ``winner_take_all`` lets at most one
    neuron fire per step (largest membrane, then lowest index); the other
    neurons that crossed threshold are reset as well, standing in for lateral
    inhibition acting within a single step.
    """

    name: str
    size: int
    threshold: float | np.ndarray = 1.0
    decay_tau: float = math.inf
    refractory: int = 0
    self_excitation: int = 0
    winner_take_all: bool = False
    kind: str = "lif"

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigError(f"population {self.name!r}: size must be positive")
        if self.kind not in ("lif", "input"):
            raise ConfigError(f"population {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "lif":
            if np.ndim(self.threshold):
                self.threshold = np.asarray(self.threshold, dtype=float)
                if self.threshold.shape != (self.size,):
                    raise ConfigError(f"population {self.name!r}: threshold array must have length {self.size}")
            if np.any(np.asarray(self.threshold) <= 0):
                raise ConfigError(f"population {self.name!r}: threshold must be positive")
            if self.refractory < 0:
                raise ConfigError(f"population {self.name!r}: refractory must be >= 0")
            decay_factor(self.decay_tau)

    @property
    def decay(self) -> float:
        return decay_factor(self.decay_tau)


@dataclass
class SynapseSet:
    """Weighted connections ``pre -> post``; ``weights`` has shape (pre, post).

    Weights are signed integers.  Excitatory sets hold only values >= 0,
    inhibitory sets only values <= 0.  A plastic set changes every one of its
    synapses by ``adapt_sign`` on each step its reinforcement neuron fires.
    """

    name: str
    pre: str
    post: str
    weights: np.ndarray | sparse.spmatrix
    sign: str = "excitatory"
    plastic: bool = False
    reinforcement: tuple[str, int] | None = None
    adapt_sign: int = 1
    w_min: int = W_MIN_DEFAULT
    w_max: int = W_MAX_DEFAULT
    mask: np.ndarray | None = None
    generator: str | None = None

    def __post_init__(self):
        if self.sign not in ("excitatory", "inhibitory"):
            raise ConfigError(f"synapse set {self.name!r}: bad sign {self.sign!r}")
        if self.plastic:
            if self.reinforcement is None:
                raise ConfigError(f"plastic set {self.name!r} needs a reinforcement source")
            if self.adapt_sign not in (1, -1):
                raise ConfigError("adapt_sign must be +1 or -1")
            if sparse.issparse(self.weights):
                self.weights = self.weights.toarray()
            self.weights = np.asarray(self.weights, dtype=np.int64)
            if self.mask is None:
                self.mask = np.ones(self.weights.shape, dtype=bool)
            lo, hi = self.bounds
            if lo > hi:
                raise ConfigError(f"plastic set {self.name!r}: empty weight range")
        elif self.reinforcement is not None:
            raise ConfigError(f"synapse set {self.name!r}: reinforcement only allowed on plastic sets")
        w = self.weights
        data = w.data if sparse.issparse(w) else np.asarray(w)
        if np.any(data != np.round(data)):
            raise ConfigError(f"synapse set {self.name!r}: weights must be integers")
        if self.sign == "excitatory" and np.any(data < 0):
            raise ConfigError(f"excitatory set {self.name!r} has negative weights")
        if self.sign == "inhibitory" and np.any(data > 0):
            raise ConfigError(f"inhibitory set {self.name!r} has positive weights")

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.weights.shape)

    @property
    def bounds(self) -> tuple[int, int]:
        lo, hi = self.w_min, self.w_max
        if self.sign == "excitatory":
            lo = max(lo, 0)
        else:
            hi = min(hi, 0)
        return lo, hi


@dataclass
class SpikeBatch:
    """Spikes of one timestep, as ``{population: sorted unique indices}``."""

    timestep: int
    spikes: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, timestep: int, pairs: Iterable[tuple[str, int]]) -> "SpikeBatch":
        grouped: dict[str, list[int]] = defaultdict(list)
        for pop, idx in pairs:
            grouped[pop].append(int(idx))
        return cls(timestep, {p: np.unique(np.asarray(v, dtype=np.int64)) for p, v in grouped.items()})

    def pairs(self) -> Iterator[tuple[str, int]]:
        for pop in sorted(self.spikes):
            for idx in self.spikes[pop]:
                yield pop, int(idx)

    def get(self, pop: str) -> np.ndarray:
        return self.spikes.get(pop, _EMPTY)

    def fired(self, pop: str, idx: int) -> bool:
        arr = self.spikes.get(pop)
        return arr is not None and bool(np.any(arr == idx))

    def __len__(self) -> int:
        return sum(len(v) for v in self.spikes.values())


_EMPTY = np.zeros(0, dtype=np.int64)


class Network:
    """Container of populations and synapse sets."""

    def __init__(self):
        self.populations: dict[str, Population] = {}
        self.synapses: dict[str, SynapseSet] = {}

    def add_population(self, name: str, size: int, **kw) -> Population:
        if name in self.populations:
            raise ConfigError(f"duplicate population {name!r}")
        pop = Population(name, size, **kw)
        self.populations[name] = pop
        return pop

    def add_input(self, name: str, size: int) -> Population:
        return self.add_population(name, size, kind="input")

    def connect(self, pre: str, post: str, weights, name: str | None = None, **kw) -> SynapseSet:
        for p in (pre, post):
            if p not in self.populations:
                raise ConfigError(f"unknown population {p!r}")
        if self.populations[post].kind == "input":
            raise ConfigError(f"cannot connect into input population {post!r}")
        name = name or f"{pre}->{post}"
        if name in self.synapses:
            raise ConfigError(f"duplicate synapse set {name!r}")
        syn = SynapseSet(name, pre, post, weights, **kw)
        expected = (self.populations[pre].size, self.populations[post].size)
        if syn.shape != expected:
            raise ConfigError(f"synapse set {name!r}: shape {syn.shape} != {expected}")
        if syn.reinforcement is not None:
            rpop, ridx = syn.reinforcement
            if rpop not in self.populations or not 0 <= ridx < self.populations[rpop].size:
                raise ConfigError(f"synapse set {name!r}: bad reinforcement source {syn.reinforcement}")
        self.synapses[name] = syn
        return syn

    def merge(self, other: "Network") -> "Network":
        for pop in other.populations.values():
            if pop.name in self.populations:
                raise ConfigError(f"duplicate population {pop.name!r}")
            self.populations[pop.name] = pop
        for syn in other.synapses.values():
            if syn.name in self.synapses:
                raise ConfigError(f"duplicate synapse set {syn.name!r}")
            self.synapses[syn.name] = syn
        return self


class _Csr:
    """Row-gather helper for a static weight matrix."""

    __slots__ = ("indptr", "indices", "data")

    def __init__(self, weights):
        m = sparse.csr_matrix(weights)
        m.eliminate_zeros()
        m.sort_indices()
        self.indptr = m.indptr.astype(np.int64)
        self.indices = m.indices.astype(np.int64)
        self.data = m.data.astype(np.float64)

    def gather(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if len(rows) == 1:
            a, b = self.indptr[rows[0]], self.indptr[rows[0] + 1]
            return self.indices[a:b], self.data[a:b]
        starts = self.indptr[rows]
        lengths = self.indptr[rows + 1] - starts
        total = int(lengths.sum())
        if total == 0:
            return _EMPTY, np.zeros(0)
        offs = np.repeat(starts - np.cumsum(lengths) + lengths, lengths) + np.arange(total)
        return self.indices[offs], self.data[offs]


class Engine:
    """Steps a :class:`Network` one timestep at a time."""

    def __init__(self, network: Network, config: EngineConfig | None = None):
        self.network = network
        self.config = config or EngineConfig()
        self.t = 0
        self._lif = [p for p in network.populations.values() if p.kind == "lif"]
        self._decay = {p.name: p.decay for p in self._lif}
        self.V = {p.name: np.zeros(p.size) for p in self._lif}
        self._last = {p.name: np.zeros(p.size, dtype=np.int64) for p in self._lif}
        self._refr_until = {p.name: np.zeros(p.size, dtype=np.int64) for p in self._lif}
        self._prev: dict[str, np.ndarray] = {}
        # above threshold but refractory; must be re-checked without new input
        self._pending: dict[str, np.ndarray] = {}
        self._outgoing: dict[str, list[SynapseSet]] = defaultdict(list)
        self._csr: dict[str, _Csr] = {}
        for syn in network.synapses.values():
            self._outgoing[syn.pre].append(syn)
            if not syn.plastic:
                self._csr[syn.name] = _Csr(syn.weights)
        self._plastic = [s for s in network.synapses.values() if s.plastic]

    @property
    def time_us(self) -> int:
        return self.t * self.config.timestep_us

    def membrane(self, pop: str) -> np.ndarray:
        """Membrane potentials as of the most recently completed step."""
        d = self._decay[pop]
        v = self.V[pop]
        if d == 1.0:
            return v.copy()
        return v * d ** ((self.t - 1) - self._last[pop]).clip(min=0)

    def reset(self, pop: str) -> None:
        """Zero the membranes and refractory timers of ``pop`` (a global reset line)."""
        self.V[pop][:] = 0.0
        self._last[pop][:] = self.t
        self._pending.pop(pop, None)
        self._refr_until[pop][:] = 0

    def _validate_input(self, batch: SpikeBatch) -> dict[str, np.ndarray]:
        out = {}
        for pop, idx in batch.spikes.items():
            p = self.network.populations.get(pop)
            if p is None or p.kind != "input":
                raise SpikeInputError(f"{pop!r} is not an input population")
            idx = np.unique(np.asarray(idx, dtype=np.int64))
            if len(idx) and (idx[0] < 0 or idx[-1] >= p.size):
                raise SpikeInputError(f"spike index out of range for {pop!r} (size {p.size})")
            if len(idx):
                out[pop] = idx
        return out

    def step(self, batch: SpikeBatch | None = None) -> SpikeBatch:
        """Advance one timestep and return the LIF spikes emitted in it."""
        t = self.t
        if batch is None:
            batch = SpikeBatch(t)
        elif batch.timestep != t:
            raise SchedulingError(f"batch for step {batch.timestep} presented at step {t}")
        inputs = self._validate_input(batch)

        incoming: dict[str, list[tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
        for pre, fired in self._prev.items():
            for syn in self._outgoing.get(pre, ()):
                if syn.plastic:
                    w = syn.weights[fired].sum(axis=0)
                    nz = np.flatnonzero(w)
                    if len(nz):
                        incoming[syn.post].append((nz, w[nz].astype(np.float64)))
                else:
                    idx, val = self._csr[syn.name].gather(fired)
                    if len(idx):
                        incoming[syn.post].append((idx, val))
            pop = self.network.populations[pre]
            if pop.kind == "lif" and pop.self_excitation:
                incoming[pre].append((fired, np.full(len(fired), float(pop.self_excitation))))

        emitted: dict[str, np.ndarray] = {}
        for pop in self._lif:
            parts = incoming.get(pop.name, [])
            pend = self._pending.pop(pop.name, None)
            if pend is not None:
                parts = parts + [(pend, np.zeros(len(pend)))]
            if not parts:
                continue
            if len(parts) == 1:
                idx, tot = parts[0]
                if len(idx) > 1 and np.any(np.diff(idx) <= 0):
                    idx, inv = np.unique(idx, return_inverse=True)
                    tot = np.bincount(inv, weights=parts[0][1])
            else:
                idx, inv = np.unique(np.concatenate([p[0] for p in parts]), return_inverse=True)
                tot = np.bincount(inv, weights=np.concatenate([p[1] for p in parts]))
            V = self.V[pop.name]
            last = self._last[pop.name]
            d = self._decay[pop.name]
            if d != 1.0:
                V[idx] *= d ** (t - last[idx])
            last[idx] = t
            V[idx] += tot
            v = V[idx]
            thr = pop.threshold
            above = v >= (thr[idx] if np.ndim(thr) else thr)
            if not above.any():
                continue
            free = t >= self._refr_until[pop.name][idx]
            blocked = idx[above & ~free]
            if len(blocked):
                self._pending[pop.name] = blocked
            ok = above & free
            if not ok.any():
                continue
            cand = idx[ok]
            if pop.winner_take_all and len(cand) > 1:
                cv = v[ok]
                top = cv.max()
                # near-equal membranes count as a tie; lowest index wins
                win = int(np.flatnonzero(cv >= top - WTA_TIE_TOL * max(1.0, abs(top)))[0])
                V[cand] = 0.0
                cand = cand[[win]]
            V[cand] = 0.0
            self._refr_until[pop.name][cand] = t + pop.refractory + 1
            emitted[pop.name] = cand

        self._prev = {**emitted, **inputs}
        self.t = t + 1
        return SpikeBatch(t, emitted)

    def apply_plasticity(self, fired: SpikeBatch) -> dict[str, np.ndarray]:
        """Reinforcement-gated +-1 update of plastic sets; returns the deltas applied."""
        deltas = {}
        for syn in self._plastic:
            if not self._source_fired(fired, *syn.reinforcement):
                continue
            lo, hi = syn.bounds
            old = syn.weights.copy()
            syn.weights[syn.mask] = np.clip(syn.weights[syn.mask] + syn.adapt_sign, lo, hi)
            deltas[syn.name] = syn.weights - old
        return deltas

    def _source_fired(self, fired: SpikeBatch, pop: str, idx: int) -> bool:
        if fired.fired(pop, idx):
            return True
        # generator spikes are not part of the returned batch
        if self.network.populations[pop].kind == "input" and fired.timestep == self.t - 1:
            arr = self._prev.get(pop)
            return arr is not None and bool(np.any(arr == idx))
        return False

    def run(self, schedule: dict[int, SpikeBatch] | None, steps: int) -> list[SpikeBatch]:
        """Step ``steps`` times, applying plasticity after every step."""
        schedule = schedule or {}
        out = []
        for _ in range(steps):
            b = schedule.get(self.t)
            fired = self.step(b)
            self.apply_plasticity(fired)
            out.append(fired)
        return out

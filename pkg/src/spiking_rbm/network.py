"""Network assembly and the fixed-step simulation driver.

A network is a list of layers (each with one NeuronConfig), dense synapse
banks between layers, one optional Poisson bias source per neuron, and a
piecewise-constant external current schedule.  The driver advances the
joint system in chunks through the numba kernel, drawing per-neuron noise
from counter-split streams so runs are reproducible and insensitive to
chunk size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .neurons import DEFAULT_DT, NeuronConfig, PoissonSource, SpikeRecord, SynapseBank
from .rng import StreamBank

_CHUNK_STEPS = 4000


@dataclass
class Layer:
    name: str
    n: int
    cfg: NeuronConfig


@dataclass
class WatchdogConfig:
    """Layer-activity regulator: excite a layer whose mean rate drops.

    While the layer's population rate over the trailing window is below
    `threshold`, every neuron receives `current`; the injection persists for
    one full window after the rate recovers.
    """

    threshold: float = 5.0           # Hz
    current: float | None = None     # A; None -> derived at mapping time
    window: float = 0.02             # s

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be positive")


@dataclass
class Network:
    """Layered LIF network with dense recurrent charge couplings."""

    layers: list[Layer]
    banks: list[tuple[str, str, SynapseBank]] = field(default_factory=list)
    bias_sources: dict[str, list[PoissonSource | None]] = field(default_factory=dict)
    tau_syn: float = 4e-3
    watchdogs: dict[str, WatchdogConfig] = field(default_factory=dict)

    def __post_init__(self):
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate layer names")
        cfgs = {(l.cfg.capacitance, l.cfg.g_leak, l.cfg.theta, l.cfg.u_reset,
                 l.cfg.tau_refr, l.cfg.sigma) for l in self.layers}
        if len(cfgs) != 1:
            raise ValueError("all layers must share one NeuronConfig")
        for src, tgt, bank in self.banks:
            ns, nt = self.layer(src).n, self.layer(tgt).n
            if bank.q.shape != (ns, nt):
                raise ValueError(
                    f"bank {src}->{tgt}: q shape {bank.q.shape} != ({ns}, {nt})")
            if bank.tau_syn != self.tau_syn:
                raise ValueError("all banks must share the network tau_syn")

    def layer(self, name: str) -> Layer:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    @property
    def n_total(self) -> int:
        return sum(l.n for l in self.layers)

    def offset(self, name: str) -> int:
        off = 0
        for l in self.layers:
            if l.name == name:
                return off
            off += l.n
        raise KeyError(name)

    def joint_charge_matrix(self) -> np.ndarray:
        n = self.n_total
        Q = np.zeros((n, n))
        for src, tgt, bank in self.banks:
            i0, j0 = self.offset(src), self.offset(tgt)
            Q[i0:i0 + bank.q.shape[0], j0:j0 + bank.q.shape[1]] += bank.q
        return Q


@dataclass
class CurrentSchedule:
    """Piecewise-constant per-neuron external currents (data clamps)."""

    times: np.ndarray                # segment start times, times[0] == 0
    currents: np.ndarray             # (n_segments, n_neurons)

    @classmethod
    def constant(cls, I: np.ndarray) -> "CurrentSchedule":
        return cls(np.zeros(1), np.asarray(I, dtype=float)[None, :])

    @classmethod
    def zero(cls, n: int) -> "CurrentSchedule":
        return cls.constant(np.zeros(n))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.currents = np.atleast_2d(np.asarray(self.currents, dtype=float))
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("segment times must start at 0 and increase")
        if len(self.times) != len(self.currents):
            raise ValueError("one current row per segment required")

    def segment_of_steps(self, step0: int, n_steps: int, dt: float) -> np.ndarray:
        t = (np.arange(step0, step0 + n_steps) + 0.5) * dt
        return np.searchsorted(self.times, t, side="right").astype(np.int64) - 1


def run_network(net: Network, schedule: CurrentSchedule | None, duration: float,
                seed: int, dt: float = DEFAULT_DT) -> SpikeRecord:
    """Simulate the network; returns the complete, seed-deterministic record."""
    n = net.n_total
    if schedule is None:
        schedule = CurrentSchedule.zero(n)
    if schedule.currents.shape[1] != n:
        raise ValueError(
            f"schedule is for {schedule.currents.shape[1]} neurons, network has {n}")
    cfg = net.layers[0].cfg
    n_steps = int(round(duration / dt))

    Q = net.joint_charge_matrix()
    q_bias = np.zeros(n)
    p_bias = np.zeros(n)
    for lname, sources in net.bias_sources.items():
        off = net.offset(lname)
        if len(sources) != net.layer(lname).n:
            raise ValueError(f"bias sources of layer {lname!r} mismatch its size")
        for i, s in enumerate(sources):
            if s is None:
                continue
            if s.rate * dt > 0.1:
                raise ValueError(
                    f"bias rate*dt = {s.rate * dt:.3g} > 0.1: undersampled")
            q_bias[off + i] = s.charge
            p_bias[off + i] = s.rate * dt

    layer_of = np.zeros(n, dtype=np.int64)
    for li, l in enumerate(net.layers):
        off = net.offset(l.name)
        layer_of[off:off + l.n] = li
    n_layers = len(net.layers)
    wd_on = np.zeros(n_layers, dtype=np.int64)
    wd_thresh_counts = np.zeros(n_layers)
    wd_current = np.zeros(n_layers)
    wd_win = max(int(round(max((w.window for w in net.watchdogs.values()),
                               default=0.02) / dt)), 1)
    for li, l in enumerate(net.layers):
        wd = net.watchdogs.get(l.name)
        if wd is not None:
            if wd.current is None:
                raise ValueError("watchdog current must be set before running")
            wd_on[li] = 1
            wd_thresh_counts[li] = wd.threshold * l.n * wd_win * dt
            wd_current[li] = wd.current
    wd_ring = np.zeros((n_layers, wd_win), dtype=np.int64)
    wd_sum = np.zeros(n_layers, dtype=np.int64)
    wd_pos = np.zeros(1, dtype=np.int64)
    wd_release = np.zeros(n_layers, dtype=np.int64)

    u = np.zeros(n)
    isyn = np.zeros(n)
    refr = np.zeros(n, dtype=np.int64)
    a_m = 1.0 - dt * cfg.g_leak / cfg.capacitance
    dtC = dt / cfg.capacitance
    noise_amp = cfg.sigma / cfg.capacitance * math.sqrt(dt)
    var_step = (cfg.sigma / cfg.capacitance) ** 2 * dt
    refr_steps = int(round(cfg.tau_refr / dt))
    decay_syn = math.exp(-dt / net.tau_syn)

    streams = StreamBank(seed)
    ids_parts: list[np.ndarray] = []
    step_parts: list[np.ndarray] = []
    cap = n * (_CHUNK_STEPS // max(refr_steps, 1) + 2)
    out_ids = np.empty(cap, dtype=np.int64)
    out_steps = np.empty(cap, dtype=np.int64)

    step0 = 0
    while step0 < n_steps:
        k = min(_CHUNK_STEPS, n_steps - step0)
        normals = streams.normals("membrane", n, k)
        bridge_u = streams.uniforms("bridge", n, k)
        bias_u = streams.uniforms("source", n, k)
        seg = schedule.segment_of_steps(step0, k, dt)
        m = _kernels.network_chunk(
            u, isyn, refr, Q, q_bias, p_bias, seg, schedule.currents,
            normals, bridge_u, bias_u,
            a_m, dtC, cfg.theta, cfg.u_reset, noise_amp, var_step,
            refr_steps, decay_syn, 1.0 / net.tau_syn,
            layer_of, n_layers, wd_on, wd_thresh_counts, wd_current, wd_win,
            wd_ring, wd_sum, wd_pos, wd_release,
            step0, out_ids, out_steps)
        if not np.all(np.isfinite(u)):
            bad = int(np.nonzero(~np.isfinite(u))[0][0])
            raise FloatingPointError(
                f"non-finite membrane potential at neuron {bad}, "
                f"t={(step0 + k) * dt:.6f} s")
        ids_parts.append(out_ids[:m].copy())
        step_parts.append(out_steps[:m].copy())
        step0 += k

    ids = np.concatenate(ids_parts) if ids_parts else np.empty(0, dtype=np.int64)
    steps = np.concatenate(step_parts) if step_parts else np.empty(0, dtype=np.int64)
    return SpikeRecord(ids.astype(np.uint32), (steps + 1) * dt, duration, dt, n)

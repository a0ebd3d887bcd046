"""Binary-state sampling, exact enumeration oracles, and KL validation.

Spikes are read as samples of binary variables: a unit's variable is 1 for
tau_refr after each spike, sampled on a fixed 1 kHz grid.  Joint states are
packed into integer codes with unit i in bit i (unit 0 = least significant
bit); exact probability tables use the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .neurons import SAMPLE_RATE, SpikeRecord
from .rng import StreamBank, stream

MAX_ENUM_UNITS = 20
_HAZ_CHUNK = 65536


@dataclass
class BoltzmannParams:
    """Symmetric coupling matrix and biases of a Boltzmann distribution."""

    W: np.ndarray                    # (N, N), symmetric, zero diagonal
    b: np.ndarray                    # (N,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.b.shape[0]
        if self.W.shape != (n, n):
            raise ValueError("W must be square and match b")
        if not np.allclose(self.W, self.W.T):
            raise ValueError("W must be symmetric")
        if np.any(np.diag(self.W) != 0):
            raise ValueError("W must have zero diagonal")

    @property
    def n(self) -> int:
        return self.b.shape[0]


def random_boltzmann(n: int, seed: int, w_loc: float = -0.75, w_scale: float = 1.5,
                     b_loc: float = -1.5, b_scale: float = 0.5) -> BoltzmannParams:
    """Random test distribution: upper-triangle couplings drawn and mirrored."""
    g = stream(seed, "misc", 0)
    W = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    W[iu] = g.normal(w_loc, w_scale, len(iu[0]))
    W = W + W.T
    b = g.normal(b_loc, b_scale, n)
    return BoltzmannParams(W, b)


@dataclass
class BinaryTrace:
    """{0,1} states of all units on the fixed sampling grid."""

    states: np.ndarray               # (n_samples, n_units) uint8
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.uint8)
        if self.states.ndim != 2:
            raise ValueError("states must be (n_samples, n_units)")

    @property
    def n_units(self) -> int:
        return self.states.shape[1]

    def codes(self) -> np.ndarray:
        n = self.n_units
        if n > MAX_ENUM_UNITS:
            raise ValueError(f"{n} units exceed the enumeration bound")
        weights = (1 << np.arange(n)).astype(np.int64)
        return self.states.astype(np.int64) @ weights


@dataclass
class StateHistogram:
    """Smoothed joint-state histogram over all 2^N states."""

    counts: np.ndarray
    smoothing: float = 1.0

    @property
    def probabilities(self) -> np.ndarray:
        c = self.counts + self.smoothing
        return c / c.sum()


def spikes_to_binary_trace(record: SpikeRecord, tau_r: float,
                           sample_rate: float = SAMPLE_RATE) -> BinaryTrace:
    """Extend each spike to a box of length tau_r and sample it.

    The unit's state at grid instant t_k = k/sample_rate is 1 iff a spike
    lies in (t_k - tau_r, t_k]; a spike exactly on the grid switches the
    state on at that instant.
    """
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    n_samples = int(round(record.duration * sample_rate))
    z = np.zeros((n_samples, record.n_neurons), dtype=np.uint8)
    if len(record) == 0:
        return BinaryTrace(z, sample_rate)
    eps = 1e-9
    k0 = np.ceil(record.times * sample_rate - eps).astype(np.int64)
    k1 = np.ceil((record.times + tau_r) * sample_rate - eps).astype(np.int64) - 1
    k0 = np.clip(k0, 0, n_samples)
    k1 = np.clip(k1, -1, n_samples - 1)
    # difference array per unit, then cumulative sum
    diff = np.zeros((n_samples + 1, record.n_neurons), dtype=np.int32)
    ids = record.ids.astype(np.int64)
    valid = k0 <= k1
    np.add.at(diff, (k0[valid], ids[valid]), 1)
    np.add.at(diff, (k1[valid] + 1, ids[valid]), -1)
    z[:] = (np.cumsum(diff[:-1], axis=0) > 0)
    return BinaryTrace(z, sample_rate)


def histogram_states(trace: BinaryTrace, smoothing: float = 1.0) -> StateHistogram:
    """Count joint-state occurrences; +smoothing avoids zero probabilities."""
    n = trace.n_units
    if n > MAX_ENUM_UNITS:
        raise ValueError(f"refusing to enumerate 2^{n} states")
    counts = np.bincount(trace.codes(), minlength=2 ** n).astype(float)
    return StateHistogram(counts, smoothing)


def all_states(n: int) -> np.ndarray:
    """All 2^n binary states; row s has unit i = bit i of s."""
    if n > MAX_ENUM_UNITS:
        raise ValueError(f"refusing to enumerate 2^{n} states")
    s = np.arange(2 ** n, dtype=np.int64)
    return ((s[:, None] >> np.arange(n)[None, :]) & 1).astype(float)


def exact_boltzmann(params: BoltzmannParams) -> np.ndarray:
    """Exact probability table: p(z) ∝ exp(z W z / 2 + b z)."""
    states = all_states(params.n)
    log_p = 0.5 * np.einsum("si,ij,sj->s", states, params.W, states) \
        + states @ params.b
    log_p -= log_p.max()
    p = np.exp(log_p)
    return p / p.sum()


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """D(p||q) = sum p log(p/q); supports must agree where p > 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share one support")
    m = p > 0
    if np.any(q[m] <= 0):
        raise ValueError("q must be positive wherever p is")
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def gibbs_sample_rbm(W: np.ndarray, b_v: np.ndarray, b_h: np.ndarray,
                     iterations: int, seed: int) -> np.ndarray:
    """Block-Gibbs chain on an RBM; returns joint-state codes per iteration.

    Visible units occupy the low bits.  For wall-clock comparisons one
    iteration is identified with one refractory period (4 ms).
    """
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    W = np.asarray(W, dtype=float)
    nv, nh = W.shape
    if nv + nh > MAX_ENUM_UNITS:
        raise ValueError("chain exceeds the enumeration bound")
    v = np.zeros(nv, dtype=np.int64)
    h = np.zeros(nh, dtype=np.int64)
    codes = np.empty(iterations, dtype=np.int64)
    gen = stream(seed, "gibbs", 0)
    chunk = 65536
    done = 0
    while done < iterations:
        k = min(chunk, iterations - done)
        uniforms = gen.random((k, nv + nh))
        _kernels.gibbs_chunk(W, np.asarray(b_v, float), np.asarray(b_h, float),
                             v, h, uniforms, codes[done:done + k])
        done += k
    return codes


def abstract_neural_sample(params: BoltzmannParams, duration: float, seed: int,
                           psp: str = "rect", dt: float = 1e-3,
                           tau_r: float = 4e-3,
                           tau_syn: float | None = None) -> SpikeRecord:
    """Discrete-time hazard sampler of the target Boltzmann distribution.

    A free unit fires with probability sigmoid(u - log tau) per step, where
    u is its bias plus coupling input, and stays "on" for tau = tau_r/dt
    steps after each spike.  psp="rect" uses the on/off boxes directly (the
    sampler is then exact in distribution as duration grows); psp="alpha"
    replaces the boxes with first-order filtered trains of the same unit
    area, the variant matching the IF network's synapses.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if psp not in ("rect", "alpha"):
        raise ValueError("psp must be 'rect' or 'alpha'")
    tau_steps = int(round(tau_r / dt))
    if tau_steps < 1:
        raise ValueError("tau_r must cover at least one step")
    n = params.n
    n_steps = int(round(duration / dt))
    ts = tau_syn if tau_syn is not None else tau_r
    zeta = np.zeros(n, dtype=np.int64)
    pspv = np.zeros(n)
    bank = StreamBank(seed)
    ids_parts, step_parts = [], []
    out_ids = np.empty(n * (_HAZ_CHUNK // tau_steps + 2), dtype=np.int64)
    out_steps = np.empty_like(out_ids)
    step0 = 0
    while step0 < n_steps:
        k = min(_HAZ_CHUNK, n_steps - step0)
        uniforms = bank.uniforms("hazard", n, k)
        m = _kernels.hazard_chunk(params.W, params.b, zeta, pspv, uniforms,
                                  psp == "alpha", tau_steps,
                                  tau_r / ts, np.exp(-dt / ts),
                                  step0, out_ids, out_steps)
        ids_parts.append(out_ids[:m].copy())
        step_parts.append(out_steps[:m].copy())
        step0 += k
    ids = np.concatenate(ids_parts)
    steps = np.concatenate(step_parts)
    return SpikeRecord(ids.astype(np.uint32), (steps + 1) * dt, duration, dt, n)


def kl_vs_time(codes: np.ndarray, sample_times: np.ndarray,
               exact_table: np.ndarray, checkpoints: np.ndarray,
               smoothing: float = 1.0) -> np.ndarray:
    """KL of the truncated smoothed histogram against the exact table.

    codes/sample_times are the joint-state stream; checkpoint c uses all
    samples with time <= c.  One growing count array is reused.
    """
    checkpoints = np.asarray(checkpoints, dtype=float)
    if np.any(np.diff(checkpoints) <= 0):
        raise ValueError("checkpoints must increase")
    n_states = len(exact_table)
    counts = np.zeros(n_states)
    out = np.empty(len(checkpoints))
    start = 0
    order = np.argsort(sample_times, kind="stable")
    codes = np.asarray(codes)[order]
    sample_times = np.asarray(sample_times)[order]
    for ci, c in enumerate(checkpoints):
        stop = int(np.searchsorted(sample_times, c, side="right"))
        if stop > start:
            counts += np.bincount(codes[start:stop], minlength=n_states)
            start = stop
        q = counts + smoothing
        q /= q.sum()
        out[ci] = kl_divergence(exact_table, q)
    return out

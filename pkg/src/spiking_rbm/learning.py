"""Event-driven contrastive divergence and the standard-CD reference.

The weight of each visible/hidden pair changes at spike events only: a
spike of one side adds the other side's exponentially decaying trace,
multiplied by the global modulation g(t) that alternates +1 (data phase)
and -1 (reconstruction phase) with burn-in gaps.  Averaged over an epoch
the rule reduces to eta (v+ h+ - v- h-) with
eta = 2 A (T - tau_br)/(2T) tau_STDP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .calibration import SigmoidFit, inverse_transfer
from .neurons import DEFAULT_DT, NeuronConfig
from .rbm import RbmParams
from .rng import StreamBank, stream


@dataclass(frozen=True)
class StdpConfig:
    """Symmetric pair STDP: window K(d) = exp(-|d|/tau_stdp), magnitude A."""

    A: float = 1.6e-4                # weight units per second
    tau_stdp: float = 4e-3           # s

    def __post_init__(self):
        if self.A < 0 or self.tau_stdp <= 0:
            raise ValueError("A must be nonnegative and tau_stdp positive")


@dataclass(frozen=True)
class ModulationSchedule:
    """Epoch timing: data phase (0,T), reconstruction (T,2T), burn-ins tau_br."""

    T: float = 0.05                  # s, half epoch
    tau_br: float = 0.01             # s

    def __post_init__(self):
        if not 0 <= self.tau_br < self.T:
            raise ValueError("require 0 <= tau_br < T")

    @property
    def epoch(self) -> float:
        return 2.0 * self.T

    def eta(self, stdp: StdpConfig) -> float:
        """Effective learning rate 2 A (T - tau_br)/(2T) tau_STDP."""
        return 2.0 * stdp.A * (self.T - self.tau_br) / (2.0 * self.T) * stdp.tau_stdp


def stdp_magnitude_for_eta(eta: float, schedule: ModulationSchedule,
                           tau_stdp: float = 4e-3) -> float:
    """Invert the eta relation: the A that yields a given learning rate."""
    return eta * (2.0 * schedule.T) / (2.0 * (schedule.T - schedule.tau_br) * tau_stdp)


def modulation_g(t, schedule: ModulationSchedule):
    """g(t): +1 on (tau_br, T), -1 on (T+tau_br, 2T), 0 otherwise (mod 2T)."""
    t_arr = np.asarray(t, dtype=float)
    m = np.mod(t_arr, schedule.epoch)
    out = np.zeros_like(t_arr, dtype=np.int64)
    out[(m > schedule.tau_br) & (m < schedule.T)] = 1
    out[(m > schedule.T + schedule.tau_br) & (m < schedule.epoch)] = -1
    return int(out) if np.isscalar(t) else out


@dataclass
class TrainerState:
    """Shared weight parameters plus the per-neuron STDP traces.

    Traces decay lazily: each carries the time it was last touched.
    """

    rbm: RbmParams
    stdp: StdpConfig
    trace_v: np.ndarray = field(init=False)
    trace_h: np.ndarray = field(init=False)
    t_v: np.ndarray = field(init=False)
    t_h: np.ndarray = field(init=False)
    frozen: bool = False
    dq_sum: np.ndarray = field(init=False)

    def __post_init__(self):
        nv, nh = self.rbm.W.shape
        self.trace_v = np.zeros(nv)
        self.trace_h = np.zeros(nh)
        self.t_v = np.zeros(nv)
        self.t_h = np.zeros(nh)
        self.dq_sum = np.zeros((nv, nh))

    def _decayed(self, trace, t_last, t):
        return trace * np.exp(-(t - t_last) / self.stdp.tau_stdp)


def stdp_on_spike(state: TrainerState, side: str, index: int, t: float,
                  g_now: int, cfg: StdpConfig | None = None) -> TrainerState:
    """Apply one spike event to the trainer state (exact event-driven form).

    On a visible spike i: q[i, :] += g * trace_h, then trace_v[i] += A.
    Symmetric for hidden spikes.  While `state.frozen`, updates accumulate
    in dq_sum instead of the weights.
    """
    cfg = cfg or state.stdp
    if side not in ("v", "h"):
        raise ValueError("side must be 'v' or 'h'")
    tau = cfg.tau_stdp
    if side == "v":
        if g_now != 0:
            upd = g_now * state._decayed(state.trace_h, state.t_h, t)
            if state.frozen:
                state.dq_sum[index, :] += upd
            else:
                state.rbm.W[index, :] += upd
        state.trace_v[index] = (
            state.trace_v[index] * math.exp(-(t - state.t_v[index]) / tau) + cfg.A)
        state.t_v[index] = t
    else:
        if g_now != 0:
            upd = g_now * state._decayed(state.trace_v, state.t_v, t)
            if state.frozen:
                state.dq_sum[:, index] += upd
            else:
                state.rbm.W[:, index] += upd
        state.trace_h[index] = (
            state.trace_h[index] * math.exp(-(t - state.t_h[index]) / tau) + cfg.A)
        state.t_h[index] = t
    return state


def average_update_estimate(rates_plus: tuple[float, float],
                            rates_minus: tuple[float, float],
                            schedule: ModulationSchedule, stdp: StdpConfig,
                            n_epochs: int, seed: int,
                            n_v: int = 2, n_h: int = 2):
    """Frozen-weight check of the epoch-average update identity.

    Visible/hidden spike trains are independent Poisson processes with the
    given rates in the data and reconstruction phases.  Returns
    (measured mean dq/dt, predicted eta (v+ h+ - v- h-) from measured
    window rates, standard error of the measured mean), averaged over the
    n_v x n_h pairs.
    """
    if n_epochs <= 0:
        raise ValueError("n_epochs must be positive")
    rv_p, rh_p = rates_plus
    rv_m, rh_m = rates_minus
    rbm = RbmParams(np.zeros((n_v, n_h)), np.zeros(n_v), np.zeros(n_h))
    state = TrainerState(rbm, stdp, frozen=True)
    gen = stream(seed, "misc", 2)
    epoch = schedule.epoch
    windows = ((schedule.tau_br, schedule.T, rv_p, rh_p),
               (schedule.T + schedule.tau_br, epoch, rv_m, rh_m))
    sp_counts = np.zeros(4)          # v+, h+, v-, h-
    per_epoch = np.zeros(n_epochs)
    prev_total = 0.0
    for ep in range(n_epochs):
        t0 = ep * epoch
        events = []
        for wi, (a, b, rv, rh) in enumerate(windows):
            span = b - a
            for side, r, n_units in (("v", rv, n_v), ("h", rh, n_h)):
                for idx in range(n_units):
                    cnt = gen.poisson(r * span)
                    times = t0 + a + gen.random(cnt) * span
                    events.extend((t, side, idx) for t in times)
                    sp_counts[2 * wi + (0 if side == "v" else 1)] += cnt
        events.sort()
        for t, side, idx in events:
            g_now = modulation_g(t, schedule)
            stdp_on_spike(state, side, idx, t, g_now)
        total = state.dq_sum.mean()
        per_epoch[ep] = total - prev_total
        prev_total = total
    span_p = schedule.T - schedule.tau_br
    span_m = epoch - (schedule.T + schedule.tau_br)
    v_p = sp_counts[0] / (n_v * n_epochs * span_p)
    h_p = sp_counts[1] / (n_h * n_epochs * span_p)
    v_m = sp_counts[2] / (n_v * n_epochs * span_m)
    h_m = sp_counts[3] / (n_h * n_epochs * span_m)
    eta = schedule.eta(stdp)
    predicted = eta * (v_p * h_p - v_m * h_m)
    measured = state.dq_sum.mean() / (n_epochs * epoch)
    sem = per_epoch.std(ddof=1) / math.sqrt(n_epochs) / epoch
    return measured, predicted, sem


@dataclass
class EcdOptions:
    """Hyperparameters of the event-driven trainer."""

    schedule: ModulationSchedule = field(default_factory=ModulationSchedule)
    stdp: StdpConfig = field(default_factory=StdpConfig)
    nu_bias: float = 1000.0
    tau_syn: float = 4e-3
    init_weight_scale: float = 0.01
    init_bias: float = -1.0
    clamp_high: float = 0.98
    clamp_low: float = 1e-5
    snapshot_every: int = 500        # presentations per learning-curve row


@dataclass
class TrainingResult:
    rbm: RbmParams
    curve: list[tuple[int, float, float]]   # (presentation, accuracy, mean W)
    hidden_rates: tuple[float, float]       # initial, final (Hz)


def _epoch_signals(schedule: ModulationSchedule, dt: float):
    steps = int(round(schedule.epoch / dt))
    t = (np.arange(steps) + 0.5) * dt
    g = modulation_g(t, schedule).astype(np.int8)
    data_on = (t < schedule.T).astype(np.int8)
    return steps, g, data_on


class EventDrivenTrainer:
    """Online event-driven CD on the spiking visible/hidden network.

    Each presentation simulates one 2T epoch: the visible layer is driven
    by clamp currents during (0, T) and runs free during (T, 2T); spikes
    update the shared weights through the modulated STDP rule.  Bias
    weights learn from the bias-source spike pairings with magnitude
    A / (nu_bias tau_r), which puts weight and bias learning on the same
    probability scale.
    """

    def __init__(self, rbm: RbmParams, fit: SigmoidFit, cfg: NeuronConfig,
                 opts: EcdOptions, seed: int, dt: float = DEFAULT_DT):
        self.rbm = rbm
        self.fit = fit
        self.cfg = cfg
        self.opts = opts
        self.dt = dt
        if opts.nu_bias * dt > 0.1:
            raise ValueError("nu_bias*dt > 0.1: undersampled bias source")
        n = rbm.n_visible + rbm.n_hidden
        self._u = np.zeros(n)
        self._isyn = np.zeros(n)
        self._refr = np.zeros(n, dtype=np.int64)
        self._tr_v = np.zeros(rbm.n_visible)
        self._tr_h = np.zeros(rbm.n_hidden)
        self._tr_sv = np.zeros(rbm.n_visible)
        self._tr_sh = np.zeros(rbm.n_hidden)
        self._streams = StreamBank(seed)
        self._steps, self._g, self._data_on = _epoch_signals(opts.schedule, dt)
        self._no_g = np.zeros(self._steps, dtype=np.int8)
        self.presentations_done = 0

    def _consts(self):
        cfg = self.cfg
        return dict(
            a_m=1.0 - self.dt * cfg.g_leak / cfg.capacitance,
            dtC=self.dt / cfg.capacitance,
            noise_amp=cfg.sigma / cfg.capacitance * math.sqrt(self.dt),
            var_step=(cfg.sigma / cfg.capacitance) ** 2 * self.dt,
            refr_steps=int(round(cfg.tau_refr / self.dt)),
            decay_syn=math.exp(-self.dt / self.opts.tau_syn),
        )

    def _run_epoch(self, I_data: np.ndarray, stdp_on: bool, g, data_on,
                   n_steps: int | None = None):
        n = self.rbm.n_visible + self.rbm.n_hidden
        k = n_steps if n_steps is not None else self._steps
        c = self._consts()
        counts_v = np.zeros(self.rbm.n_visible, dtype=np.int64)
        counts_h = np.zeros(self.rbm.n_hidden, dtype=np.int64)
        A_b = self.opts.stdp.A / (self.opts.nu_bias * self.cfg.tau_refr)
        _kernels.trainer_chunk(
            self.rbm.W, self.rbm.b_v, self.rbm.b_h,
            self._u, self._isyn, self._refr,
            self._tr_v, self._tr_h, self._tr_sv, self._tr_sh,
            I_data, data_on[:k], g[:k],
            self._streams.normals("membrane", n, k),
            self._streams.uniforms("bridge", n, k),
            self._streams.uniforms("source", n, k),
            1.0 / self.fit.beta, math.log(self.fit.gamma * self.fit.tau_r),
            1.0 / (self.opts.nu_bias * self.opts.tau_syn),
            self.opts.nu_bias * self.dt,
            c["a_m"], c["dtC"], self.cfg.theta, self.cfg.u_reset,
            c["noise_amp"], c["var_step"], c["refr_steps"], c["decay_syn"],
            self.opts.stdp.A, A_b, math.exp(-self.dt / self.opts.stdp.tau_stdp),
            stdp_on, counts_v, counts_h)
        if not np.all(np.isfinite(self.rbm.W)):
            raise FloatingPointError(
                f"weights diverged after presentation {self.presentations_done}")
        return counts_v, counts_h

    def present(self, clamp_currents: np.ndarray):
        """Train on one digit presentation (one 2T epoch)."""
        cv, ch = self._run_epoch(clamp_currents, True, self._g, self._data_on)
        self.presentations_done += 1
        return cv, ch

    def rate_readout(self, pixel_currents: np.ndarray, settle: float,
                     window: float, label_groups: int, group_size: int):
        """Clamp pixels only, labels free; per-group spike counts in window."""
        rbm = self.rbm
        I = np.zeros(rbm.n_visible)
        I[:rbm.n_sensory] = pixel_currents
        n_settle = int(round(settle / self.dt))
        n_win = int(round(window / self.dt))
        self._reset_dynamic_state()
        always_on = np.ones(max(n_settle, n_win), dtype=np.int8)
        if n_settle:
            self._run_epoch(I, False, self._no_g_of(n_settle), always_on,
                            n_settle)
        cv, ch = self._run_epoch(I, False, self._no_g_of(n_win), always_on,
                                 n_win)
        label_counts = cv[rbm.n_sensory:]
        groups = label_counts.reshape(label_groups, group_size).sum(axis=1)
        return groups, ch

    def _no_g_of(self, k: int) -> np.ndarray:
        if k <= self._steps:
            return self._no_g
        return np.zeros(k, dtype=np.int8)

    def _reset_dynamic_state(self):
        self._u[:] = 0.0
        self._isyn[:] = 0.0
        self._refr[:] = 0
        self._tr_v[:] = 0.0
        self._tr_h[:] = 0.0
        self._tr_sv[:] = 0.0
        self._tr_sh[:] = 0.0


def train_cd_reference(rbm: RbmParams, data: np.ndarray, k: int = 1,
                       epsilon: float = 1e-3, minibatch: int = 100,
                       epochs: int = 1, seed: int = 0,
                       shuffle: bool = True) -> RbmParams:
    """Standard CD_k with exact arithmetic on probability-valued data.

    data rows are visible probability vectors in [0, 1] (pixels then class
    units).  Hidden states are sampled binary along the chain; the last
    half-step uses probabilities, per the usual recipe.  Biases train with
    the same rule.
    """
    if np.any(data < 0) or np.any(data > 1):
        raise ValueError("data must be probabilities in [0, 1]")
    out = rbm.copy()
    gen = stream(seed, "misc", 3)
    n = len(data)
    for ep in range(epochs):
        order = gen.permutation(n) if shuffle else np.arange(n)
        for start in range(0, n, minibatch):
            batch = data[order[start:start + minibatch]]
            m = len(batch)
            ph0 = _sigmoid(batch @ out.W + out.b_h)
            h = (gen.random(ph0.shape) < ph0).astype(float)
            v = batch
            for _ in range(k):
                pv = _sigmoid(h @ out.W.T + out.b_v)
                v = pv
                ph = _sigmoid(v @ out.W + out.b_h)
                h = (gen.random(ph.shape) < ph).astype(float)
            out.W += epsilon * (batch.T @ ph0 - v.T @ ph) / m
            out.b_v += epsilon * (batch - v).mean(axis=0)
            out.b_h += epsilon * (ph0 - ph).mean(axis=0)
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))

"""Noisy leaky integrate-and-fire neurons and first-order current synapses.

The membrane follows  C du/dt = -g_L u + I(t) + sigma xi(t)  below threshold;
a spike resets u to u_rst and clamps it there for the refractory period.
Synaptic input is a first-order filter: each presynaptic spike deposits its
charge q through an exponential current with time constant tau_syn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Simulation defaults (constants used throughout unless overridden).
DEFAULT_DT = 1e-4  # s
SAMPLE_RATE = 1000.0  # Hz, binary-state sampling of spike trains


@dataclass(frozen=True)
class NeuronConfig:
    """LIF parameters. Defaults give a 1 ms membrane, 250 Hz saturation."""

    capacitance: float = 1e-12       # F
    g_leak: float = 1e-9             # S
    theta: float = 0.1               # V, firing threshold
    u_reset: float = 0.0             # V
    tau_refr: float = 4e-3           # s
    sigma: float = 3e-11             # A*sqrt(s), white-noise current amplitude

    def __post_init__(self):
        if self.capacitance <= 0 or self.g_leak <= 0:
            raise ValueError("capacitance and g_leak must be positive")
        if self.tau_refr < 0:
            raise ValueError("tau_refr must be nonnegative")
        if self.theta <= self.u_reset:
            raise ValueError("theta must exceed u_reset")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def tau_m(self) -> float:
        return self.capacitance / self.g_leak

    @property
    def sigma_v(self) -> float:
        """Voltage scale of the noise, sigma^2/(g_L C) under the square."""
        return self.sigma / math.sqrt(self.g_leak * self.capacitance)


@dataclass
class NeuronState:
    """Integration state of one neuron."""

    u: float = 0.0
    refr_left: float = 0.0           # s of refractory clamp remaining
    syn_currents: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def total_current(self) -> float:
        return float(self.syn_currents.sum()) if self.syn_currents.size else 0.0


def step_neuron(state: NeuronState, cfg: NeuronConfig, input_current: float,
                noise_draw: float, dt: float,
                bridge_draw: float | None = None) -> tuple[NeuronState, bool]:
    """Advance one neuron by one Euler-Maruyama step; returns (state, spiked).

    ``bridge_draw`` (a uniform variate), when given and sigma > 0, enables the
    within-step threshold-crossing test: a step ending below theta may still
    spike with the Brownian-bridge probability
    exp(-2 (theta-u0)(theta-u1) / (sigma/C)^2 dt).  Without it, plain
    end-of-step detection applies; that variant underestimates rates badly
    at coarse dt because missed within-step excursions scale as sqrt(dt).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.refr_left > 0:
        new = NeuronState(cfg.u_reset, max(state.refr_left - dt, 0.0),
                          state.syn_currents)
        return new, False
    u0 = state.u
    u1 = (u0 + dt * (-cfg.g_leak * u0 + input_current) / cfg.capacitance
          + (cfg.sigma / cfg.capacitance) * math.sqrt(dt) * noise_draw)
    if not math.isfinite(u1):
        raise FloatingPointError(
            f"membrane potential diverged (u={u1!r}); check dt and inputs")
    spiked = u1 >= cfg.theta
    if not spiked and bridge_draw is not None and cfg.sigma > 0.0:
        var_step = (cfg.sigma / cfg.capacitance) ** 2 * dt
        p_cross = math.exp(-2.0 * (cfg.theta - u0) * (cfg.theta - u1) / var_step)
        spiked = bridge_draw < p_cross
    if spiked:
        return NeuronState(cfg.u_reset, cfg.tau_refr, state.syn_currents), True
    return NeuronState(u1, 0.0, state.syn_currents), False


@dataclass
class SynapseBank:
    """Dense charge-weight matrix (coulombs) from a source to a target layer."""

    q: np.ndarray                    # (n_source, n_target)
    tau_syn: float = 4e-3            # s

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.ndim != 2:
            raise ValueError("q must be a 2-d matrix")
        if self.tau_syn <= 0:
            raise ValueError("tau_syn must be positive")


def integrate_synapse(bank: SynapseBank, currents: np.ndarray,
                      source_spikes: np.ndarray, dt: float) -> np.ndarray:
    """One step of the first-order filter for a bank's target currents.

    ``source_spikes`` holds per-source spike counts for this step.  Each
    spike from source i adds q[i, :]/tau_syn; between spikes the current
    decays by exp(-dt/tau_syn).  Superposition is exact and the time
    integral of the response to one spike equals its charge q.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = currents * math.exp(-dt / bank.tau_syn)
    if np.any(source_spikes):
        out = out + source_spikes.astype(float) @ bank.q / bank.tau_syn
    return out


@dataclass(frozen=True)
class PoissonSource:
    """Poisson spike train with a per-target charge (bias input)."""

    rate: float                      # Hz
    charge: float                    # C per spike per target

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")


def poisson_spikes(rate: float, duration: float, dt: float, seed: int,
                   _gen: np.random.Generator | None = None) -> np.ndarray:
    """Event times of a Bernoulli-thinned Poisson train on the dt grid.

    Per-step spike probability is rate*dt; configurations with rate*dt > 0.1
    undersample the process and are rejected.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if dt <= 0 or duration < 0:
        raise ValueError("dt must be positive and duration nonnegative")
    if rate * dt > 0.1:
        raise ValueError(
            f"rate*dt = {rate * dt:.3g} > 0.1: Poisson process undersampled; "
            "decrease dt or the rate")
    from .rng import stream
    gen = _gen if _gen is not None else stream(seed, "source", 0)
    n_steps = int(round(duration / dt))
    if n_steps == 0 or rate == 0.0:
        return np.empty(0)
    hits = gen.random(n_steps) < rate * dt
    return (np.nonzero(hits)[0] + 1) * dt


@dataclass
class SpikeRecord:
    """Timestamped spikes of one simulation run, sorted by time."""

    ids: np.ndarray                  # uint32 neuron ids
    times: np.ndarray                # float64 seconds
    duration: float
    dt: float
    n_neurons: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint32)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.ids.shape != self.times.shape:
            raise ValueError("ids and times must have equal length")
        if self.times.size and (self.times.min() < 0 or
                                self.times.max() > self.duration + 1e-12):
            raise ValueError("spike times outside [0, duration]")

    def __len__(self) -> int:
        return int(self.ids.size)

    def spikes_of(self, neuron: int) -> np.ndarray:
        return self.times[self.ids == neuron]

    def counts(self, window: tuple[float, float] | None = None) -> np.ndarray:
        """Per-neuron spike counts, optionally restricted to a time window."""
        if window is None:
            sel = slice(None)
        else:
            lo, hi = window
            sel = (self.times > lo) & (self.times <= hi)
        return np.bincount(self.ids[sel], minlength=self.n_neurons)

    def rates(self, window: tuple[float, float] | None = None) -> np.ndarray:
        span = self.duration if window is None else window[1] - window[0]
        return self.counts(window) / span if span > 0 else np.zeros(self.n_neurons)

"""Transfer-curve calibration and the RBM-to-network parameter mapping.

The stationary firing rate of the noisy LIF neuron under constant current I
is fitted by the sigmoid

    nu(I) = (1/tau_r) / (1 + exp(-beta I) / (gamma tau_r)),

which linearizes to log(1/nu - tau_r) = -beta I - log gamma.  The fitted
(beta, gamma) convert dimensionless Boltzmann parameters into synaptic
charges and bias currents:  q_ij = W_ij tau_syn / beta  and
I_b = (b - log(gamma tau_r)) / beta, delivered by a Poisson source of rate
nu_bias with charge I_b / nu_bias.

For mapping purposes the curve can be measured with a fixed background
bias source running, so the fit reflects the synaptic shot noise a neuron
actually sees inside a network; see `network_matched_fit`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx

from . import _kernels
from .neurons import DEFAULT_DT, NeuronConfig, PoissonSource, SynapseBank
from .rbm import RbmParams
from .rng import StreamBank

_CHUNK = 50_000


@dataclass(frozen=True)
class SigmoidFit:
    """Fitted transfer-curve parameters."""

    beta: float                      # 1/A
    gamma: float                     # Hz
    tau_r: float                     # s, estimated as 1/max rate

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0 or self.tau_r <= 0:
            raise ValueError("beta, gamma and tau_r must be positive")

    def rate(self, I):
        """nu(I) under the fit."""
        return (1.0 / self.tau_r) / (1.0 + np.exp(-np.asarray(I) * self.beta)
                                     / (self.gamma * self.tau_r))


@dataclass
class TransferCurve:
    currents: np.ndarray             # A
    rates: np.ndarray                # Hz
    duration: float                  # s per grid point

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.currents.shape != self.rates.shape:
            raise ValueError("currents and rates must align")


def measure_transfer_curve(cfg: NeuronConfig, currents: np.ndarray,
                           duration: float, seed: int,
                           dt: float = DEFAULT_DT,
                           background: PoissonSource | None = None,
                           tau_syn: float = 4e-3) -> TransferCurve:
    """Mean firing rate per constant injected current, one lane per current.

    With `background`, every lane additionally receives that Poisson source
    through the tau_syn filter and the reported currents include its mean
    (charge * rate), so the curve is a function of total mean input current.
    """
    currents = np.atleast_1d(np.asarray(currents, dtype=float))
    n = currents.size
    n_steps = int(round(duration / dt))
    if background is not None and background.rate * dt > 0.1:
        raise ValueError("background rate*dt > 0.1: undersampled")
    q_bias = np.full(n, background.charge if background else 0.0)
    p_bias = np.full(n, background.rate * dt if background else 0.0)
    I_mean_bg = background.charge * background.rate if background else 0.0

    u = np.zeros(n)
    isyn = np.zeros(n)
    refr = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    a_m = 1.0 - dt * cfg.g_leak / cfg.capacitance
    dtC = dt / cfg.capacitance
    noise_amp = cfg.sigma / cfg.capacitance * math.sqrt(dt)
    var_step = (cfg.sigma / cfg.capacitance) ** 2 * dt
    refr_steps = int(round(cfg.tau_refr / dt))
    streams = StreamBank(seed)
    done = 0
    while done < n_steps:
        k = min(_CHUNK, n_steps - done)
        _kernels.lanes_chunk(u, isyn, refr, currents, q_bias, p_bias,
                             streams.normals("membrane", n, k),
                             streams.uniforms("bridge", n, k),
                             streams.uniforms("source", n, k),
                             a_m, dtC, cfg.theta, cfg.u_reset, noise_amp,
                             var_step, refr_steps, math.exp(-dt / tau_syn),
                             1.0 / tau_syn, counts)
        done += k
    return TransferCurve(currents + I_mean_bg, counts / duration, duration)


def predict_transfer_curve(cfg: NeuronConfig, I) -> np.ndarray | float:
    """Stationary rate of the continuous dynamics by numerical quadrature.

    Evaluates (tau_r + tau_m sqrt(pi) \\int erfcx(-x) dx)^{-1} between
    (u_rst - u0)/sigma_V and (theta - u0)/sigma_V with u0 = I/g_L.  Relative
    quadrature tolerance 1e-8; rates are clipped to [0, 1/tau_r].
    """
    if cfg.sigma <= 0:
        raise ValueError("prediction requires sigma > 0")
    scalar = np.isscalar(I)
    I_arr = np.atleast_1d(np.asarray(I, dtype=float))
    sv = cfg.sigma_v
    tau_m = cfg.tau_m
    out = np.empty(I_arr.shape)
    for idx, current in enumerate(I_arr):
        u0 = current / cfg.g_leak
        a = (cfg.u_reset - u0) / sv
        b = (cfg.theta - u0) / sv
        if a > 25.0:
            out[idx] = 0.0
            continue
        val, err = quad(lambda x: erfcx(-x), a, b, epsabs=0.0, epsrel=1e-10,
                        limit=300)
        if not math.isfinite(val) or (val > 0 and err / val > 1e-8):
            raise ArithmeticError(
                f"transfer-curve quadrature did not converge at I={current:.3e}")
        out[idx] = 1.0 / (cfg.tau_refr + tau_m * math.sqrt(math.pi) * val)
    return float(out[0]) if scalar else out


def fit_sigmoid(curve: TransferCurve, tau_r: float | None = None) -> SigmoidFit:
    """Least-squares fit of the linearized sigmoid to a measured curve.

    tau_r defaults to 1/max(rate), i.e. the curve should include a strongly
    saturated probe point.  Points at zero rate or within 2% of saturation
    are excluded from the regression (log singularities).
    """
    rates = curve.rates
    if tau_r is None:
        if rates.max() <= 0:
            raise ValueError("curve is silent; cannot estimate tau_r")
        tau_r = 1.0 / rates.max()
    keep = (rates > 0) & (rates < 0.98 / tau_r)
    if keep.sum() < 2:
        raise ValueError("need at least two unsaturated, non-silent points")
    y = np.log(1.0 / rates[keep] - tau_r)
    x = curve.currents[keep]
    A = np.column_stack([x, np.ones(keep.sum())])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    beta = -float(coef[0])
    gamma = float(np.exp(-coef[1]))
    if beta <= 0:
        raise ValueError("degenerate curve: fitted beta not positive")
    return SigmoidFit(beta, gamma, tau_r)


def inverse_transfer(rate: float, fit: SigmoidFit) -> float | np.ndarray:
    """Current f with nu(f) = rate under the fit; rate in (0, 1/tau_r)."""
    s = np.asarray(rate, dtype=float)
    if np.any(s <= 0) or np.any(s >= 1.0 / fit.tau_r):
        raise ValueError("rate must lie strictly inside (0, 1/tau_r)")
    out = np.log(s / (fit.gamma - s * fit.gamma * fit.tau_r)) / fit.beta
    return float(out) if np.isscalar(rate) else out


def calibration_grid(cfg: NeuronConfig, n_points: int = 21,
                     rate_lo: float = 2.0, rate_hi: float = 240.0) -> np.ndarray:
    """Current grid whose predicted rates span [rate_lo, rate_hi]."""
    lo = _current_for_rate(cfg, rate_lo)
    hi = _current_for_rate(cfg, rate_hi)
    return np.linspace(lo, hi, n_points)


def _current_for_rate(cfg: NeuronConfig, target: float) -> float:
    lo, hi = -5e-8, 5e-8
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if predict_transfer_curve(cfg, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate(cfg: NeuronConfig, duration: float = 5.0, seed: int = 0,
              dt: float = DEFAULT_DT, n_points: int = 21,
              currents: np.ndarray | None = None,
              background: PoissonSource | None = None,
              probe_factor: float = 100.0) -> tuple[TransferCurve, SigmoidFit]:
    """Measure a transfer curve plus saturation probe and fit the sigmoid.

    The refractory period is estimated from a probe at probe_factor times
    the largest grid current magnitude (driven positive), then (beta, gamma)
    come from the linear regression over the grid points.
    """
    if currents is None:
        currents = calibration_grid(cfg, n_points)
    currents = np.asarray(currents, dtype=float)
    probe = probe_factor * np.abs(currents).max()
    probe_curve = measure_transfer_curve(cfg, np.array([probe]),
                                         min(duration, 20.0), seed + 1, dt)
    max_rate = probe_curve.rates[0]
    if max_rate <= 0:
        raise ValueError("saturation probe did not fire; curve degenerate")
    curve = measure_transfer_curve(cfg, currents, duration, seed, dt,
                                   background=background)
    fit = fit_sigmoid(curve, tau_r=1.0 / max_rate)
    return curve, fit


def network_matched_fit(cfg: NeuronConfig, duration: float = 80.0, seed: int = 0,
                        dt: float = DEFAULT_DT, nu_bias: float = 1000.0,
                        representative_bias: float = -1.5,
                        n_points: int = 21) -> SigmoidFit:
    """Two-pass fit matching the noise a mapped neuron sees in a network.

    Pass 1 fits the white-noise-only curve; its inverse gives the bias
    charge a unit with the representative dimensionless bias would use.
    Pass 2 re-measures the curve with that Poisson source running (constant
    currents shifted so total mean currents span the operating range) and
    refits.  Weights mapped with the pass-2 fit reproduce conditional
    activation probabilities far better than the plain fit, because the
    bias source's shot noise flattens the effective transfer curve.
    """
    _, fit1 = calibrate(cfg, duration=min(duration, 20.0), seed=seed, dt=dt)
    I_rep = (representative_bias - math.log(fit1.gamma * fit1.tau_r)) / fit1.beta
    q_bg = I_rep / nu_bias
    background = PoissonSource(nu_bias, q_bg)
    # bracket the operating range under the background with a coarse scan
    scan_tot = np.linspace(-7e-9, 0.5e-9, 40)
    coarse = measure_transfer_curve(cfg, scan_tot - I_rep, 20.0, seed + 2, dt,
                                    background=background)
    order = np.argsort(coarse.rates, kind="stable")
    r_s = coarse.rates[order]
    i_s = coarse.currents[order]
    keep = np.concatenate([[True], np.diff(r_s) > 0])
    lo = float(np.interp(2.0, r_s[keep], i_s[keep]))
    hi = float(np.interp(240.0, r_s[keep], i_s[keep]))
    grid_total = np.linspace(lo, hi, n_points)
    curve, fit2 = calibrate(cfg, duration=duration, seed=seed + 3, dt=dt,
                            currents=grid_total - I_rep, background=background)
    return fit2


@dataclass
class NetworkMapping:
    """Charges and bias sources realizing an RBM on the spiking network."""

    q_vh: np.ndarray                 # (n_v, n_h) charges, visible -> hidden
    q_hv: np.ndarray                 # (n_h, n_v) charges, hidden -> visible
    bias_v: list[PoissonSource]
    bias_h: list[PoissonSource]
    tau_syn: float
    nu_bias: float


def map_rbm_to_network(rbm: RbmParams, fit: SigmoidFit | list[SigmoidFit],
                       tau_syn: float = 4e-3, nu_bias: float = 1000.0,
                       ) -> NetworkMapping:
    """Convert dimensionless RBM parameters to charges and bias sources.

    q_ij = W_ij tau_syn / beta of the target neuron; bias currents satisfy
    beta I_b + log(gamma tau_r) = b and are delivered as Poisson charges
    I_b / nu_bias.  Passing one fit per unit (visible units first, then
    hidden) applies per-neuron compensation of transfer-curve mismatch.
    """
    nv, nh = rbm.W.shape
    if isinstance(fit, SigmoidFit):
        fits = [fit] * (nv + nh)
    else:
        fits = list(fit)
        if len(fits) != nv + nh:
            raise ValueError("need one fit per unit (visible then hidden)")
    beta_v = np.array([f.beta for f in fits[:nv]])
    beta_h = np.array([f.beta for f in fits[nv:]])
    q_vh = rbm.W * tau_syn / beta_h[None, :]
    q_hv = rbm.W.T * tau_syn / beta_v[None, :]
    bias_v = []
    for i in range(nv):
        f = fits[i]
        I_b = (rbm.b_v[i] - math.log(f.gamma * f.tau_r)) / f.beta
        bias_v.append(PoissonSource(nu_bias, I_b / nu_bias))
    bias_h = []
    for j in range(nh):
        f = fits[nv + j]
        I_b = (rbm.b_h[j] - math.log(f.gamma * f.tau_r)) / f.beta
        bias_h.append(PoissonSource(nu_bias, I_b / nu_bias))
    return NetworkMapping(q_vh, q_hv, bias_v, bias_h, tau_syn, nu_bias)


def build_rbm_network(rbm: RbmParams, mapping: NetworkMapping,
                      cfg: NeuronConfig):
    """Two-layer Network realizing the mapped RBM."""
    from .network import Layer, Network
    net = Network(
        layers=[Layer("visible", rbm.n_visible, cfg),
                Layer("hidden", rbm.n_hidden, cfg)],
        banks=[("visible", "hidden", SynapseBank(mapping.q_vh, mapping.tau_syn)),
               ("hidden", "visible", SynapseBank(mapping.q_hv, mapping.tau_syn))],
        bias_sources={"visible": list(mapping.bias_v),
                      "hidden": list(mapping.bias_h)},
        tau_syn=mapping.tau_syn,
    )
    return net

"""Classification, generation, cue integration and weight quantization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import (NetworkMapping, SigmoidFit, build_rbm_network,
                          inverse_transfer, map_rbm_to_network)
from .mnist import HIGH, LOW, binarize, clamp_currents
from .neurons import DEFAULT_DT, NeuronConfig, SpikeRecord
from .network import CurrentSchedule, WatchdogConfig, run_network
from .rbm import RbmParams
from .sampling import all_states, exact_boltzmann

SETTLE_TIME = 0.04                   # s, ~10 refractory periods


@dataclass
class ClassReadout:
    """Population rates per label group and the argmax winner."""

    rates: np.ndarray                # Hz per label group
    label: int
    no_evidence: bool                # all groups silent; label is the tie rule


def classify_by_rate(record: SpikeRecord, class_groups: list[np.ndarray],
                     window: tuple[float, float]) -> ClassReadout:
    """Winner = group with the highest summed rate; ties break to the lowest
    label (and are flagged when every group is silent)."""
    lo, hi = window
    if not (0 <= lo < hi <= record.duration + 1e-12):
        raise ValueError("window must lie inside the record duration")
    counts = record.counts((lo, hi))
    rates = np.array([counts[g].sum() / (hi - lo) for g in class_groups])
    label = int(np.argmax(rates))    # argmax takes the first (lowest) maximum
    return ClassReadout(rates, label, bool(rates.max() == 0))


def free_energy(rbm: RbmParams, v: np.ndarray) -> float | np.ndarray:
    """F(v) = -b_v . v - sum_j softplus(b_h_j + (W^T v)_j); hidden units
    marginalized analytically; lower F = more probable visible vector."""
    v_arr = np.atleast_2d(np.asarray(v, dtype=float))
    if v_arr.shape[1] != rbm.n_visible:
        raise ValueError("v length must equal the number of visible units")
    x = v_arr @ rbm.W + rbm.b_h
    F = -(v_arr @ rbm.b_v) - np.logaddexp(0.0, x).sum(axis=1)
    return float(F[0]) if np.asarray(v).ndim == 1 else F


def visible_marginal_exact(rbm: RbmParams) -> np.ndarray:
    """Exact p(v) by joint enumeration (oracle for the free energy)."""
    p_joint = exact_boltzmann(rbm.to_boltzmann())
    nv = rbm.n_visible
    n = nv + rbm.n_hidden
    codes = np.arange(2 ** n)
    v_codes = codes & ((1 << nv) - 1)
    return np.bincount(v_codes, weights=p_joint, minlength=2 ** nv)


def classify_by_free_energy(rbm: RbmParams, pixel_probs: np.ndarray,
                            n_labels: int = 10, high: float = HIGH,
                            low: float = LOW) -> int:
    """Label whose clamped class-group visible vector minimizes F."""
    n_class = rbm.n_class
    if n_class % n_labels != 0:
        raise ValueError("class units must split evenly across labels")
    per = n_class // n_labels
    cand = np.empty((n_labels, rbm.n_visible))
    for c in range(n_labels):
        lab = np.full(n_class, low)
        lab[c * per:(c + 1) * per] = high
        cand[c] = np.concatenate([pixel_probs, lab])
    F = free_energy(rbm, cand)
    return int(np.argmin(F))


@dataclass(frozen=True)
class QuantizationSpec:
    """Uniform grids over (mu - 4.5 sigma, mu + 4.5 sigma), separately for
    weights and biases; endpoints inclusive, 2^bits levels."""

    bits: int
    w_interval: tuple[float, float]
    b_interval: tuple[float, float]

    def __post_init__(self):
        if self.bits < 2:
            raise ValueError("bits must be at least 2")

    @classmethod
    def from_params(cls, rbm: RbmParams, bits: int) -> "QuantizationSpec":
        w = rbm.W.ravel()
        b = np.concatenate([rbm.b_v, rbm.b_h])
        return cls(bits,
                   (float(w.mean() - 4.5 * w.std()), float(w.mean() + 4.5 * w.std())),
                   (float(b.mean() - 4.5 * b.std()), float(b.mean() + 4.5 * b.std())))


def _snap(values: np.ndarray, interval: tuple[float, float], bits: int) -> np.ndarray:
    lo, hi = interval
    n_levels = 2 ** bits
    if hi <= lo:                     # degenerate (zero spread): single level
        return np.full_like(values, 0.5 * (lo + hi))
    step = (hi - lo) / (n_levels - 1)
    idx = np.floor((values - lo) / step + 0.5)   # round half up
    idx = np.clip(idx, 0, n_levels - 1)
    return lo + idx * step


def quantize_params(rbm: RbmParams, spec: QuantizationSpec) -> RbmParams:
    """Snap every weight and bias to its grid; out-of-range values clip to
    the end levels.  Re-applying the same spec is a no-op."""
    return RbmParams(_snap(rbm.W, spec.w_interval, spec.bits),
                     _snap(rbm.b_v, spec.b_interval, spec.bits),
                     _snap(rbm.b_h, spec.b_interval, spec.bits),
                     rbm.n_class)


def activity_regulator(rates: np.ndarray, threshold: float = 5.0,
                       window: int = 5, current: float = 1.0) -> np.ndarray:
    """Reference semantics of the layer watchdog on a rate time series.

    Input: per-step layer population rates (Hz).  Output: injected current
    per step.  Injection starts when the windowed mean rate falls below the
    threshold and persists one full window after it recovers.
    """
    rates = np.asarray(rates, dtype=float)
    out = np.zeros_like(rates)
    release = 0
    for k in range(len(rates)):
        lo = max(0, k - window + 1)
        mean_rate = rates[lo:k + 1].mean()
        if mean_rate < threshold:
            release = window
        elif release > 0:
            release -= 1
        if release > 0:
            out[k] = current
    return out


def _eval_network(rbm: RbmParams, fit: SigmoidFit, cfg: NeuronConfig,
                  watchdog_current: float | None):
    mapping = map_rbm_to_network(rbm, fit)
    net = build_rbm_network(rbm, mapping, cfg)
    if watchdog_current is not None:
        net.watchdogs = {
            "visible": WatchdogConfig(current=watchdog_current),
            "hidden": WatchdogConfig(current=watchdog_current),
        }
    return net


def _label_clamp_currents(rbm: RbmParams, fit: SigmoidFit, labels_high,
                          labels_low, n_labels: int,
                          inhibit_margin: float) -> np.ndarray:
    """Clamp currents for the class-unit block: high groups driven to the
    high probability, inhibited groups floored below the low level."""
    per = rbm.n_class // n_labels
    I = np.zeros(rbm.n_class)
    f_high = inverse_transfer(HIGH / fit.tau_r, fit)
    f_floor = inverse_transfer(LOW / fit.tau_r, fit) - inhibit_margin
    for c in range(n_labels):
        sl = slice(c * per, (c + 1) * per)
        if c in labels_high:
            I[sl] = f_high
        elif c in labels_low:
            I[sl] = f_floor
    return I


def generate_digit(rbm: RbmParams, fit: SigmoidFit, cfg: NeuronConfig,
                   label: int, duration: float, seed: int,
                   n_labels: int = 10, dt: float = DEFAULT_DT,
                   watchdog: bool = True, inhibit_margin: float = 2e-9,
                   settle: float = SETTLE_TIME):
    """Clamp one label group high, inhibit the rest, let the pixels run free.

    Returns (per-pixel mean rates over the post-settling window, record).
    """
    others = [c for c in range(n_labels) if c != label]
    I_class = _label_clamp_currents(rbm, fit, {label}, set(others), n_labels,
                                    inhibit_margin)
    I = np.zeros(rbm.n_visible + rbm.n_hidden)
    I[rbm.n_sensory:rbm.n_visible] = I_class
    wd_current = inverse_transfer(20.0, fit) if watchdog else None
    net = _eval_network(rbm, fit, cfg, wd_current)
    record = run_network(net, CurrentSchedule.constant(I), duration, seed, dt)
    rates = record.rates((settle, duration))[:rbm.n_sensory]
    return rates, record


def cue_integration(rbm: RbmParams, fit: SigmoidFit, cfg: NeuronConfig,
                    pixel_probs: np.ndarray, pixel_mask: np.ndarray,
                    allowed_labels: set[int], duration: float, seed: int,
                    n_labels: int = 10, dt: float = DEFAULT_DT,
                    watchdog: bool = True, inhibit_margin: float = 2e-9,
                    settle: float = SETTLE_TIME):
    """Clamp a pixel subset, inhibit disallowed labels, read the winner.

    pixel_mask selects the clamped pixels; unclamped pixels and allowed
    label groups run free.  Returns (ClassReadout over allowed labels only
    by construction, reconstruction rates, record).
    """
    pixel_probs = np.asarray(pixel_probs, dtype=float)
    pixel_mask = np.asarray(pixel_mask, dtype=bool)
    disallowed = set(range(n_labels)) - set(allowed_labels)
    I = np.zeros(rbm.n_visible + rbm.n_hidden)
    I_pix = np.zeros(rbm.n_sensory)
    if pixel_mask.any():
        I_pix[pixel_mask] = clamp_currents(pixel_probs[pixel_mask], fit)
    I[:rbm.n_sensory] = I_pix
    I[rbm.n_sensory:rbm.n_visible] = _label_clamp_currents(
        rbm, fit, set(), disallowed, n_labels, inhibit_margin)
    wd_current = inverse_transfer(20.0, fit) if watchdog else None
    net = _eval_network(rbm, fit, cfg, wd_current)
    record = run_network(net, CurrentSchedule.constant(I), duration, seed, dt)
    per = rbm.n_class // n_labels
    groups = [np.arange(rbm.n_sensory + c * per, rbm.n_sensory + (c + 1) * per)
              for c in range(n_labels)]
    readout = classify_by_rate(record, groups, (settle, duration))
    recon = record.rates((settle, duration))[:rbm.n_sensory]
    return readout, recon, record

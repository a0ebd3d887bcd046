"""scikit-learn estimator wrappers around the two trainers.

Both classifiers take grayscale digit images (n_samples, 784) in [0, 1]
and integer labels; they binarize internally.  `CDDigitClassifier` trains
the exact-arithmetic CD baseline and predicts by free-energy minimization.
`SpikingCDClassifier` trains the spiking network online with event-driven
CD and predicts by population-rate readout of simulated runs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .calibration import network_matched_fit
from .config import ExperimentConfig
from .learning import (EcdOptions, EventDrivenTrainer, ModulationSchedule,
                       StdpConfig, train_cd_reference)
from .mnist import HIGH, LOW, binarize, clamp_currents, encode_label_groups
from .rbm import RbmParams
from .rng import stream


def _validate_images(X, n_pixels: int = 784):
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != n_pixels:
        raise ValueError(f"expected {n_pixels} pixel columns, got {X.shape[1]}")
    if X.min() < 0 or X.max() > 1:
        raise ValueError("pixel values must lie in [0, 1]")
    return X


class CDDigitClassifier(BaseEstimator, ClassifierMixin):
    """RBM digit classifier trained with standard contrastive divergence."""

    def __init__(self, n_hidden=500, units_per_class=1, cd_k=1, epsilon=1e-3,
                 minibatch=100, epochs=15, init_scale=0.01, seed=0):
        self.n_hidden = n_hidden
        self.units_per_class = units_per_class
        self.cd_k = cd_k
        self.epsilon = epsilon
        self.minibatch = minibatch
        self.epochs = epochs
        self.init_scale = init_scale
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        X = _validate_images(X)
        self.classes_ = np.unique(y)
        n_class_units = len(self.classes_) * self.units_per_class
        nv = X.shape[1] + n_class_units
        g = stream(self.seed, "misc", 6)
        rbm = RbmParams(g.normal(0.0, self.init_scale, (nv, self.n_hidden)),
                        np.zeros(nv), np.zeros(self.n_hidden), n_class_units)
        data = np.empty((len(X), nv))
        class_of = {c: i for i, c in enumerate(self.classes_)}
        for r in range(len(X)):
            data[r, :X.shape[1]] = binarize(X[r])
            data[r, X.shape[1]:] = encode_label_groups(
                class_of[y[r]], len(self.classes_), self.units_per_class)
        self.rbm_ = train_cd_reference(rbm, data, k=self.cd_k,
                                       epsilon=self.epsilon,
                                       minibatch=self.minibatch,
                                       epochs=self.epochs, seed=self.seed)
        return self

    def _free_energies(self, X):
        from .evaluation import free_energy
        X = _validate_images(X)
        n_lab = len(self.classes_)
        out = np.empty((len(X), n_lab))
        for r in range(len(X)):
            pix = binarize(X[r])
            cand = np.empty((n_lab, self.rbm_.n_visible))
            for c in range(n_lab):
                cand[c] = np.concatenate([
                    pix, encode_label_groups(c, n_lab, self.units_per_class)])
            out[r] = free_energy(self.rbm_, cand)
        return out

    def predict(self, X):
        check_is_fitted(self, "rbm_")
        F = self._free_energies(X)
        return self.classes_[np.argmin(F, axis=1)]


class SpikingCDClassifier(BaseEstimator, ClassifierMixin):
    """Spiking-network digit classifier trained by event-driven CD."""

    def __init__(self, n_hidden=100, units_per_class=4, n_presentations=3000,
                 stdp_A=1e-3, init_scale=0.01, init_bias=-1.0,
                 readout_window=0.2, settle=0.05, seed=0, dt=1e-4,
                 config: ExperimentConfig | None = None):
        self.n_hidden = n_hidden
        self.units_per_class = units_per_class
        self.n_presentations = n_presentations
        self.stdp_A = stdp_A
        self.init_scale = init_scale
        self.init_bias = init_bias
        self.readout_window = readout_window
        self.settle = settle
        self.seed = seed
        self.dt = dt
        self.config = config

    def _config(self) -> ExperimentConfig:
        return self.config if self.config is not None else ExperimentConfig()

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        X = _validate_images(X)
        cfg = self._config()
        self.classes_ = np.unique(y)
        n_lab = len(self.classes_)
        n_class_units = n_lab * self.units_per_class
        nv = X.shape[1] + n_class_units
        self.fit_ = network_matched_fit(cfg.neuron_config(), seed=self.seed,
                                        dt=self.dt, nu_bias=cfg.nu_bias)
        g = stream(self.seed, "misc", 6)
        rbm = RbmParams(g.normal(0.0, self.init_scale, (nv, self.n_hidden)),
                        np.full(nv, float(self.init_bias)),
                        np.full(self.n_hidden, float(self.init_bias)),
                        n_class_units)
        opts = EcdOptions(schedule=ModulationSchedule(cfg.T_half, cfg.tau_br),
                          stdp=StdpConfig(self.stdp_A, cfg.tau_stdp),
                          nu_bias=cfg.nu_bias, tau_syn=cfg.tau_syn)
        trainer = EventDrivenTrainer(rbm, self.fit_, cfg.neuron_config(), opts,
                                     self.seed, self.dt)
        class_of = {c: i for i, c in enumerate(self.classes_)}
        order = stream(self.seed, "misc", 7).integers(0, len(X),
                                                      self.n_presentations)
        counts_h_first = counts_h_last = None
        for k in range(self.n_presentations):
            r = order[k]
            probs = np.concatenate([
                binarize(X[r]),
                encode_label_groups(class_of[y[r]], n_lab, self.units_per_class)])
            _, ch = trainer.present(clamp_currents(probs, self.fit_))
            if k == 0:
                counts_h_first = ch
            counts_h_last = ch
        ep = opts.schedule.epoch
        self.hidden_rates_ = (counts_h_first.mean() / ep,
                              counts_h_last.mean() / ep)
        self.trainer_ = trainer
        self.rbm_ = trainer.rbm
        return self

    def predict(self, X):
        check_is_fitted(self, "trainer_")
        X = _validate_images(X)
        out = np.empty(len(X), dtype=self.classes_.dtype)
        for r in range(len(X)):
            pix_I = clamp_currents(binarize(X[r]), self.fit_)
            groups, _ = self.trainer_.rate_readout(
                pix_I, self.settle, self.readout_window,
                len(self.classes_), self.units_per_class)
            out[r] = self.classes_[int(np.argmax(groups))]
        return out

    def predict_free_energy(self, X):
        """Free-energy readout of the learned parameters (second method)."""
        check_is_fitted(self, "rbm_")
        from .evaluation import free_energy
        X = _validate_images(X)
        n_lab = len(self.classes_)
        out = np.empty(len(X), dtype=self.classes_.dtype)
        for r in range(len(X)):
            pix = binarize(X[r])
            cand = np.empty((n_lab, self.rbm_.n_visible))
            for c in range(n_lab):
                cand[c] = np.concatenate([
                    pix, encode_label_groups(c, n_lab, self.units_per_class)])
            out[r] = self.classes_[int(np.argmin(free_energy(self.rbm_, cand)))]
        return out

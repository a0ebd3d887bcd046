"""Restricted Boltzmann machine parameters in dimensionless units."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .sampling import BoltzmannParams


@dataclass
class RbmParams:
    """Bipartite weights W (n_v x n_h) and biases; n_class visible units are
    class-label units appended after the sensory ones."""

    W: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray
    n_class: int = 0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b_v = np.asarray(self.b_v, dtype=float)
        self.b_h = np.asarray(self.b_h, dtype=float)
        nv, nh = self.W.shape
        if self.b_v.shape != (nv,) or self.b_h.shape != (nh,):
            raise ValueError("bias shapes must match W")
        if not 0 <= self.n_class <= nv:
            raise ValueError("n_class out of range")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    @property
    def n_sensory(self) -> int:
        return self.n_visible - self.n_class

    def copy(self) -> "RbmParams":
        return RbmParams(self.W.copy(), self.b_v.copy(), self.b_h.copy(),
                         self.n_class)

    def to_boltzmann(self) -> BoltzmannParams:
        """Joint coupling matrix over [visible, hidden] units."""
        nv, nh = self.W.shape
        M = np.zeros((nv + nh, nv + nh))
        M[:nv, nv:] = self.W
        M[nv:, :nv] = self.W.T
        return BoltzmannParams(M, np.concatenate([self.b_v, self.b_h]))


def random_rbm(n_visible: int, n_hidden: int, seed: int,
               w_loc: float = -0.75, w_scale: float = 1.5,
               b_loc: float = -1.5, b_scale: float = 0.5,
               n_class: int = 0) -> RbmParams:
    """RBM with weight and bias draws of the sampling-validation experiments."""
    g = stream(seed, "misc", 1)
    W = g.normal(w_loc, w_scale, (n_visible, n_hidden))
    b_v = g.normal(b_loc, b_scale, n_visible)
    b_h = g.normal(b_loc, b_scale, n_hidden)
    return RbmParams(W, b_v, b_h, n_class)

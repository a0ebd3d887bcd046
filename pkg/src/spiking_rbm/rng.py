"""Counter-based random streams.

Every stochastic entity in a simulation (a neuron's membrane noise, its
within-step crossing test, a Poisson source, a Gibbs chain, ...) draws from
its own Philox stream keyed by (root seed, kind, index).  Streams are
mutually independent and stable: adding a probe neuron or an extra source
never shifts the draws of existing entities.
"""

from __future__ import annotations

import numpy as np

# stable numeric namespace per stream kind
_KINDS = {
    "membrane": 1,
    "bridge": 2,
    "source": 3,
    "gibbs": 4,
    "hazard": 5,
    "trial": 6,
    "misc": 7,
}


def stream(seed: int, kind: str, index: int = 0) -> np.random.Generator:
    """Return the Philox generator for stream (seed, kind, index)."""
    if kind not in _KINDS:
        raise ValueError(f"unknown stream kind {kind!r}")
    key = np.array(
        [np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF),
         (np.uint64(_KINDS[kind]) << np.uint64(48)) | np.uint64(index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def spawn_seed(seed: int, index: int) -> int:
    """Derive a child root seed (for independent trials run in parallel)."""
    g = stream(seed, "trial", index)
    return int(g.integers(0, 2**63 - 1))


class StreamBank:
    """Lazily created, cached per-entity streams for one simulation run.

    The bank hands out (kind, index) generators whose state persists across
    chunked kernel calls, so a simulation consumes each stream sequentially
    regardless of chunk size.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens: dict[tuple[str, int], np.random.Generator] = {}

    def get(self, kind: str, index: int) -> np.random.Generator:
        key = (kind, index)
        gen = self._gens.get(key)
        if gen is None:
            gen = stream(self.seed, kind, index)
            self._gens[key] = gen
        return gen

    def normals(self, kind: str, n_entities: int, n_steps: int) -> np.ndarray:
        out = np.empty((n_entities, n_steps))
        for i in range(n_entities):
            out[i] = self.get(kind, i).standard_normal(n_steps)
        return out

    def uniforms(self, kind: str, n_entities: int, n_steps: int) -> np.ndarray:
        out = np.empty((n_entities, n_steps))
        for i in range(n_entities):
            out[i] = self.get(kind, i).random(n_steps)
        return out

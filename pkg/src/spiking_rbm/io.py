"""Serialization: spike records, fits, parameter snapshots, CSV, PGM.

All text artifacts are byte-deterministic for a given config and seed; CSVs
open with `# key=value` comment lines carrying provenance (notably the
config hash).  Floats print with repr-roundtrip precision.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .calibration import SigmoidFit
from .neurons import SpikeRecord
from .rbm import RbmParams

SNAPSHOT_MAGIC = b"RBMSNAP1"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: str | Path, header: str, rows, meta: dict | None = None):
    with open(path, "w", newline="\n") as f:
        for k, v in (meta or {}).items():
            f.write(f"# {k}={v}\n")
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(fmt(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def spike_record_to_csv(record: SpikeRecord, path: str | Path,
                        meta: dict | None = None) -> None:
    write_csv(path, "neuron_id,time_s",
              ((int(i), float(t)) for i, t in zip(record.ids, record.times)),
              meta)


def spike_record_from_csv(path: str | Path, duration: float, dt: float,
                          n_neurons: int) -> SpikeRecord:
    ids, times = [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("neuron_id"):
                continue
            a, b = line.split(",")
            ids.append(int(a))
            times.append(float(b))
    return SpikeRecord(np.array(ids, dtype=np.uint32), np.array(times),
                       duration, dt, n_neurons)


_SPIKE_DTYPE = np.dtype([("id", "<u4"), ("t", "<f8")])


def spike_record_to_binary(record: SpikeRecord, path: str | Path) -> None:
    """Little-endian stream of (u32 neuron id, f64 seconds) pairs."""
    arr = np.empty(len(record), dtype=_SPIKE_DTYPE)
    arr["id"] = record.ids
    arr["t"] = record.times
    Path(path).write_bytes(arr.tobytes())


def spike_record_from_binary(path: str | Path, duration: float, dt: float,
                             n_neurons: int) -> SpikeRecord:
    arr = np.frombuffer(Path(path).read_bytes(), dtype=_SPIKE_DTYPE)
    return SpikeRecord(arr["id"].copy(), arr["t"].copy(), duration, dt,
                       n_neurons)


def save_fit(fit: SigmoidFit, path: str | Path, meta: dict | None = None) -> None:
    with open(path, "w", newline="\n") as f:
        for k, v in (meta or {}).items():
            f.write(f"# {k}={v}\n")
        f.write(f"beta={fmt(fit.beta)}\n")
        f.write(f"gamma={fmt(fit.gamma)}\n")
        f.write(f"tau_r={fmt(fit.tau_r)}\n")


def load_fit(path: str | Path) -> SigmoidFit:
    vals: dict[str, float] = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, v = line.split("=", 1)
            vals[k] = float(v)
    return SigmoidFit(vals["beta"], vals["gamma"], vals["tau_r"])


def save_snapshot(rbm: RbmParams, path: str | Path) -> None:
    """Flat binary: magic, u32 n_v/n_h/n_class, f64 W row-major, b_v, b_h."""
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<III", rbm.n_visible, rbm.n_hidden, rbm.n_class))
        f.write(rbm.W.astype("<f8").tobytes())
        f.write(rbm.b_v.astype("<f8").tobytes())
        f.write(rbm.b_h.astype("<f8").tobytes())


def load_snapshot(path: str | Path) -> RbmParams:
    data = Path(path).read_bytes()
    if data[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a parameter snapshot")
    nv, nh, nc = struct.unpack_from("<III", data, 8)
    off = 8 + 12
    W = np.frombuffer(data, dtype="<f8", count=nv * nh, offset=off).reshape(nv, nh)
    off += 8 * nv * nh
    b_v = np.frombuffer(data, dtype="<f8", count=nv, offset=off)
    off += 8 * nv
    b_h = np.frombuffer(data, dtype="<f8", count=nh, offset=off)
    return RbmParams(W.copy(), b_v.copy(), b_h.copy(), nc)


def write_pgm(path: str | Path, image: np.ndarray, max_value: float,
              meta: dict | None = None) -> None:
    """Plain (P2) PGM with a fixed physical scale: gray = 255 * value/max."""
    img = np.asarray(image, dtype=float)
    gray = np.clip(np.round(255.0 * img / max_value), 0, 255).astype(int)
    with open(path, "w", newline="\n") as f:
        f.write("P2\n")
        for k, v in (meta or {}).items():
            f.write(f"# {k}={v}\n")
        f.write(f"{img.shape[1]} {img.shape[0]}\n255\n")
        for row in gray:
            f.write(" ".join(str(v) for v in row) + "\n")


def config_hash(items: dict) -> str:
    canon = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]

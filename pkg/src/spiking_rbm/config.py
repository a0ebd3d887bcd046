"""Experiment configuration: plain-text key=value files plus CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .io import config_hash
from .neurons import NeuronConfig


@dataclass
class ExperimentConfig:
    """Every physical and protocol parameter, with published defaults."""

    dt: float = 1e-4                 # s
    seed: int = 0
    capacitance: float = 1e-12       # F
    g_leak: float = 1e-9             # S
    theta: float = 0.1               # V
    u_reset: float = 0.0             # V
    tau_r: float = 4e-3              # s
    tau_syn: float = 4e-3            # s
    sigma: float = 3e-11             # A sqrt(s)
    nu_bias: float = 1000.0          # Hz
    T_half: float = 0.05             # s, data phase length
    tau_br: float = 0.01             # s
    tau_stdp: float = 4e-3           # s
    stdp_A: float = 1.6e-4           # weight units / s
    cd_epsilon: float = 1e-3
    cd_minibatch: int = 100
    n_hidden: int = 500
    n_class_units: int = 40
    calibration_duration: float = 5.0  # s per grid point

    def __post_init__(self):
        for name in ("dt", "capacitance", "g_leak", "tau_syn", "nu_bias",
                     "T_half", "tau_stdp", "calibration_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau_r", "tau_br", "sigma", "stdp_A", "cd_epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.theta <= self.u_reset:
            raise ValueError("theta must exceed u_reset")

    def neuron_config(self) -> NeuronConfig:
        return NeuronConfig(self.capacitance, self.g_leak, self.theta,
                            self.u_reset, self.tau_r, self.sigma)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="\n") as f:
            for k, v in self.to_dict().items():
                f.write(f"{k}={v}\n")

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None
             ) -> "ExperimentConfig":
        known = {f.name: f.type for f in fields(cls)}
        raw: dict = {}
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{ln}: expected key=value")
                k, v = (s.strip() for s in line.split("=", 1))
                if k not in known:
                    raise ValueError(f"{path}:{ln}: unknown key {k!r}")
                raw[k] = v
        cfg = cls()
        merged = cfg.to_dict()
        for k, v in raw.items():
            merged[k] = _coerce(v, type(merged[k]))
        for k, v in (overrides or {}).items():
            if k not in merged:
                raise ValueError(f"unknown config key {k!r}")
            if v is not None:
                merged[k] = v
        return cls(**merged)


def _coerce(text: str, target: type):
    if target is int:
        return int(text)
    if target is float:
        return float(text)
    return text

"""Scenario and experiment configuration records.

Configuration files are TOML (JSON accepted when the file ends in ``.json``).
Only dimensions, choices and seeds live in a config; matrices never do.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class SystemConfig:
    """Global scenario: array sizes, RF chains, grids, SNR and Monte Carlo setup."""

    N_t: int = 64
    N_r: int = 16
    L_t: int = 8
    L_r: int = 4
    N_s: int = 4
    G_t: int = 64
    G_r: int = 64
    snr_db: float = 0.0
    sigma_n2: float = 1.0
    bandwidth_hz: float = 500e6
    trials: int = 100
    base_seed: int = 0

    def __post_init__(self):
        for name in ("N_t", "N_r", "L_t", "L_r", "N_s", "G_t", "G_r", "trials"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.N_s <= self.L_r <= self.N_r:
            raise ConfigError(f"need N_s <= L_r <= N_r, got {self.N_s}, {self.L_r}, {self.N_r}")
        if not self.N_s <= self.L_t <= self.N_t:
            raise ConfigError(f"need N_s <= L_t <= N_t, got {self.N_s}, {self.L_t}, {self.N_t}")
        if self.sigma_n2 < 0:
            raise ConfigError("sigma_n2 must be nonnegative")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must fit in an unsigned 64-bit integer")

    @property
    def snr(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def rho(self) -> float:
        """Received training power, rho = sigma_n^2 * SNR."""
        return self.sigma_n2 * self.snr

    def replace(self, **changes) -> "SystemConfig":
        d = asdict(self)
        d.update(changes)
        return SystemConfig(**d)


EXPERIMENT_KINDS = (
    "NmseVsSnr",
    "NmseVsTrainingSteps",
    "SeVsRfChains",
    "RateVsPower",
    "CoherenceVsM",
    "PowerTable",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to sweep and which methods to run.

    ``sweep`` holds the swept values: SNRs in dB, training steps, RF chain
    counts or measurement counts depending on ``kind``.
    """

    kind: str
    sweep: tuple = ()
    architectures: tuple = ("A1", "A2", "A3", "A4", "A5", "A6")
    methods: tuple = ("omp", "ls")
    n_clusters: int = 4
    n_rays: int = 1
    quantized: bool = True
    tx_arch: str = "A5"
    rx_arch: str = "A5"
    training: str = "random"  # random | greedy (CoherenceVsM)
    exhaustive_k: int = 4
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {EXPERIMENT_KINDS}")
        if self.kind != "PowerTable" and len(self.sweep) == 0:
            raise ConfigError("sweep must be nonempty")
        valid = {"A1", "A2", "A3", "A4", "A5", "A6"}
        bad = [a for a in (*self.architectures, self.tx_arch, self.rx_arch) if a not in valid]
        if bad:
            raise ConfigError(f"unknown architecture(s): {bad}")
        if self.n_clusters < 1 or self.n_rays < 1:
            raise ConfigError("n_clusters and n_rays must be positive")


def _coerce(cls, data: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    out = dict(data)
    for k, v in out.items():
        if isinstance(v, list):
            out[k] = tuple(v)
    return out


def load_config(path: str | Path) -> tuple[SystemConfig, ExperimentSpec | None]:
    """Read ``[system]`` and optional ``[experiment]`` tables from a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    try:
        system = SystemConfig(**_coerce(SystemConfig, raw.get("system", {})))
        exp_raw = raw.get("experiment")
        spec = ExperimentSpec(**_coerce(ExperimentSpec, exp_raw)) if exp_raw is not None else None
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return system, spec


def config_hash(config: SystemConfig, spec: ExperimentSpec | None = None) -> str:
    """Short stable digest of the configuration, used to tag result rows."""
    payload = {"system": asdict(config), "experiment": asdict(spec) if spec else None}
    blob = json.dumps(payload, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:16]

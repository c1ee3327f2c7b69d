"""Seeded Monte Carlo experiments producing CSV/JSON result tables.

Every trial draws its randomness from ``(base_seed, stream, trial, ...)``
so any single row can be replayed, and the same channel realizations are
shared across sweep points and methods.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .architectures import PowerModel, full_digital_power, receiver_power
from .channel import ArrayGeometry, ChannelParams, db, make_dictionary, nmse, sample_channel
from .combining import design_combiner, unconstrained_rate
from .config import ConfigError, ExperimentSpec, SystemConfig, config_hash
from .estimation import (
    LeastSquaresEstimator,
    exhaustive_search_estimate,
    exhaustive_search_plan,
    omp_estimate,
)
from .training import coherence_curve, ls_orthogonal_training, random_training, sensing_matrix, simulate_measurements

log = logging.getLogger(__name__)

THREADS_ENV = "HYBRIDBEAM_THREADS"

# seed streams
CHANNEL, TRAINING, NOISE = 0, 1, 2


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[dict]
    config: SystemConfig
    spec: ExperimentSpec | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "config": {"system": asdict(self.config), "experiment": asdict(self.spec) if self.spec else None},
            "git_describe": git_describe(),
            "rows": [{c: _jsonable(r.get(c)) for c in self.columns} for r in self.rows],
        }

    def column(self, name: str, **where) -> list:
        return [r[name] for r in self.rows if all(r.get(k) == v for k, v in where.items())]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def worker_count(threads: int | None = None) -> int:
    n = threads if threads is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def _map_trials(fn, n: int, threads: int | None):
    """Run ``fn(trial)`` for every trial; results come back in trial order."""
    workers = worker_count(threads)
    if workers == 1 or n == 1:
        return [fn(t) for t in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(v))
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return mean, se


# --------------------------------------------------------------------------
# channel estimation


class _Estimation:
    """Shared state for NMSE experiments: dictionaries and cached LS factorizations."""

    def __init__(self, config: SystemConfig, spec: ExperimentSpec):
        self.cfg = config
        self.spec = spec
        self.params = ChannelParams(spec.n_clusters, spec.n_rays, spec.quantized, config.G_t, config.G_r)
        self.params.validate(config.N_t, config.N_r)
        self.A_BSD = make_dictionary(ArrayGeometry(config.N_t), config.G_t)
        self.A_MSD = make_dictionary(ArrayGeometry(config.N_r), config.G_r)
        self._ls: dict[int, tuple] = {}
        self._exhaustive = None

    def channel(self, trial: int):
        return sample_channel(self.params, self.cfg, (self.cfg.base_seed, CHANNEL, trial))

    def ls_setup(self, steps: int):
        """LS plan and estimator for ``steps`` training steps, or None when rank deficient."""
        if steps not in self._ls:
            cfg = self.cfg
            m = steps * cfg.L_r
            n = cfg.N_t * cfg.N_r
            if m < n:
                self._ls[steps] = None
            else:
                if m % cfg.N_r:
                    raise ConfigError(f"LS needs L_r*steps = {m} to be a multiple of N_r = {cfg.N_r}")
                try:
                    plan = ls_orthogonal_training(
                        self.spec.rx_arch, cfg.N_t, cfg.N_r, m // cfg.N_r, cfg.N_r, cfg.L_r,
                        arch_tx=self.spec.tx_arch, L_t=cfg.L_t,
                    )
                except ValueError as exc:
                    raise ConfigError(f"LS training at {steps} steps: {exc}") from exc
                est = LeastSquaresEstimator(sensing_matrix(plan).Phi, cfg.N_r)
                self._ls[steps] = (plan, est)
        return self._ls[steps]

    def exhaustive_plan(self):
        if self._exhaustive is None:
            c = self.cfg
            self._exhaustive = exhaustive_search_plan(c.N_t, c.N_r, c.G_t, c.G_r, c.L_r)
        return self._exhaustive

    def steps_for(self, method: str, steps: int) -> tuple[float, int]:
        """(training steps, measurements) actually used by ``method``."""
        if method == "exhaustive":
            m = self.cfg.G_t * self.cfg.G_r
            return m / self.cfg.L_r, m
        return steps, steps * self.cfg.L_r

    def trial(self, method: str, snr_db: float, steps: int, trial: int, point: int) -> float:
        cfg = self.cfg
        rho = cfg.sigma_n2 * 10.0 ** (snr_db / 10.0)
        ch = self.channel(trial)
        noise_seed = (cfg.base_seed, NOISE, trial, point)
        if method == "omp":
            plan = random_training(
                self.spec.tx_arch, self.spec.rx_arch, "MC", steps, cfg.L_r,
                (cfg.base_seed, TRAINING, trial, steps), N_t=cfg.N_t, N_r=cfg.N_r, L_t=cfg.L_t,
            )
            sens = sensing_matrix(plan, sigma_n2=cfg.sigma_n2, dictionaries=(self.A_BSD, self.A_MSD))
            y, _ = simulate_measurements(ch.H, plan, rho, cfg.sigma_n2, noise_seed)
            H_hat = omp_estimate(sens, y, self.A_MSD, self.A_BSD, rho=rho).H_hat
        elif method == "ls":
            plan, est = self.ls_setup(steps)
            y, _ = simulate_measurements(ch.H, plan, rho, cfg.sigma_n2, noise_seed)
            H_hat = est(y, rho)
        elif method == "exhaustive":
            plan = self.exhaustive_plan()
            y, _ = simulate_measurements(ch.H, plan, rho, cfg.sigma_n2, noise_seed)
            H_hat = exhaustive_search_estimate(plan, y, self.spec.exhaustive_k, self.A_MSD, self.A_BSD, rho=rho).H_hat
        else:
            raise ConfigError(f"unknown estimation method {method!r}; choose omp, ls or exhaustive")
        return nmse(ch.H, H_hat)


NMSE_COLUMNS = [
    "method", "arch_tx", "arch_rx", "training_steps", "measurements",
    "nmse", "nmse_db", "nmse_stderr", "trials", "status", "seed", "config_hash",
]


def _nmse_rows(spec, config, points, threads) -> list[dict]:
    """``points`` is a list of (snr_db, steps)."""
    est = _Estimation(config, spec)
    chash = config_hash(config, spec)
    rows = []
    for p, (snr_db, steps) in enumerate(points):
        for method in spec.methods:
            n_steps, n_meas = est.steps_for(method, steps)
            row = {
                "snr_db": snr_db, "method": method, "arch_tx": spec.tx_arch, "arch_rx": spec.rx_arch,
                "training_steps": n_steps, "measurements": n_meas, "trials": config.trials,
                "seed": config.base_seed, "config_hash": chash,
            }
            if method == "ls" and est.ls_setup(steps) is None:
                log.info("LS skipped at %s steps: fewer than N_t*N_r measurements", steps)
                row.update(nmse=float("nan"), nmse_db=float("nan"), nmse_stderr=float("nan"), status="rank_deficient")
            else:
                vals = _map_trials(lambda t: est.trial(method, snr_db, steps, t, p), config.trials, threads)
                m, se = mean_stderr(vals)
                row.update(nmse=m, nmse_db=db(m), nmse_stderr=se, status="ok")
            rows.append(row)
    return rows


# --------------------------------------------------------------------------
# combining


def spectral_efficiency_samples(
    config: SystemConfig,
    spec: ExperimentSpec,
    l_values,
    threads: int | None = None,
) -> dict[tuple[str, int], np.ndarray]:
    """Per-trial spectral efficiency for each (architecture, L_r), N_s = L_r.

    The key ``("D", L_r)`` holds the unconstrained SVD combiner.
    """
    params = ChannelParams(spec.n_clusters, spec.n_rays, spec.quantized, config.G_t, config.G_r)
    params.validate(config.N_t, config.N_r)
    a3_cap = int(spec.extra.get("a3_max_antennas", config.N_r))
    for l_r in l_values:
        if not 1 <= l_r <= min(config.N_r, config.N_t):
            raise ConfigError(f"L_r = {l_r} must lie in [1, min(N_t, N_r)]")
    snr = config.snr

    def one(trial):
        H = sample_channel(params, config, (config.base_seed, CHANNEL, trial)).H
        out = {}
        for l_r in l_values:
            out[("D", l_r)] = unconstrained_rate(H, l_r, snr)
            for arch in spec.architectures:
                out[(arch, l_r)] = design_combiner(arch, H, l_r, l_r, snr, max_a3_antennas=a3_cap).mutual_info
        return out

    per_trial = _map_trials(one, config.trials, threads)
    return {k: np.array([t[k] for t in per_trial]) for k in per_trial[0]}


SE_COLUMNS = ["arch", "L_r", "N_s", "snr_db", "spectral_efficiency", "se_stderr", "trials", "seed", "config_hash"]
RATE_COLUMNS = [
    "arch", "L_r", "N_s", "snr_db", "power_mW", "spectral_efficiency", "se_stderr",
    "bit_rate_bps", "bit_rate_stderr", "trials", "seed", "config_hash",
]


def _se_rows(spec, config, threads, with_power: bool) -> list[dict]:
    l_values = [int(v) for v in spec.sweep]
    samples = spectral_efficiency_samples(config, spec, l_values, threads)
    model = PowerModel(**spec.extra.get("power_model", {}))
    chash = config_hash(config, spec)
    rows = []
    for arch in (*spec.architectures, "D"):
        for l_r in l_values:
            m, se = mean_stderr(samples[(arch, l_r)])
            row = {
                "arch": arch, "L_r": l_r, "N_s": l_r, "snr_db": config.snr_db,
                "spectral_efficiency": m, "se_stderr": se, "trials": config.trials,
                "seed": config.base_seed, "config_hash": chash,
            }
            if with_power:
                p = full_digital_power(config.N_r, model) if arch == "D" else receiver_power(arch, config.N_r, l_r, model)
                row.update(power_mW=p, bit_rate_bps=m * config.bandwidth_hz, bit_rate_stderr=se * config.bandwidth_hz)
            rows.append(row)
    return rows


# --------------------------------------------------------------------------


def run_experiment(spec: ExperimentSpec, config: SystemConfig, *, threads: int | None = None) -> ResultTable:
    """Run one experiment and return its averaged result table."""
    kind = spec.kind
    chash = config_hash(config, spec)
    if kind == "PowerTable":
        from .architectures import power_table

        l_values = [int(v) for v in spec.sweep] or list(range(1, config.N_r + 1))
        model = PowerModel(**spec.extra.get("power_model", {}))
        try:
            rows = power_table(config.N_r, l_values, model, spec.architectures)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for r in rows:
            r.update(seed=config.base_seed, config_hash=chash)
        return ResultTable(["arch", "N_r", "L_r", "power_mW", "eta", "seed", "config_hash"], rows, config, spec)

    if kind == "CoherenceVsM":
        l_r = int(spec.extra.get("L_r", config.L_r))
        try:
            rows = coherence_curve(
                [int(m) for m in spec.sweep], config.G_t, config.G_r,
                arch_tx=spec.tx_arch, arch_rx=spec.rx_arch, N_t=config.N_t, N_r=config.N_r,
                L_r=l_r, trials=config.trials, seed=config.base_seed, design=spec.training,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for r in rows:
            r.update(design=spec.training, arch_tx=spec.tx_arch, arch_rx=spec.rx_arch,
                     L_r=l_r, trials=config.trials, seed=config.base_seed, config_hash=chash)
        cols = ["M", "M_t", "M_r", "mu", "welch_bound", "sc_welch_bound", "design",
                "arch_tx", "arch_rx", "L_r", "trials", "seed", "config_hash"]
        return ResultTable(cols, rows, config, spec)

    if kind == "NmseVsSnr":
        steps = int(spec.extra.get("training_steps", 256))
        rows = _nmse_rows(spec, config, [(float(s), steps) for s in spec.sweep], threads)
        return ResultTable(["snr_db", *NMSE_COLUMNS], rows, config, spec)

    if kind == "NmseVsTrainingSteps":
        rows = _nmse_rows(spec, config, [(config.snr_db, int(s)) for s in spec.sweep], threads)
        return ResultTable(["snr_db", *NMSE_COLUMNS], rows, config, spec)

    if kind == "SeVsRfChains":
        return ResultTable(SE_COLUMNS, _se_rows(spec, config, threads, False), config, spec)

    if kind == "RateVsPower":
        return ResultTable(RATE_COLUMNS, _se_rows(spec, config, threads, True), config, spec)

    raise ConfigError(f"unknown experiment kind {kind!r}")

"""Clustered sparse mmWave channels and their beamspace representation.

Angular grids are uniform in spatial frequency ``sin(theta)`` over
``[-1, 1)``. With half-wavelength spacing and as many grid points as
antennas the dictionary is a (column-permuted, phase-rotated) unitary DFT.

Vectorization is column-major everywhere, so ``vec(H) = Psi @ x`` with
``Psi = conj(A_BSD) kron A_MSD`` and ``x = vec(H_v)``, ``H_v`` of shape
``(G_r, G_t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import SeedLike, crandn, make_rng, seed_to_json, unvec
from .config import SystemConfig


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array."""

    num_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) < 1:
            raise ValueError("num_elements must be >= 1")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be positive")


@dataclass(frozen=True)
class ChannelParams:
    n_clusters: int = 4
    n_rays: int = 1
    quantized: bool = True
    grid_tx: int = 64
    grid_rx: int = 64

    @property
    def n_paths(self) -> int:
        return self.n_clusters * self.n_rays

    def validate(self, n_t: int, n_r: int) -> None:
        if min(self.n_clusters, self.n_rays, self.grid_tx, self.grid_rx) < 1:
            raise ValueError("channel parameters must be positive")
        limit = min(self.grid_tx * self.grid_rx, n_t * n_r)
        if self.n_paths > limit:
            raise ValueError(f"K = {self.n_paths} paths exceeds min(G_t*G_r, N_t*N_r) = {limit}")


@dataclass(frozen=True)
class Path:
    gain: complex
    aoa: float
    aod: float


@dataclass(frozen=True)
class ChannelRealization:
    """One channel draw.

    ``x`` holds the beamspace coefficients: the planted on-grid gains for a
    quantized channel, the minimum-norm dictionary coefficients otherwise.
    """

    paths: tuple[Path, ...]
    H: np.ndarray
    x: np.ndarray
    params: ChannelParams
    seed: object = None
    grid_indices: tuple[tuple[int, int], ...] | None = field(default=None)

    def to_json(self) -> dict:
        return {
            "seed": seed_to_json(self.seed),
            "params": {
                "n_clusters": self.params.n_clusters,
                "n_rays": self.params.n_rays,
                "quantized": self.params.quantized,
                "grid_tx": self.params.grid_tx,
                "grid_rx": self.params.grid_rx,
            },
            "shape": list(self.H.shape),
            "paths": [
                {"gain": [p.gain.real, p.gain.imag], "aoa": p.aoa, "aod": p.aod}
                for p in self.paths
            ],
        }


def spatial_grid(grid_size: int) -> np.ndarray:
    """``grid_size`` spatial frequencies uniformly spaced on [-1, 1)."""
    return -1.0 + 2.0 * np.arange(grid_size) / grid_size


def grid_angles(grid_size: int) -> np.ndarray:
    """Physical angles (radians, in [-pi/2, pi/2)) of the dictionary grid."""
    return np.arcsin(spatial_grid(grid_size))


def _steering(geometry: ArrayGeometry, spatial_freq) -> np.ndarray:
    n = geometry.num_elements
    k = np.arange(n)[:, None]
    u = np.atleast_1d(np.asarray(spatial_freq, dtype=float))[None, :]
    return np.exp(2j * np.pi * geometry.spacing_wavelengths * k * u) / np.sqrt(n)


def array_response(geometry: ArrayGeometry, angle: float) -> np.ndarray:
    """Unit-norm ULA steering vector, ``exp(j 2 pi d k sin(angle)) / sqrt(N)``."""
    return _steering(geometry, np.sin(angle))[:, 0]


def make_dictionary(geometry: ArrayGeometry, grid_size: int) -> np.ndarray:
    """Steering vectors on the spatial-frequency grid, shape ``(N, G)``."""
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    return _steering(geometry, spatial_grid(grid_size))


def channel_dictionary(A_BSD: np.ndarray, A_MSD: np.ndarray) -> np.ndarray:
    """Beamspace dictionary ``conj(A_BSD) kron A_MSD``."""
    return np.kron(np.conj(A_BSD), A_MSD)


def atom_index(g_t: int, g_r: int, grid_rx: int) -> int:
    """Column of the channel dictionary for the grid pair (g_r, g_t)."""
    return g_t * grid_rx + g_r


def sample_channel(
    params: ChannelParams, config: SystemConfig, rng_seed: SeedLike = None
) -> ChannelRealization:
    """Draw a clustered channel normalized so that E||H||_F^2 = N_t N_r.

    Quantized channels place the K paths on distinct grid pairs (so ``x`` has
    exactly K nonzeros); unquantized ones draw AoA/AoD uniformly on [0, 2pi).
    """
    n_t, n_r = config.N_t, config.N_r
    params.validate(n_t, n_r)
    rng = make_rng(rng_seed)
    K = params.n_paths
    g_t, g_r = params.grid_tx, params.grid_rx
    scale = np.sqrt(n_t * n_r / K)
    gains = crandn(rng, K)
    a_bs_dict = make_dictionary(ArrayGeometry(n_t), g_t)
    a_ms_dict = make_dictionary(ArrayGeometry(n_r), g_r)

    if params.quantized:
        flat = rng.choice(g_t * g_r, size=K, replace=False)
        gt_idx, gr_idx = np.divmod(flat, g_r)
        x = np.zeros(g_t * g_r, dtype=complex)
        x[flat] = scale * gains
        Hv = unvec(x, g_r)
        H = a_ms_dict @ Hv @ a_bs_dict.conj().T
        aod = grid_angles(g_t)[gt_idx]
        aoa = grid_angles(g_r)[gr_idx]
        grid = tuple((int(r), int(t)) for r, t in zip(gr_idx, gt_idx))
    else:
        aoa = rng.uniform(0.0, 2 * np.pi, K)
        aod = rng.uniform(0.0, 2 * np.pi, K)
        a_ms = _steering(ArrayGeometry(n_r), np.sin(aoa))
        a_bs = _steering(ArrayGeometry(n_t), np.sin(aod))
        H = scale * (a_ms * gains) @ a_bs.conj().T
        Hv = np.linalg.pinv(a_ms_dict) @ H @ np.linalg.pinv(a_bs_dict).conj().T
        x = Hv.reshape(-1, order="F")
        grid = None

    paths = tuple(Path(complex(b), float(p), float(a)) for b, p, a in zip(gains, aoa, aod))
    return ChannelRealization(paths=paths, H=H, x=x, params=params, seed=rng_seed, grid_indices=grid)


def channel_from_paths(paths, n_t: int, n_r: int) -> np.ndarray:
    """Rebuild H from a path list (same normalization as :func:`sample_channel`)."""
    K = len(paths)
    aoa = np.array([p.aoa for p in paths])
    aod = np.array([p.aod for p in paths])
    gains = np.array([p.gain for p in paths])
    a_ms = _steering(ArrayGeometry(n_r), np.sin(aoa))
    a_bs = _steering(ArrayGeometry(n_t), np.sin(aod))
    return np.sqrt(n_t * n_r / K) * (a_ms * gains) @ a_bs.conj().T


def nmse(H_true: np.ndarray, H_est: np.ndarray) -> float:
    H_true = np.asarray(H_true)
    H_est = np.asarray(H_est)
    if H_true.shape != H_est.shape:
        raise ValueError(f"shape mismatch: {H_true.shape} vs {H_est.shape}")
    ref = np.linalg.norm(H_true) ** 2
    if ref == 0:
        raise ValueError("reference channel is all zeros")
    return float(np.linalg.norm(H_true - H_est) ** 2 / ref)


def db(x) -> float:
    return float(10.0 * np.log10(x))

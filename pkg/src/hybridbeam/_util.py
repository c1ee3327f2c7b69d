"""Small shared helpers: seeding and complex-matrix (de)serialization."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

SeedLike = int | Sequence[int] | np.random.SeedSequence | np.random.Generator | None


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Return a Generator for ``seed``.

    A tuple such as ``(base_seed, trial_index)`` is mixed through a
    SeedSequence so that per-trial streams are independent.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng(int(seed))
    return np.random.default_rng(np.random.SeedSequence([int(s) for s in seed]))


def seed_to_json(seed: SeedLike) -> Any:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if seed is None or isinstance(seed, (np.random.Generator, np.random.SeedSequence)):
        return None
    return [int(s) for s in seed]


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples, CN(0, 1)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def cmat_to_json(a: np.ndarray) -> list:
    """Encode a complex array as nested lists of ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def cmat_from_json(obj: list) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, n_rows: int) -> np.ndarray:
    v = np.asarray(v)
    return v.reshape(n_rows, -1, order="F")

"""Analog receiver architectures A1-A6 and the receiver power model.

A1  phase shifters, every RF chain sees every antenna
A2  phase shifters, each RF chain wired to one contiguous antenna subset
A3  switches with analog combining, any antenna subset per RF chain
A4  switches with analog combining inside each RF chain's subset
A5  antenna selection, one antenna per RF chain
A6  antenna selection, one antenna from each RF chain's subset
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import SeedLike, make_rng

KINDS = ("A1", "A2", "A3", "A4", "A5", "A6")
PHASE_SHIFTER = frozenset({"A1", "A2"})
SUBSET = frozenset({"A2", "A4", "A6"})
SELECTION = frozenset({"A5", "A6"})

UNIT_MODULUS_TOL = 1e-9


@dataclass(frozen=True)
class Architecture:
    """Tagged architecture choice.

    ``n_active`` is the number of closed switches per RF chain for A3
    (N_A3) and A4 (N_A4); ``None`` selects the half-active default used
    for the power comparison.
    """

    kind: str
    n_active: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown architecture {self.kind!r}")
        if self.n_active is not None and self.kind not in ("A3", "A4"):
            raise ValueError("n_active only applies to A3 and A4")
        if self.n_active is not None and self.n_active < 1:
            raise ValueError("n_active must be >= 1")

    @property
    def uses_subsets(self) -> bool:
        return self.kind in SUBSET

    def active_switches(self, n_r: int, l_r: int) -> int:
        """N_A3 or N_A4, defaulting to half of the available switches."""
        if self.kind == "A3":
            n = self.n_active if self.n_active is not None else _half(n_r)
            if not 1 <= n <= n_r:
                raise ValueError(f"N_A3 must lie in [1, {n_r}]")
            return n
        if self.kind == "A4":
            m_sub = max(len(b) for b in subset_blocks(n_r, l_r))
            n = self.n_active if self.n_active is not None else _half(n_r / l_r)
            if not 1 <= n <= m_sub:
                raise ValueError(f"N_A4 must lie in [1, {m_sub}]")
            return n
        raise ValueError("active_switches applies to A3/A4 only")

    def __str__(self) -> str:
        return self.kind


def as_arch(arch) -> Architecture:
    return arch if isinstance(arch, Architecture) else Architecture(str(arch))


def _half(x: float) -> int:
    # round half up, at least one switch
    return max(1, int(math.floor(x / 2.0 + 0.5)))


def subset_blocks(n_r: int, n_subsets: int) -> list[np.ndarray]:
    """Contiguous antenna subsets, one per RF chain.

    Sizes are ``n_r / n_subsets`` when divisible and differ by at most one
    otherwise (larger blocks first).
    """
    if not 1 <= n_subsets <= n_r:
        raise ValueError(f"need 1 <= number of subsets ({n_subsets}) <= N_r ({n_r})")
    return [np.asarray(b) for b in np.array_split(np.arange(n_r), n_subsets)]


def column_subsets(n_cols: int, n_subsets: int) -> np.ndarray:
    """Subset index of each column of an ``N_r x n_cols`` combiner matrix.

    Columns are grouped in contiguous runs of ``n_cols / n_subsets``; for a
    W_RF (``n_cols == n_subsets``) column ``l`` belongs to subset ``l``.
    """
    if n_cols % n_subsets:
        raise ValueError(f"{n_cols} columns cannot be split evenly over {n_subsets} subsets")
    return np.arange(n_cols) // (n_cols // n_subsets)


def is_feasible(
    W_RF: np.ndarray,
    arch,
    tol: float = UNIT_MODULUS_TOL,
    *,
    n_subsets: int | None = None,
    row_constraint: bool = True,
) -> bool:
    """Whether every column of ``W_RF`` lies in the architecture's feasible set.

    Parameters
    ----------
    W_RF : ndarray, shape (N_r, C)
    arch : Architecture or str
    tol : float
        Tolerance on unit modulus (A1/A2). Binary entries must be exact.
    n_subsets : int, optional
        Number of antenna subsets for A2/A4/A6; defaults to ``C``.
    row_constraint : bool
        Enforce the A5 rule that an antenna feeds at most one RF chain.
        Disable it when the columns are a training sequence over time rather
        than simultaneous RF chains.
    """
    arch = as_arch(arch)
    W = np.asarray(W_RF)
    if W.ndim != 2:
        raise ValueError(f"W_RF must be a matrix, got shape {W.shape}")
    n_r, n_cols = W.shape
    if n_cols == 0 or n_r == 0:
        raise ValueError("W_RF must have at least one row and one column")
    kind = arch.kind

    def unit(a):
        return bool(np.all(np.abs(np.abs(a) - 1.0) <= tol))

    def binary(a):
        return bool(np.all((a == 0) | (a == 1)))

    if kind == "A1":
        return unit(W)
    if kind == "A3":
        return binary(W)
    if kind == "A5":
        if not binary(W) or not np.all(np.count_nonzero(W, axis=0) == 1):
            return False
        return not row_constraint or bool(np.all(np.count_nonzero(W, axis=1) <= 1))

    n_sub = n_cols if n_subsets is None else n_subsets
    if not 1 <= n_sub <= n_r or n_cols % n_sub:
        return False
    blocks = subset_blocks(n_r, n_sub)
    owners = column_subsets(n_cols, n_sub)
    for j in range(n_cols):
        col = W[:, j]
        inside = np.zeros(n_r, dtype=bool)
        inside[blocks[owners[j]]] = True
        if np.any(col[~inside] != 0):
            return False
        part = col[inside]
        if kind == "A2" and not unit(part):
            return False
        if kind == "A4" and not binary(part):
            return False
        if kind == "A6" and not (binary(part) and np.count_nonzero(part) == 1):
            return False
    return True


def random_combiner(arch, n_r: int, l_r: int, seed: SeedLike = None) -> np.ndarray:
    """A random feasible ``N_r x L_r`` analog combiner (used for property tests)."""
    arch = as_arch(arch)
    rng = make_rng(seed)
    kind = arch.kind
    if kind == "A1":
        return np.exp(2j * np.pi * rng.random((n_r, l_r)))
    if kind == "A3":
        return rng.integers(0, 2, (n_r, l_r)).astype(float)
    if kind == "A5":
        W = np.zeros((n_r, l_r))
        W[rng.choice(n_r, l_r, replace=False), np.arange(l_r)] = 1.0
        return W
    W = np.zeros((n_r, l_r), dtype=complex if kind == "A2" else float)
    for l, block in enumerate(subset_blocks(n_r, l_r)):
        if kind == "A2":
            W[block, l] = np.exp(2j * np.pi * rng.random(len(block)))
        elif kind == "A4":
            W[block, l] = rng.integers(0, 2, len(block))
        else:
            W[rng.choice(block), l] = 1.0
    return W


@dataclass(frozen=True)
class PowerModel:
    """Component power figures in milliwatts."""

    p_lna: float = 20.0
    p_adc: float = 200.0
    p_rfc: float = 40.0
    p_bb: float = 200.0
    p_ps: float = 30.0
    p_sw: float = 5.0

    def __post_init__(self):
        for name in ("p_lna", "p_adc", "p_rfc", "p_bb", "p_ps", "p_sw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_reference(cls, p_ref: float = 20.0) -> "PowerModel":
        """Component values expressed as multiples of one reference power."""
        return cls(
            p_lna=p_ref,
            p_adc=10 * p_ref,
            p_rfc=2 * p_ref,
            p_bb=10 * p_ref,
            p_ps=1.5 * p_ref,
            p_sw=0.25 * p_ref,
        )


def receiver_power(arch, n_r: int, l_r: int, model: PowerModel = PowerModel()) -> float:
    """Receiver front-end power in mW for the given architecture."""
    arch = as_arch(arch)
    m = model
    chains = l_r * (m.p_rfc + m.p_adc) + m.p_bb
    kind = arch.kind
    if kind == "A1":
        return n_r * (l_r + 1) * m.p_lna + n_r * l_r * m.p_ps + chains
    if kind == "A2":
        return n_r * m.p_lna + n_r * m.p_ps + chains
    if kind == "A3":
        n_a3 = arch.active_switches(n_r, l_r)
        return (n_r + l_r * n_a3) * m.p_lna + l_r * n_a3 * m.p_sw + chains
    if kind == "A4":
        n_a4 = arch.active_switches(n_r, l_r)
        return l_r * n_a4 * (m.p_lna + m.p_sw) + chains
    # A5 and A6 share one formula
    return l_r * (m.p_lna + m.p_sw) + chains


def full_digital_power(n_r: int, model: PowerModel = PowerModel()) -> float:
    """One RF chain and ADC per antenna."""
    return n_r * (model.p_lna + model.p_rfc + model.p_adc) + model.p_bb


def power_reduction(arch, n_r: int, l_r: int, model: PowerModel = PowerModel()) -> float:
    """Ratio of the architecture's power to the fully digital receiver's."""
    return receiver_power(arch, n_r, l_r, model) / full_digital_power(n_r, model)


def bit_rate(spectral_efficiency: float, bandwidth: float) -> float:
    """Bits per second from bits/s/Hz."""
    return spectral_efficiency * bandwidth


def power_table(n_r: int, l_values, model: PowerModel = PowerModel(), kinds=KINDS) -> list[dict]:
    """Rows ``(arch, N_r, L_r, power_mW, eta)`` plus the fully digital reference."""
    rows = [
        {
            "arch": "D",
            "N_r": n_r,
            "L_r": n_r,
            "power_mW": full_digital_power(n_r, model),
            "eta": 1.0,
        }
    ]
    for kind in kinds:
        for l_r in l_values:
            p = receiver_power(kind, n_r, l_r, model)
            rows.append(
                {
                    "arch": kind,
                    "N_r": n_r,
                    "L_r": l_r,
                    "power_mW": p,
                    "eta": p / full_digital_power(n_r, model),
                }
            )
    return rows

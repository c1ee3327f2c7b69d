"""Training sequences, sensing matrices and coherence analysis.

Two measurement structures are supported:

``SC`` (single combiner)
    one receive sequence ``Q`` (N_r x M_r) reused for every precoder, so
    ``Phi = P^T kron Q^H`` and coherence factorizes over the two sides.
``MC`` (multiple combiners)
    a fresh ``N_r x L_r`` combiner block ``Q_n`` per precoder ``p_n``;
    ``Phi`` stacks ``p_n^T kron Q_n^H``.

Measurement ``m_t * M_r + m_r`` (SC) or ``n * L_r + l`` (MC) pairs precoder
``m_t``/``n`` with combiner column ``m_r``/``l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from ._util import SeedLike, cmat_to_json, crandn, make_rng, seed_to_json, vec
from .architectures import Architecture, as_arch, column_subsets, is_feasible, subset_blocks

QPSK = np.array([1.0, 1j, -1.0, -1j])


@dataclass
class TrainingPlan:
    mode: str  # "SC" or "MC"
    P: np.ndarray
    Q_blocks: np.ndarray | list
    total_power: float
    combiner_gain: float
    arch_tx: Architecture
    arch_rx: Architecture
    L_r: int = 1
    L_t: int = 1
    seed: object = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("SC", "MC"):
            raise ValueError("mode must be 'SC' or 'MC'")
        if self.mode == "MC" and len(self.Q_blocks) != self.P.shape[1]:
            raise ValueError("MC plans need one combiner block per precoder")

    @property
    def N_t(self) -> int:
        return self.P.shape[0]

    @property
    def N_r(self) -> int:
        q = self.Q_blocks if self.mode == "SC" else self.Q_blocks[0]
        return q.shape[0]

    @property
    def M_t(self) -> int:
        return self.P.shape[1]

    @property
    def n_measurements(self) -> int:
        if self.mode == "SC":
            return self.M_t * self.Q_blocks.shape[1]
        return sum(q.shape[1] for q in self.Q_blocks)

    @property
    def training_steps(self) -> float:
        """Snapshots needed when L_r combiners are applied simultaneously."""
        if self.mode == "MC":
            return self.M_t
        return self.n_measurements / self.L_r

    def combiner_columns(self) -> np.ndarray:
        if self.mode == "SC":
            return self.Q_blocks
        return np.hstack(self.Q_blocks)

    def is_feasible(self) -> bool:
        """Check precoder and combiner columns against their architectures."""
        P = self.P
        peak = np.max(np.abs(P), axis=0)
        if np.any(peak == 0):
            return False
        if self.arch_tx.kind in ("A1", "A2"):
            P_norm = P / peak
        else:
            P_norm = np.where(np.abs(P) > 0, 1.0, 0.0)
            if not np.allclose(np.abs(P), np.abs(P_norm) * peak):
                return False
        if not _precoders_feasible(P_norm, self.arch_tx, self.L_t):
            return False
        if self.mode == "SC":
            rx_sub = self.L_r if self.arch_rx.uses_subsets else None
            return is_feasible(
                self.Q_blocks, self.arch_rx,
                n_subsets=_subsets_for(self.Q_blocks.shape[1], rx_sub),
                row_constraint=False,
            )
        return all(is_feasible(q, self.arch_rx) for q in self.Q_blocks)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "P": cmat_to_json(self.P),
            "Q": cmat_to_json(self.Q_blocks) if self.mode == "SC" else [cmat_to_json(q) for q in self.Q_blocks],
            "total_power": self.total_power,
            "combiner_gain": self.combiner_gain,
            "seed": seed_to_json(self.seed),
            "constraints": {
                "arch_tx": self.arch_tx.kind,
                "arch_rx": self.arch_rx.kind,
                "L_t": self.L_t,
                "L_r": self.L_r,
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "TrainingPlan":
        from ._util import cmat_from_json

        c = d["constraints"]
        Q = cmat_from_json(d["Q"]) if d["mode"] == "SC" else [cmat_from_json(q) for q in d["Q"]]
        return cls(
            mode=d["mode"],
            P=cmat_from_json(d["P"]),
            Q_blocks=Q,
            total_power=d["total_power"],
            combiner_gain=d["combiner_gain"],
            arch_tx=Architecture(c["arch_tx"]),
            arch_rx=Architecture(c["arch_rx"]),
            L_r=c["L_r"],
            L_t=c["L_t"],
            seed=d.get("seed"),
        )


_FREE_FORM = {"A2": "A1", "A4": "A3", "A6": "A5"}


def _precoders_feasible(P_norm: np.ndarray, arch: Architecture, l_t: int) -> bool:
    """Precoder ``n`` of a subset architecture serves subset ``n mod L_t``."""
    if not arch.uses_subsets:
        return is_feasible(P_norm, arch, row_constraint=False)
    n_t, m_t = P_norm.shape
    inner = _FREE_FORM[arch.kind]
    for s, block in enumerate(subset_blocks(n_t, l_t)):
        cols = P_norm[:, s::l_t]
        if cols.shape[1] == 0:
            continue
        outside = np.ones(n_t, dtype=bool)
        outside[block] = False
        if np.any(cols[outside] != 0):
            return False
        if not is_feasible(cols[block], inner, row_constraint=False):
            return False
    return True


def _subsets_for(n_cols: int, n_sub: int | None) -> int | None:
    # SC receive sequences group columns into contiguous runs per subset
    if n_sub is None:
        return None
    return n_sub if n_cols % n_sub == 0 else None


@dataclass
class SensingSystem:
    Phi: np.ndarray
    A: np.ndarray | None
    noise_cov: np.ndarray
    snapshot_sizes: tuple = ()

    @property
    def n_measurements(self) -> int:
        return self.Phi.shape[0]


# --------------------------------------------------------------------------
# coherence and bounds


def mutual_coherence(A: np.ndarray, chunk: int = 1024) -> float:
    """Largest normalized inner product between two distinct columns."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[1] < 2:
        raise ValueError("need a matrix with at least two columns")
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise ValueError("matrix has a zero column")
    An = A / norms
    n = An.shape[1]
    best = 0.0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        G = np.abs(An[:, start:stop].conj().T @ An)
        G[np.arange(stop - start), np.arange(start, stop)] = 0.0
        best = max(best, float(G.max()))
    return min(best, 1.0)


def welch_bound(M: int, N: int) -> float:
    """Lower bound on the coherence of any M x N matrix (M <= N)."""
    if N < 2 or not 1 <= M <= N:
        raise ValueError(f"Welch bound needs 1 <= M <= N and N >= 2, got M={M}, N={N}")
    return math.sqrt((N - M) / (M * (N - 1)))


def min_measurements_for_K(K: int, N: int) -> int:
    """Smallest M whose Welch bound admits the coherence recovery condition for K-sparse vectors."""
    if K < 1:
        raise ValueError("K must be >= 1")
    target = 1.0 / (2 * K - 1)
    for M in range(1, N + 1):
        if welch_bound(M, N) < target:
            return M
    return N


def optimal_split_real(M: float, G_t: int, G_r: int) -> float:
    """Real M_t that equalizes the Welch bounds of both Kronecker factors."""
    disc = (
        4 * M * G_r**2 * G_t**2
        + M**2 * G_r**2
        - 2 * M**2 * G_r * G_t
        + M**2 * G_t**2
        - 4 * M * G_r**2 * G_t
        - 4 * M * G_r * G_t**2
        + 4 * M * G_r * G_t
    )
    return -0.5 * (M * G_r - G_t * M - math.sqrt(disc)) / (G_r * (G_t - 1))


def sc_welch_bound(M_t: int, M_r: int, G_t: int, G_r: int) -> float:
    """Welch bound of ``(P^T A_BSD*) kron (Q^H A_MSD)``: the larger factor bound."""
    return max(welch_bound(M_t, G_t), welch_bound(M_r, G_r))


@dataclass(frozen=True)
class Split:
    M_t: int
    M_r: int
    real_M_t: float
    real_M_r: float
    bound: float
    degenerate: bool = False


def optimal_split(M: int, G_t: int, G_r: int) -> Split:
    """Best integer factor pair ``M = M_t * M_r`` under the single-combiner Welch bound."""
    if M < 1:
        raise ValueError("M must be >= 1")
    real_t = optimal_split_real(M, G_t, G_r) if G_t > 1 and G_r > 1 else float("nan")
    best = None
    for m_t in range(1, M + 1):
        if M % m_t:
            continue
        m_r = M // m_t
        if m_t > G_t or m_r > G_r:
            continue
        b = sc_welch_bound(m_t, m_r, G_t, G_r)
        if best is None or b < best[0] - 1e-15:
            best = (b, m_t, m_r)
    if best is None:
        return Split(1, M, real_t, M / real_t if real_t else float("nan"), float("nan"), degenerate=True)
    b, m_t, m_r = best
    return Split(m_t, m_r, real_t, M / real_t, b)


def sc_welch_curve_value(M: int, G_t: int, G_r: int) -> float:
    s = optimal_split(M, G_t, G_r)
    return s.bound


# --------------------------------------------------------------------------
# plan construction helpers


def _scale_precoders(P: np.ndarray, total_power: float) -> np.ndarray:
    norms = np.linalg.norm(P, axis=0)
    return P * (math.sqrt(total_power / P.shape[1]) / norms)


def _random_column(kind: str, n: int, support: np.ndarray | None, rng) -> np.ndarray:
    idx = np.arange(n) if support is None else support
    col = np.zeros(n, dtype=complex)
    if kind in ("A1", "A2"):
        col[idx] = QPSK[rng.integers(0, 4, len(idx))]
    elif kind in ("A3", "A4"):
        bits = np.zeros(len(idx))
        while not bits.any():
            bits = rng.integers(0, 2, len(idx)).astype(float)
        col[idx] = bits
    else:  # A5, A6
        col[rng.choice(idx)] = 1.0
    return col


def _random_block(arch: Architecture, n: int, n_cols: int, n_subsets: int, rng, simultaneous: bool) -> np.ndarray:
    kind = arch.kind
    if kind == "A5" and simultaneous:
        if n_cols > n:
            raise ValueError(f"cannot select {n_cols} distinct antennas out of {n}")
        W = np.zeros((n, n_cols), dtype=complex)
        W[rng.choice(n, n_cols, replace=False), np.arange(n_cols)] = 1.0
        return W
    if arch.uses_subsets:
        blocks = subset_blocks(n, n_subsets)
        owners = column_subsets(n_cols, n_subsets)
        cols = [_random_column(kind, n, blocks[owners[j]], rng) for j in range(n_cols)]
    else:
        cols = [_random_column(kind, n, None, rng) for _ in range(n_cols)]
    return np.column_stack(cols)


def _tx_sequence(arch: Architecture, n_t: int, m_t: int, l_t: int, rng) -> np.ndarray:
    if arch.uses_subsets:
        blocks = subset_blocks(n_t, l_t)
        cols = [_random_column(arch.kind, n_t, blocks[j % l_t], rng) for j in range(m_t)]
        return np.column_stack(cols)
    return np.column_stack([_random_column(arch.kind, n_t, None, rng) for _ in range(m_t)])


def random_training(
    arch_tx,
    arch_rx,
    mode: str,
    M_t: int,
    M_r_or_Lr: int,
    seed: SeedLike = None,
    *,
    N_t: int,
    N_r: int,
    L_r: int | None = None,
    L_t: int = 1,
    total_power: float | None = None,
) -> TrainingPlan:
    """Pseudorandom training sequences respecting each side's hardware.

    Phase-shifter columns take i.i.d. values in {+-1, +-j}; switch-selection
    columns hold a single randomly placed one; A3/A4 columns are i.i.d.
    Bernoulli(1/2) (all-zero columns redrawn). Subset architectures restrict
    each column to its subset.

    For ``mode="MC"`` the second count is ``L_r``; for ``"SC"`` it is
    ``M_r`` and ``L_r`` (default 1) only sets the training-step accounting
    and the subset layout.
    """
    arch_tx, arch_rx = as_arch(arch_tx), as_arch(arch_rx)
    rng = make_rng(seed)
    mode = mode.upper()
    if M_t < 1 or M_r_or_Lr < 1:
        raise ValueError("training dimensions must be positive")
    if total_power is None:
        total_power = float(M_t)
    P = _scale_precoders(_tx_sequence(arch_tx, N_t, M_t, L_t, rng), total_power)
    if mode == "MC":
        l_r = M_r_or_Lr
        if l_r > N_r:
            raise ValueError(f"L_r={l_r} exceeds N_r={N_r}")
        Q = [_random_block(arch_rx, N_r, l_r, l_r, rng, simultaneous=True) for _ in range(M_t)]
        gain = float(np.mean([np.mean(np.sum(np.abs(q) ** 2, axis=0)) for q in Q]))
        return TrainingPlan("MC", P, Q, total_power, gain, arch_tx, arch_rx, l_r, L_t, seed)
    if mode != "SC":
        raise ValueError("mode must be 'SC' or 'MC'")
    m_r = M_r_or_Lr
    l_r = 1 if L_r is None else L_r
    n_sub = l_r if arch_rx.uses_subsets else 1
    if arch_rx.uses_subsets and m_r % n_sub:
        raise ValueError(f"M_r={m_r} must be a multiple of L_r={n_sub} for subset architectures")
    Q = _random_block(arch_rx, N_r, m_r, n_sub, rng, simultaneous=False)
    gain = float(np.mean(np.sum(np.abs(Q) ** 2, axis=0)))
    return TrainingPlan("SC", P, Q, total_power, gain, arch_tx, arch_rx, l_r, L_t, seed)


def _orthogonal_sequence(kind: str, n: int, m: int, n_sub: int) -> np.ndarray:
    """``n x m`` feasible sequence with orthogonal, equal-norm rows."""
    if m < n:
        raise ValueError(f"need at least {n} training vectors, got {m}")
    if kind == "A1":
        k = np.arange(n)[:, None]
        j = np.arange(m)[None, :]
        return np.exp(-2j * np.pi * k * j / m)
    if kind in ("A3", "A5"):
        if m % n:
            raise ValueError(f"sequence length {m} must be a multiple of {n} for {kind}")
        return np.tile(np.eye(n, dtype=complex), (1, m // n))
    # subset architectures: block diagonal over contiguous subsets
    if m % n_sub:
        raise ValueError(f"sequence length {m} must be a multiple of the subset count {n_sub}")
    per = m // n_sub
    blocks = subset_blocks(n, n_sub)
    out = []
    for b in blocks:
        size = len(b)
        if per < size:
            raise ValueError(f"{per} vectors per subset cannot cover a subset of {size} antennas")
        if kind == "A2":
            k = np.arange(size)[:, None]
            j = np.arange(per)[None, :]
            out.append(np.exp(-2j * np.pi * k * j / per))
        else:
            if per % size:
                raise ValueError(f"{per} vectors per subset must be a multiple of the subset size {size}")
            out.append(np.tile(np.eye(size), (1, per // size)))
    return block_diag(*out).astype(complex)


def ls_orthogonal_training(
    arch_rx,
    N_t: int,
    N_r: int,
    M_t: int,
    M_r: int,
    L_r: int = 1,
    *,
    arch_tx=None,
    L_t: int | None = None,
    total_power: float | None = None,
) -> TrainingPlan:
    """Single-combiner plan with ``P P^H`` and ``Q Q^H`` proportional to identity.

    Such plans make ``Phi^H Phi`` a scaled identity, the optimality
    condition for least-squares estimation.
    """
    arch_rx = as_arch(arch_rx)
    arch_tx = arch_rx if arch_tx is None else as_arch(arch_tx)
    if L_t is None:
        L_t = L_r
    if total_power is None:
        total_power = float(M_t)
    n_sub_rx = L_r if arch_rx.uses_subsets else 1
    n_sub_tx = L_t if arch_tx.uses_subsets else 1
    Q = _orthogonal_sequence(arch_rx.kind, N_r, M_r, n_sub_rx)
    P = _orthogonal_sequence(arch_tx.kind, N_t, M_t, n_sub_tx)
    if n_sub_tx > 1:
        # interleave so that precoder n serves subset n mod L_t
        per = M_t // n_sub_tx
        n = np.arange(M_t)
        P = P[:, (n % n_sub_tx) * per + n // n_sub_tx]
    P = _scale_precoders(P, total_power)
    gain = float(np.mean(np.sum(np.abs(Q) ** 2, axis=0)))
    return TrainingPlan("SC", P, Q, total_power, gain, arch_tx, arch_rx, L_r, L_t, info={"design": "ls-orthogonal"})


# --------------------------------------------------------------------------
# greedy deterministic design for switch selection on both sides


class _SelectionSpectrum:
    """Coherence of a two-sided antenna-selection sensing matrix via a 2-D DFT.

    With selection training the normalized Gram entry between atoms
    (g_t, g_r) and (g_t', g_r') depends only on the grid offsets, and equals
    the 2-D DFT of the (s, r) selection-count pattern divided by M.
    """

    def __init__(self, n_t, n_r, g_t, g_r):
        self.g_t, self.g_r = g_t, g_r
        self.Et = np.exp(-2j * np.pi * np.outer(np.arange(n_t), np.arange(g_t)) / g_t)
        self.Er = np.exp(-2j * np.pi * np.outer(np.arange(n_r), np.arange(g_r)) / g_r)
        mask = np.ones((g_t, g_r), dtype=bool)
        mask[0, 0] = False
        self.mask = mask

    def spectrum(self, tx, rx_blocks) -> np.ndarray:
        F = np.zeros((self.g_t, self.g_r), dtype=complex)
        for s, rows in zip(tx, rx_blocks):
            F += np.outer(self.Et[s], self.Er[rows].sum(axis=0))
        return F

    def coherence(self, F, m) -> np.ndarray:
        """Coherence for one spectrum or a stack of candidate spectra."""
        mag = np.abs(F)
        return mag[..., self.mask].max(axis=-1) / m

    def scores(self, F, m) -> tuple[np.ndarray, np.ndarray]:
        """(coherence, sidelobe energy) for candidate spectra; the second breaks ties."""
        mag = np.abs(F)[..., self.mask] / m
        return mag.max(axis=-1), np.sum(mag**4, axis=-1)


def _pick(mu: np.ndarray, energy: np.ndarray) -> int:
    """Index minimizing (coherence, energy) lexicographically; lowest index on exact ties."""
    mu = np.round(mu.ravel(), 12)
    best = mu == mu.min()
    e = np.where(best, energy.ravel(), np.inf)
    return int(np.argmin(e))


def selection_coherence(tx, rx_blocks, n_t, n_r, g_t, g_r) -> float:
    """Coherence of ``A`` for selection training, computed in the offset domain."""
    spec = _SelectionSpectrum(n_t, n_r, g_t, g_r)
    m = sum(len(r) for r in rx_blocks)
    if g_t * g_r < 2:
        raise ValueError("need at least two atoms")
    return float(min(spec.coherence(spec.spectrum(tx, rx_blocks), m), 1.0))


def greedy_training(
    M_t: int,
    M_r: int,
    G_t: int,
    G_r: int,
    *,
    N_t: int | None = None,
    N_r: int | None = None,
    max_sweeps: int = 50,
    total_power: float | None = None,
) -> TrainingPlan:
    """Deterministic low-coherence A5/A5 multiple-combiner training.

    Rows of the sensing matrix are built one at a time (each choice
    minimizing the running coherence), then refined by sweeps that re-pick
    every transmit antenna ``s_j`` and afterwards every receive antenna of
    every ``S_j``. Equal coherences are ranked by the fourth-power sidelobe
    energy, which keeps the search moving while the coherence is pinned at a
    plateau. Stops after a sweep that does not lower the coherence; exact
    ties go to the lowest index.
    """
    n_t = G_t if N_t is None else N_t
    n_r = G_r if N_r is None else N_r
    if M_r > n_r:
        raise ValueError(f"M_r={M_r} exceeds N_r={n_r}")
    spec = _SelectionSpectrum(n_t, n_r, G_t, G_r)
    m_total = M_t * M_r
    Et, Er = spec.Et, spec.Er

    # sequential construction
    F = np.zeros((G_t, G_r), dtype=complex)
    tx: list[int] = []
    rx: list[list[int]] = []
    m = 0
    for _ in range(M_t):
        m += 1
        cand = F[None, None] + Et[:, None, :, None] * Er[None, :, None, :]
        s, r = np.unravel_index(_pick(*spec.scores(cand, m)), cand.shape[:2])
        F = cand[s, r]
        tx.append(int(s))
        rows = [int(r)]
        for _ in range(M_r - 1):
            m += 1
            free = [c for c in range(n_r) if c not in rows]
            cand = F[None] + Et[s][None, :, None] * Er[free][:, None, :]
            k = _pick(*spec.scores(cand, m))
            F = cand[k]
            rows.append(free[k])
        rx.append(rows)

    cur_mu, cur_e = (float(v) for v in spec.scores(F, m_total))
    history = [cur_mu]

    def better(mu, e):
        if mu < cur_mu - 1e-12:
            return True
        return abs(mu - cur_mu) <= 1e-12 and e < cur_e * (1 - 1e-12)

    for _ in range(max_sweeps):
        start_mu = cur_mu
        for j in range(M_t):
            R = Er[rx[j]].sum(axis=0)
            cand = F[None] + (Et - Et[tx[j]])[:, :, None] * R[None, None, :]
            mu, en = spec.scores(cand, m_total)
            k = _pick(mu, en)
            if better(mu[k], en[k]):
                F, tx[j], cur_mu, cur_e = cand[k], k, float(mu[k]), float(en[k])
        for j in range(M_t):
            for i in range(M_r):
                old = rx[j][i]
                free = [c for c in range(n_r) if c == old or c not in rx[j]]
                delta = Er[free] - Er[old]
                cand = F[None] + Et[tx[j]][None, :, None] * delta[:, None, :]
                mu, en = spec.scores(cand, m_total)
                k = _pick(mu, en)
                if better(mu[k], en[k]):
                    F, rx[j][i], cur_mu, cur_e = cand[k], free[k], float(mu[k]), float(en[k])
        history.append(cur_mu)
        if not cur_mu < start_mu - 1e-12:
            break

    if total_power is None:
        total_power = float(M_t)
    P = np.zeros((n_t, M_t), dtype=complex)
    P[tx, np.arange(M_t)] = 1.0
    P = _scale_precoders(P, total_power)
    Q = []
    for rows in rx:
        q = np.zeros((n_r, M_r), dtype=complex)
        q[rows, np.arange(M_r)] = 1.0
        Q.append(q)
    info = {"design": "greedy", "coherence_history": history, "tx": tx, "rx": rx}
    return TrainingPlan("MC", P, Q, total_power, 1.0, Architecture("A5"), Architecture("A5"), M_r, 1, None, info)


# --------------------------------------------------------------------------
# sensing model


def dictionary_product(plan: TrainingPlan, A_BSD: np.ndarray, A_MSD: np.ndarray) -> np.ndarray:
    """``Phi Psi`` without forming ``Psi``.

    Row ``(n, l)`` of ``Phi Psi`` is ``(p_n^T conj(A_BSD)) kron (q_l^H A_MSD)``.
    """
    Tt = plan.P.T @ A_BSD.conj()
    if plan.mode == "SC":
        return np.kron(Tt, plan.Q_blocks.conj().T @ A_MSD)
    Tr = np.stack([q.conj().T @ A_MSD for q in plan.Q_blocks]) if _uniform(plan.Q_blocks) else None
    if Tr is not None:
        A = np.einsum("ng,nlh->nlgh", Tt, Tr)
        return A.reshape(-1, Tt.shape[1] * A_MSD.shape[1])
    return np.vstack([np.kron(Tt[n][None, :], q.conj().T @ A_MSD) for n, q in enumerate(plan.Q_blocks)])


def _uniform(blocks) -> bool:
    return len({q.shape for q in blocks}) == 1


def sensing_matrix(
    plan: TrainingPlan,
    dictionary: np.ndarray | None = None,
    sigma_n2: float = 1.0,
    *,
    dictionaries: tuple[np.ndarray, np.ndarray] | None = None,
) -> SensingSystem:
    """Assemble ``Phi``, ``A = Phi Psi`` and the post-combining noise covariance.

    Pass ``dictionary`` (``Psi``) or ``dictionaries=(A_BSD, A_MSD)``; the
    latter builds ``A`` from the Kronecker structure, which is much cheaper
    for large grids.
    """
    P = plan.P
    if plan.mode == "SC":
        Q = plan.Q_blocks
        Phi = np.kron(P.T, Q.conj().T)
        per = np.sum(np.abs(Q) ** 2, axis=0)
        noise_cov = sigma_n2 * np.diag(np.tile(per, plan.M_t)).astype(complex)
        sizes = (1,) * Phi.shape[0]
    else:
        Phi = np.vstack([np.kron(P[:, n][None, :], q.conj().T) for n, q in enumerate(plan.Q_blocks)])
        noise_cov = sigma_n2 * block_diag(*[q.conj().T @ q for q in plan.Q_blocks])
        sizes = tuple(q.shape[1] for q in plan.Q_blocks)
    if dictionaries is not None:
        A = dictionary_product(plan, *dictionaries)
    else:
        A = None if dictionary is None else Phi @ dictionary
    return SensingSystem(Phi=Phi, A=A, noise_cov=noise_cov, snapshot_sizes=sizes)


def simulate_measurements(
    x_or_H: np.ndarray,
    plan: TrainingPlan,
    rho: float,
    sigma_n2: float,
    seed: SeedLike = None,
    *,
    dictionary: np.ndarray | None = None,
    sensing: SensingSystem | None = None,
) -> tuple[np.ndarray, float]:
    """Noisy training outputs ``y = sqrt(rho) Phi vec(H) + e`` with symbol s = 1.

    ``x_or_H`` is either the channel matrix or a beamspace vector (then
    ``dictionary`` maps it to ``vec(H)``). Noise is drawn per receive antenna
    and passed through the combiners, so its correlation is exact.
    Returns ``(y, trace(noise covariance))``.
    """
    arr = np.asarray(x_or_H)
    if arr.ndim == 1:
        if dictionary is None:
            raise ValueError("a beamspace vector needs the channel dictionary")
        h = dictionary @ arr
        if h.size != plan.N_t * plan.N_r:
            raise ValueError("dictionary does not match the plan dimensions")
        H = h.reshape(plan.N_r, plan.N_t, order="F")
    else:
        H = arr
        if H.shape != (plan.N_r, plan.N_t):
            raise ValueError(f"channel shape {H.shape} does not match plan ({plan.N_r}, {plan.N_t})")
    rng = make_rng(seed)
    if plan.mode == "SC":
        Q = plan.Q_blocks
        clean = vec(Q.conj().T @ H @ plan.P)
        n_meas = clean.size
        noise = crandn(rng, plan.N_r, n_meas) * math.sqrt(sigma_n2)
        q_rep = np.tile(Q, (1, plan.M_t))
        e = np.einsum("ij,ij->j", q_rep.conj(), noise)
        power = sigma_n2 * plan.M_t * float(np.sum(np.abs(Q) ** 2))
    else:
        parts_clean, parts_e = [], []
        power = 0.0
        for n, q in enumerate(plan.Q_blocks):
            parts_clean.append(q.conj().T @ H @ plan.P[:, n])
            parts_e.append(q.conj().T @ (crandn(rng, plan.N_r) * math.sqrt(sigma_n2)))
            power += sigma_n2 * float(np.sum(np.abs(q) ** 2))
        clean = np.concatenate(parts_clean)
        e = np.concatenate(parts_e)
    if sensing is not None and sensing.Phi.shape[0] != clean.size:
        raise ValueError("sensing system does not match the plan")
    return math.sqrt(rho) * clean + e, power


def coherence_curve(
    M_values,
    G_t: int,
    G_r: int,
    *,
    arch_tx="A5",
    arch_rx="A5",
    N_t: int | None = None,
    N_r: int | None = None,
    L_r: int = 1,
    trials: int = 100,
    seed: SeedLike = 0,
    design: str = "random",
) -> list[dict]:
    """Coherence of multiple-combiner training versus measurement count.

    ``mu`` is the best of ``trials`` random plans (``design="random"``) or
    the greedy deterministic design. ``M_t``/``M_r`` report the optimal
    single-combiner split and ``sc_welch_bound`` its Welch bound.
    """
    from .channel import ArrayGeometry, make_dictionary

    n_t = G_t if N_t is None else N_t
    n_r = G_r if N_r is None else N_r
    arch_tx, arch_rx = as_arch(arch_tx), as_arch(arch_rx)
    N = G_t * G_r
    dicts = None
    rows = []
    base = make_rng(seed)
    for M in M_values:
        if M % L_r:
            raise ValueError(f"M={M} is not a multiple of L_r={L_r}")
        split = optimal_split(M, G_t, G_r)
        m_t = M // L_r
        if design == "greedy":
            if arch_tx.kind != "A5" or arch_rx.kind != "A5":
                raise ValueError("the greedy design is defined for A5 at both ends")
            plan = greedy_training(m_t, L_r, G_t, G_r, N_t=n_t, N_r=n_r)
            mu = plan.info["coherence_history"][-1]
        else:
            best = 1.0
            for _ in range(trials):
                plan = random_training(arch_tx, arch_rx, "MC", m_t, L_r, base, N_t=n_t, N_r=n_r)
                if arch_tx.kind == "A5" and arch_rx.kind == "A5":
                    tx = [int(np.flatnonzero(plan.P[:, n])[0]) for n in range(m_t)]
                    rx = [np.argmax(np.abs(q), axis=0) for q in plan.Q_blocks]
                    mu = selection_coherence(tx, rx, n_t, n_r, G_t, G_r)
                else:
                    if dicts is None:
                        dicts = (make_dictionary(ArrayGeometry(n_t), G_t), make_dictionary(ArrayGeometry(n_r), G_r))
                    mu = mutual_coherence(dictionary_product(plan, *dicts))
                best = min(best, mu)
            mu = best
        rows.append(
            {
                "M": M,
                "M_t": split.M_t,
                "M_r": split.M_r,
                "mu": mu,
                "welch_bound": welch_bound(min(M, N), N),
                "sc_welch_bound": split.bound,
            }
        )
    return rows

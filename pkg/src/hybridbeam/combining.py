"""Hybrid combiner design and spectral efficiency.

The receiver objective is the mutual information

    I = log2 det(I + SNR/N_t * Ht^H P_W Ht),   Ht = H F,

where ``P_W`` projects onto the column space of the hybrid combiner
``W = W_RF W_BB``. Phase-shifter and switch-combining architectures
(A1-A4) are designed by simultaneous OMP over a dictionary of feasible
analog columns; antenna-selection architectures (A5, A6) by greedy
incremental selection.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from ._util import cmat_to_json
from .architectures import as_arch, is_feasible, subset_blocks
from .channel import ArrayGeometry, make_dictionary
from .estimation import RankDeficientError

A3_MAX_ANTENNAS = 14
EXHAUSTIVE_MAX_SUPPORTS = 200_000


@dataclass
class PrecoderDesign:
    F: np.ndarray
    power_alloc: np.ndarray

    def to_json(self) -> dict:
        return {"F": cmat_to_json(self.F), "power_alloc": [float(p) for p in self.power_alloc]}


@dataclass
class CombinerDesign:
    W_RF: np.ndarray
    W_BB: np.ndarray
    mutual_info: float
    arch: str = ""
    support: list[int] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)

    @property
    def W(self) -> np.ndarray:
        return self.W_RF @ self.W_BB

    def to_json(self) -> dict:
        return {
            "arch": self.arch,
            "W_RF": cmat_to_json(self.W_RF),
            "W_BB": cmat_to_json(self.W_BB),
            "mutual_info": self.mutual_info,
            "support": [int(s) for s in self.support],
        }


# --------------------------------------------------------------------------
# objective and unconstrained design


def mutual_information(H_tilde: np.ndarray, W: np.ndarray, snr: float, n_t: int) -> float:
    """Mutual information in bits/s/Hz achieved by combiner ``W``.

    Only the column space of ``W`` matters, so ``W`` and ``W T`` give the
    same value for any invertible ``T``.
    """
    W = np.atleast_2d(np.asarray(W))
    H_tilde = np.atleast_2d(np.asarray(H_tilde))
    if W.shape[0] != H_tilde.shape[0]:
        raise ValueError(f"W has {W.shape[0]} rows but the channel has {H_tilde.shape[0]}")
    s = np.linalg.svd(W, compute_uv=False)
    if s.size < W.shape[1] or s[-1] <= 1e-10 * s[0]:
        raise RankDeficientError(f"combiner of shape {W.shape} is rank deficient")
    Qw, _ = np.linalg.qr(W)
    g = np.linalg.svd(Qw.conj().T @ H_tilde, compute_uv=False)
    return float(np.sum(np.log2(1.0 + snr / n_t * g**2)))


def waterfilling(sigmas, snr: float, n_streams: int, budget: float | None = None, *, n_t: int = 1) -> np.ndarray:
    """Power per stream maximizing ``sum log2(1 + snr/n_t * sigma_i^2 p_i)``.

    Exact water level by sorting; streams below the level get zero power.
    ``budget`` defaults to ``n_streams``.
    """
    sig = np.asarray(sigmas, dtype=float)[:n_streams]
    if budget is None:
        budget = float(n_streams)
    if budget < 0 or snr < 0:
        raise ValueError("budget and snr must be nonnegative")
    p = np.zeros(sig.size)
    gain = snr / n_t * sig**2
    if not np.any(gain > 0) or budget == 0:
        return p
    with np.errstate(divide="ignore", over="ignore"):
        inv_all = 1.0 / gain
    active = np.flatnonzero(np.isfinite(inv_all))
    if active.size == 0:
        # every inverse gain overflows: the water level only ever covers the strongest stream
        p[int(np.argmax(gain))] = budget
        return p
    inv = inv_all[active]
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    for k in range(inv_sorted.size, 0, -1):
        level = (budget + inv_sorted[:k].sum()) / k
        if level > inv_sorted[k - 1]:
            break
    # level - inv_i written as a sum of differences, so one active stream gets the budget exactly
    head = inv_sorted[:k]
    alloc = np.zeros(inv_sorted.size)
    alloc[:k] = np.maximum((budget + np.sum(head[None, :] - head[:, None], axis=1)) / k, 0.0)
    p[active[order]] = alloc
    return p


def optimal_unconstrained(H: np.ndarray, n_s: int, snr: float, budget: float | None = None) -> tuple[PrecoderDesign, np.ndarray]:
    """Waterfilling SVD precoder ``F = V_Ns Gamma`` and combiner ``W_opt = U_Ns``."""
    n_r, n_t = H.shape
    if not 1 <= n_s <= min(n_r, n_t):
        raise ValueError(f"N_s must lie in [1, {min(n_r, n_t)}]")
    U, s, Vh = np.linalg.svd(H)
    p = waterfilling(s, snr, n_s, budget, n_t=n_t)
    F = Vh[:n_s].conj().T * np.sqrt(p)
    return PrecoderDesign(F=F, power_alloc=p), U[:, :n_s]


# --------------------------------------------------------------------------
# dictionaries and SOMP (A1-A4)


def _binary_columns(n: int) -> np.ndarray:
    codes = np.arange(1, 2**n)
    return ((codes[None, :] >> np.arange(n)[:, None]) & 1).astype(float)


def build_dictionary(
    arch,
    n_r: int,
    l_r: int,
    resolution: int | None = None,
    *,
    max_a3_antennas: int = A3_MAX_ANTENNAS,
) -> np.ndarray:
    """Feasible analog combining columns for A1-A4.

    A1 uses unit-modulus steering vectors on ``resolution`` grid points
    (default ``2 N_r``); A2 is block diagonal over subarray steering
    dictionaries (default ``2 x`` subset size points each); A3 enumerates
    every nonzero binary vector; A4 enumerates nonzero binary vectors per
    subset, block diagonally.
    """
    kind = as_arch(arch).kind
    if kind == "A1":
        n_d = 2 * n_r if resolution is None else resolution
        return make_dictionary(ArrayGeometry(n_r), n_d) * math.sqrt(n_r)
    if kind == "A3":
        if n_r > max_a3_antennas:
            raise ValueError(
                f"A3 dictionary with N_r = {n_r} would hold 2^{n_r} - 1 columns "
                f"(cap N_r <= {max_a3_antennas}); use a subset architecture such as A4"
            )
        return _binary_columns(n_r)
    blocks = subset_blocks(n_r, l_r)
    if kind == "A2":
        n_d = 2 * max(len(b) for b in blocks) if resolution is None else resolution
        parts = [make_dictionary(ArrayGeometry(len(b)), n_d) * math.sqrt(len(b)) for b in blocks]
        return block_diag(*parts)
    if kind == "A4":
        return block_diag(*[_binary_columns(len(b)) for b in blocks])
    raise ValueError(f"no combining dictionary for {kind}; use hybrid_antenna_selection")


def _column_blocks(D: np.ndarray, n_r: int, l_r: int) -> np.ndarray:
    """Subset of each dictionary column; every column must sit inside one subset."""
    owner = np.empty(n_r, dtype=int)
    for i, b in enumerate(subset_blocks(n_r, l_r)):
        owner[b] = i
    nz = np.abs(D) > 0
    first = owner[np.argmax(nz, axis=0)]
    last = owner[n_r - 1 - np.argmax(nz[::-1], axis=0)]
    if np.any(first != last):
        raise ValueError(f"dictionary columns straddle the {l_r} antenna subsets")
    return first


def somp_combiner(
    W_opt: np.ndarray,
    D: np.ndarray,
    L_r: int,
    arch,
    *,
    H_tilde: np.ndarray | None = None,
    snr: float | None = None,
    n_t: int | None = None,
) -> CombinerDesign:
    """Simultaneous OMP fit of ``W_RF W_BB`` to ``W_opt`` over dictionary ``D``.

    Each iteration adds the column with the largest summed squared
    normalized correlation against the residual, then refits ``W_BB`` by
    least squares. A2 and A4 draw one column per subset, ordered so that
    RF chain ``l`` serves subset ``l``. Columns lying in
    the span of those already chosen are skipped. ``W_BB`` is finally scaled
    so ``||W_RF W_BB||_F^2 = N_s``. The mutual information is filled in when
    ``H_tilde``, ``snr`` and ``n_t`` are given.
    """
    arch = as_arch(arch)
    W_opt = np.asarray(W_opt, dtype=complex)
    D = np.asarray(D)
    n_r, n_s = W_opt.shape
    n_d = D.shape[1]
    if D.shape[0] != n_r:
        raise ValueError("dictionary and target have different row counts")
    if L_r > n_d:
        raise ValueError(f"cannot select L_r = {L_r} columns from a dictionary of {n_d}")
    norms = np.linalg.norm(D, axis=0)
    blocks = _column_blocks(D, n_r, L_r) if arch.kind in ("A2", "A4") else None
    if blocks is not None and len(np.unique(blocks)) < L_r:
        raise ValueError(f"{arch.kind} needs {L_r} subsets in the dictionary, found {len(np.unique(blocks))}")

    allowed = np.ones(n_d, dtype=bool)
    support: list[int] = []
    basis = np.zeros((n_r, 0), dtype=complex)
    R = W_opt.copy()
    history = [float(np.linalg.norm(R))]
    W_BB = np.zeros((0, n_s), dtype=complex)
    while len(support) < L_r:
        metric = np.sum(np.abs(D.conj().T @ R) ** 2, axis=1) / norms**2
        metric[~allowed] = -1.0
        j = int(np.argmax(metric))
        if metric[j] < 0:
            raise RankDeficientError(f"only {len(support)} independent dictionary columns available")
        d = D[:, j].astype(complex)
        q = d - basis @ (basis.conj().T @ d)
        q = q - basis @ (basis.conj().T @ q)
        allowed[j] = False
        if np.linalg.norm(q) <= 1e-10 * norms[j]:
            continue  # in the span already; drop it and pick again
        basis = np.column_stack([basis, q / np.linalg.norm(q)])
        support.append(j)
        if blocks is not None:
            allowed[blocks == blocks[j]] = False
        W_RF = D[:, support].astype(complex)
        W_BB, *_ = np.linalg.lstsq(W_RF, W_opt, rcond=None)
        R = W_opt - W_RF @ W_BB
        history.append(float(np.linalg.norm(R)))

    if blocks is not None:
        order = np.argsort(blocks[support], kind="stable")
        support = [support[i] for i in order]
        W_BB = W_BB[order]
    W_RF = D[:, support].astype(complex)
    scale = np.linalg.norm(W_RF @ W_BB)
    if scale > 0:
        W_BB = W_BB * (math.sqrt(n_s) / scale)
    mi = float("nan")
    if H_tilde is not None and snr is not None and n_t is not None:
        mi = mutual_information(H_tilde, W_RF @ W_BB, snr, n_t)
    return CombinerDesign(W_RF, W_BB, mi, arch.kind, support, history)


# --------------------------------------------------------------------------
# antenna selection (A5, A6)


def _selection_mi(Hs: np.ndarray, snr: float, n_t: int) -> np.ndarray:
    """Batched ``log2 det(I + snr/n_t Hs^H Hs)`` over leading axes."""
    G = np.swapaxes(Hs.conj(), -1, -2) @ Hs
    eye = np.eye(G.shape[-1])
    _, logdet = np.linalg.slogdet(eye + snr / n_t * G)
    return logdet / math.log(2.0)


def _selection_design(H_tilde, support, n_s, snr, n_t, kind, history=()) -> CombinerDesign:
    support = sorted(support)
    n_r = H_tilde.shape[0]
    W_RF = np.eye(n_r)[:, support].astype(complex)
    U, _, _ = np.linalg.svd(H_tilde[support], full_matrices=True)
    W_BB = U[:, :n_s]
    mi = mutual_information(H_tilde, W_RF @ W_BB, snr, n_t)
    return CombinerDesign(W_RF, W_BB, mi, kind, support, list(history))


def _check_selection(arch, L_r, n_s, n_r, n_subsets):
    kind = as_arch(arch).kind
    if kind not in ("A5", "A6"):
        raise ValueError(f"antenna selection applies to A5/A6, not {kind}")
    if not n_s <= L_r <= n_r:
        raise ValueError(f"need N_s <= L_r <= N_r, got {n_s}, {L_r}, {n_r}")
    if kind == "A6":
        if n_subsets is None:
            n_subsets = L_r
        if L_r > n_subsets:
            raise ValueError(f"A6 with L_r = {L_r} exceeds the {n_subsets} antenna subsets")
        owner = np.empty(n_r, dtype=int)
        for i, b in enumerate(subset_blocks(n_r, n_subsets)):
            owner[b] = i
        return kind, owner
    return kind, None


def greedy_antenna_selection(H_tilde: np.ndarray, n_select: int, snr: float, n_t: int, *, owner=None, start=()) -> list[int]:
    """Incremental selection: add the row giving the largest mutual information."""
    n_r = H_tilde.shape[0]
    support = list(start)
    used = {owner[i] for i in support} if owner is not None else set()
    while len(support) < n_select:
        cand = [j for j in range(n_r) if j not in support and (owner is None or owner[j] not in used)]
        if not cand:
            raise ValueError("no feasible antenna left to select")
        stacks = np.stack([H_tilde[support + [j]] for j in cand])
        j = cand[int(np.argmax(_selection_mi(stacks, snr, n_t)))]
        support.append(j)
        if owner is not None:
            used.add(owner[j])
    return support


def hybrid_antenna_selection(
    H_tilde: np.ndarray, L_r: int, N_s: int, arch, snr: float, *, n_t: int, n_subsets: int | None = None
) -> CombinerDesign:
    """Greedy hybrid antenna selection with an SVD baseband combiner.

    Starts from ``N_s`` greedily selected rows, then for each further RF
    chain tries every remaining feasible row, sets ``W_BB`` to the left
    singular vectors of the restricted channel and keeps the row with the
    largest mutual information. A6 allows one row per subset.
    """
    H_tilde = np.asarray(H_tilde)
    n_r = H_tilde.shape[0]
    kind, owner = _check_selection(arch, L_r, N_s, n_r, n_subsets)
    support = greedy_antenna_selection(H_tilde, N_s, snr, n_t, owner=owner)
    history = []
    used = {owner[i] for i in support} if owner is not None else set()
    for _ in range(N_s, L_r):
        best, best_j = -np.inf, None
        for j in range(n_r):
            if j in support or (owner is not None and owner[j] in used):
                continue
            c = _selection_design(H_tilde, support + [j], N_s, snr, n_t, kind).mutual_info
            if c > best:
                best, best_j = c, j
        support.append(best_j)
        history.append(best)
        if owner is not None:
            used.add(owner[best_j])
    return _selection_design(H_tilde, support, N_s, snr, n_t, kind, history)


def exhaustive_combiner(
    H_tilde: np.ndarray,
    L_r: int,
    N_s: int,
    arch,
    snr: float,
    *,
    n_t: int,
    n_subsets: int | None = None,
    max_supports: int = EXHAUSTIVE_MAX_SUPPORTS,
) -> CombinerDesign:
    """Best feasible antenna support by enumeration (A5: any L_r rows, A6: one per subset).

    Candidates are scored in vectorized batches and the first maximum in
    lexicographic order wins.
    """
    H_tilde = np.asarray(H_tilde)
    n_r = H_tilde.shape[0]
    kind, _ = _check_selection(arch, L_r, N_s, n_r, n_subsets)
    if kind == "A5":
        count = math.comb(n_r, L_r)
        supports = itertools.combinations(range(n_r), L_r)
    else:
        chosen = subset_blocks(n_r, L_r if n_subsets is None else n_subsets)
        count = math.prod(len(b) for b in chosen)
        supports = itertools.product(*[b.tolist() for b in chosen])
        if L_r < len(chosen):
            raise ValueError("exhaustive A6 search needs L_r equal to the number of subsets")
    if count > max_supports:
        raise ValueError(f"{count} candidate supports exceed the cap of {max_supports}")
    best_val, best_sup = -np.inf, None
    batch = 4096
    while True:
        chunk = list(itertools.islice(supports, batch))
        if not chunk:
            break
        vals = _selection_mi(H_tilde[np.array(chunk)], snr, n_t)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_sup = float(vals[k]), list(chunk[k])
    return _selection_design(H_tilde, best_sup, N_s, snr, n_t, kind)


# --------------------------------------------------------------------------
# spectral efficiency for one channel


def design_combiner(arch, H: np.ndarray, L_r: int, N_s: int, snr: float, *, max_a3_antennas: int = A3_MAX_ANTENNAS) -> CombinerDesign:
    """Hybrid combiner for ``arch`` against the waterfilling precoded channel ``H F``."""
    arch = as_arch(arch)
    n_r, n_t = H.shape
    precoder, W_opt = optimal_unconstrained(H, N_s, snr)
    Ht = H @ precoder.F
    if arch.kind in ("A5", "A6"):
        return hybrid_antenna_selection(Ht, L_r, N_s, arch, snr, n_t=n_t)
    D = build_dictionary(arch, n_r, L_r, max_a3_antennas=max_a3_antennas)
    design = somp_combiner(W_opt, D, L_r, arch, H_tilde=Ht, snr=snr, n_t=n_t)
    if not is_feasible(design.W_RF, arch):
        raise AssertionError(f"SOMP produced an infeasible {arch.kind} combiner")
    return design


def unconstrained_rate(H: np.ndarray, N_s: int, snr: float) -> float:
    precoder, W_opt = optimal_unconstrained(H, N_s, snr)
    return mutual_information(H @ precoder.F, W_opt, snr, H.shape[1])


def se_csv(rows) -> str:
    """CSV text with columns arch, L_r, N_s, snr_db, spectral_efficiency."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["arch", "L_r", "N_s", "snr_db", "spectral_efficiency"])
    for r in rows:
        w.writerow([r["arch"], r["L_r"], r["N_s"], r["snr_db"], repr(float(r["spectral_efficiency"]))])
    return buf.getvalue()

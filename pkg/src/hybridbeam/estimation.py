"""Channel recovery from training measurements.

* :func:`omp` - sparse recovery over the beamspace dictionary
* :func:`ls_estimate` - least squares on the full channel (needs M >= N_t N_r)
* :func:`exhaustive_search_estimate` - beam-scan baseline over all DFT pairs
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from ._util import unvec
from .channel import ArrayGeometry, make_dictionary
from .training import SensingSystem, TrainingPlan

# Residual floor relative to ||y||: below it the fit is exact to working precision.
RESIDUAL_FLOOR = 1e-11
# An iteration must shrink the residual by at least this fraction.
MIN_DECREASE = 1e-12


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class EstimateResult:
    x_hat: np.ndarray
    support: list[int]
    iterations: int
    residual_norm: float
    H_hat: np.ndarray | None = None
    residual_history: list[float] = field(default_factory=list)
    rank_deficient: bool = False

    def with_channel(self, A_MSD: np.ndarray, A_BSD: np.ndarray) -> "EstimateResult":
        """Attach ``H_hat = A_MSD unvec(x_hat) A_BSD^H``."""
        Hv = unvec(self.x_hat, A_MSD.shape[1])
        self.H_hat = A_MSD @ Hv @ A_BSD.conj().T
        return self

    def to_json(self) -> dict:
        return {
            "support": [int(s) for s in self.support],
            "coefficients": [[float(self.x_hat[s].real), float(self.x_hat[s].imag)] for s in self.support],
            "length": int(self.x_hat.size),
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "rank_deficient": self.rank_deficient,
        }


def omp(
    A: np.ndarray,
    y: np.ndarray,
    *,
    max_sparsity: int | None = None,
    epsilon: float | None = None,
) -> EstimateResult:
    """Orthogonal matching pursuit.

    Stops when the residual energy ``||r||^2`` drops to ``epsilon``, when
    ``max_sparsity`` atoms are selected, or when an iteration no longer
    shrinks the residual. With neither rule given, runs until the residual
    reaches the numerical floor or ``min(M, N)`` atoms.

    The support is grown with an incrementally orthonormalized basis, so the
    residual is always the projection of ``y`` off the selected atoms.
    """
    A = np.asarray(A, dtype=complex)
    y = np.asarray(y, dtype=complex).ravel()
    M, N = A.shape
    if y.size != M:
        raise ValueError(f"measurement length {y.size} does not match A with {M} rows")
    col_norms = np.linalg.norm(A, axis=0)
    if np.any(col_norms == 0):
        raise ValueError("A has a zero column")
    if max_sparsity is not None and max_sparsity < 1:
        raise ValueError("max_sparsity must be >= 1")
    if epsilon is not None and epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    k_max = min(M, N) if max_sparsity is None else min(max_sparsity, M, N)
    eps = 0.0 if epsilon is None else float(epsilon)

    y_norm = float(np.linalg.norm(y))
    floor = (RESIDUAL_FLOOR * y_norm) ** 2
    r = y.copy()
    energy = y_norm**2
    history = [y_norm]
    support: list[int] = []
    basis = np.zeros((M, k_max), dtype=complex)
    R = np.zeros((k_max, k_max), dtype=complex)
    selected = np.zeros(N, dtype=bool)
    rank_deficient = False

    while len(support) < k_max and energy > max(eps, floor):
        corr = np.abs(r.conj() @ A) / col_norms
        corr[selected] = -1.0
        j = int(np.argmax(corr))
        a = A[:, j]
        k = len(support)
        q = a.copy()
        coeffs = np.zeros(k, dtype=complex)
        for _ in range(2):  # re-orthogonalize once for stability
            c = basis[:, :k].conj().T @ q
            q -= basis[:, :k] @ c
            coeffs += c
        q_norm = np.linalg.norm(q)
        if q_norm <= 1e-10 * col_norms[j]:
            rank_deficient = True
            break
        q /= q_norm
        new_r = r - q * (q.conj() @ r)
        new_energy = float(np.vdot(new_r, new_r).real)
        if new_energy > energy * (1 - MIN_DECREASE) and energy > floor:
            break
        basis[:, k] = q
        R[:k, k] = coeffs
        R[k, k] = q_norm
        support.append(j)
        selected[j] = True
        r, energy = new_r, new_energy
        history.append(math.sqrt(energy))

    x_hat = np.zeros(N, dtype=complex)
    k = len(support)
    if k:
        z = basis[:, :k].conj().T @ y
        x_hat[support] = sla.solve_triangular(R[:k, :k], z)
    return EstimateResult(
        x_hat=x_hat,
        support=support,
        iterations=k,
        residual_norm=math.sqrt(energy),
        residual_history=history,
        rank_deficient=rank_deficient,
    )


def default_epsilon(sensing: SensingSystem) -> float:
    """Expected post-combining noise energy, trace of the noise covariance."""
    return float(np.trace(sensing.noise_cov).real)


def whiten(sensing: SensingSystem, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Decorrelate the noise: returns ``(C^-1/2 A, C^-1/2 y, epsilon)``.

    Whitened noise is white with unit variance so the matching threshold is
    the number of measurements.
    """
    if sensing.A is None:
        raise ValueError("sensing system carries no dictionary product A")
    w, V = np.linalg.eigh(sensing.noise_cov)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    T = (V[:, keep] / np.sqrt(w[keep])).conj().T
    return T @ sensing.A, T @ y, float(np.count_nonzero(keep))


def omp_estimate(
    sensing: SensingSystem,
    y: np.ndarray,
    A_MSD: np.ndarray,
    A_BSD: np.ndarray,
    *,
    rho: float = 1.0,
    epsilon: float | None = None,
    max_sparsity: int | None = None,
    whitened: bool = False,
) -> EstimateResult:
    """OMP channel estimate with the noise-energy stopping threshold by default.

    The beamspace coefficients are divided by ``sqrt(rho)`` so ``H_hat``
    estimates the channel itself.
    """
    if whitened:
        A, yw, eps = whiten(sensing, y)
        if epsilon is None:
            epsilon = eps
        res = omp(A, yw, epsilon=epsilon, max_sparsity=max_sparsity)
    else:
        if epsilon is None:
            epsilon = default_epsilon(sensing)
        res = omp(sensing.A, y, epsilon=epsilon, max_sparsity=max_sparsity)
    res.x_hat = res.x_hat / math.sqrt(rho)
    return res.with_channel(A_MSD, A_BSD)


class LeastSquaresEstimator:
    """Factor ``Phi^H Phi`` once and reuse it across Monte Carlo trials."""

    def __init__(self, Phi: np.ndarray, n_r: int):
        Phi = np.asarray(Phi, dtype=complex)
        M, N = Phi.shape
        if M < N:
            raise RankDeficientError(
                f"least squares needs at least N_t*N_r = {N} measurements, got M = {M}"
            )
        if N % n_r:
            raise ValueError(f"{N} channel entries cannot be reshaped with N_r = {n_r}")
        gram = Phi.conj().T @ Phi
        try:
            self._chol = sla.cho_factor(gram)
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError(f"Phi ({M} x {N}) is not full column rank") from exc
        d = np.abs(np.diag(self._chol[0]))
        if d.min() <= 1e-8 * d.max():
            raise RankDeficientError(f"Phi ({M} x {N}) is numerically rank deficient")
        self.Phi = Phi
        self.n_r = n_r

    def __call__(self, y: np.ndarray, rho: float = 1.0) -> np.ndarray:
        h = sla.cho_solve(self._chol, self.Phi.conj().T @ np.asarray(y)) / math.sqrt(rho)
        return unvec(h, self.n_r)


def ls_estimate(Phi: np.ndarray, y: np.ndarray, n_r: int, rho: float = 1.0) -> np.ndarray:
    """``(Phi^H Phi)^-1 Phi^H y / sqrt(rho)`` reshaped to ``N_r x N_t``."""
    return LeastSquaresEstimator(Phi, n_r)(y, rho)


def ls_mmse_bound(sigma_n2: float, n_t: int, n_r: int, total_power: float) -> float:
    """Minimum LS error ``sigma^2 N_t^2 N_r / P`` for orthogonal single-RF training."""
    return sigma_n2 * n_t**2 * n_r / total_power


def exhaustive_search_plan(n_t: int, n_r: int, g_t: int, g_r: int, l_r: int = 1, total_power: float | None = None) -> TrainingPlan:
    """Single-combiner plan sounding every (precoder, combiner) DFT beam pair.

    Precoders are the transmit dictionary columns scaled to the power
    budget; combiners are the receive dictionary columns scaled to unit
    modulus (phase-shifter feasible).
    """
    from .architectures import Architecture

    P = make_dictionary(ArrayGeometry(n_t), g_t)
    if total_power is None:
        total_power = float(g_t)
    P = P * math.sqrt(total_power / g_t)
    Q = make_dictionary(ArrayGeometry(n_r), g_r) * math.sqrt(n_r)
    return TrainingPlan(
        "SC", P, Q, total_power, float(n_r), Architecture("A1"), Architecture("A1"), l_r, 1,
        info={"design": "exhaustive-beam-scan"},
    )


def exhaustive_search_estimate(
    plan: TrainingPlan,
    y: np.ndarray,
    K: int,
    A_MSD: np.ndarray,
    A_BSD: np.ndarray,
    *,
    rho: float = 1.0,
) -> EstimateResult:
    """Pick the K strongest beam pairs and fit their gains by least squares.

    ``plan`` must sound every (precoder, combiner) pair of the two DFT
    codebooks, as built by :func:`exhaustive_search_plan`; measurement ``m``
    then corresponds to dictionary atom ``m``.
    """
    y = np.asarray(y).ravel()
    g_t, g_r = A_BSD.shape[1], A_MSD.shape[1]
    if plan.mode != "SC" or plan.n_measurements != g_t * g_r or y.size != g_t * g_r:
        raise ValueError(
            f"exhaustive search needs G_t*G_r = {g_t * g_r} single-combiner measurements, "
            f"got a {plan.mode} plan with {plan.n_measurements} and y of length {y.size}"
        )
    if not 1 <= K <= y.size:
        raise ValueError("K must lie in [1, G_t*G_r]")
    order = np.argsort(-np.abs(y), kind="stable")
    support = sorted(int(i) for i in order[:K])
    Tt = plan.P.T @ A_BSD.conj()
    Tr = plan.Q_blocks.conj().T @ A_MSD
    gt, gr = np.divmod(np.array(support), g_r)
    cols = np.einsum("mk,nk->mnk", Tt[:, gt], Tr[:, gr]).reshape(-1, len(support))
    gains, *_ = np.linalg.lstsq(cols, y, rcond=None)
    x_hat = np.zeros(g_t * g_r, dtype=complex)
    x_hat[support] = gains / math.sqrt(rho)
    r = y - cols @ gains
    return EstimateResult(x_hat, support, 1, float(np.linalg.norm(r))).with_channel(A_MSD, A_BSD)

"""Low-rank + sparse decomposition: vanilla GoDec and its cluster-prior variant.

Both alternate a rank-r truncation (L-step) with a cardinality-k selection
(S-step). Vanilla GoDec selects the k pixels with the largest residual row
norm; ``turbo_godec`` ranks pixels by the cluster-sparsity marginals J computed
from the channel-summed residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import csp_bp
from .csp_bp import CspParams
from .hsi_data import PixelMatrix


class SvdTriple(NamedTuple):
    U: np.ndarray  # (n, r)
    s: np.ndarray  # (r,), non-increasing
    V: np.ndarray  # (m, r)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


@dataclass(frozen=True)
class GodecParams:
    """Decomposition controls.

    ``card`` counts pixels. ``lowrank`` picks the exact SVD or the bilateral
    random projection fast path; ``sparse`` picks pixel-wise (row) or entry-wise
    hard thresholding for vanilla GoDec. The stopping rule is
    ``||X - L - S||_F ** residual_power / ||X||_F <= eps``.
    """

    rank: int
    card: int
    eps: float = 1e-4
    max_iter: int = 20
    seed: int = 0
    lowrank: str = "svd"
    power_iters: int = 2
    sparse: str = "pixel"
    residual_power: int = 1

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank}")
        if int(self.card) != self.card or self.card < 1:
            raise ValueError(f"card must be a positive integer, got {self.card}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.lowrank not in ("svd", "brp"):
            raise ValueError("lowrank must be 'svd' or 'brp'")
        if self.sparse not in ("pixel", "entry"):
            raise ValueError("sparse must be 'pixel' or 'entry'")
        if self.residual_power not in (1, 2):
            raise ValueError("residual_power must be 1 or 2")

    def check_shape(self, n_pixels: int, channels: int) -> None:
        if self.rank > min(n_pixels, channels):
            raise ValueError(f"rank {self.rank} exceeds min({n_pixels}, {channels})")
        if self.card > n_pixels:
            raise ValueError(f"card {self.card} exceeds the pixel count {n_pixels}")


@dataclass
class DecompositionResult:
    L: np.ndarray
    S: np.ndarray
    J: np.ndarray | None = None
    residual_history: list[float] = field(default_factory=list)
    iterations_used: int = 0
    bp_sweeps: list[int] = field(default_factory=list)

    @property
    def support(self) -> np.ndarray:
        """Boolean per-pixel mask of nonzero rows of S."""
        return np.any(self.S != 0, axis=1)


# -- L-step -----------------------------------------------------------------

def truncated_svd(M, r: int) -> SvdTriple:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    if int(r) != r or not 1 <= r <= min(M.shape):
        raise ValueError(f"rank {r} out of range for a {M.shape[0]}x{M.shape[1]} matrix")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return SvdTriple(U[:, :r], s[:r], Vt[:r].T)


def l_step(X, S, r: int) -> np.ndarray:
    """Best rank-r approximation of ``X - S``."""
    return truncated_svd(np.asarray(X) - np.asarray(S), r).reconstruct()


def l_step_brp(X, S, r: int, seed: int = 0, power_iters: int = 2) -> np.ndarray:
    """Rank-r approximation of ``X - S`` by bilateral random projection.

    A Gaussian test matrix drawn from ``seed`` is pushed through
    ``power_iters`` rounds of (M, M^T) products with re-orthonormalisation,
    then M is projected onto the resulting row basis. Exact when
    rank(X - S) <= r.
    """
    M = np.asarray(X, dtype=np.float64) - np.asarray(S, dtype=np.float64)
    if int(r) != r or not 1 <= r <= min(M.shape):
        raise ValueError(f"rank {r} out of range for a {M.shape[0]}x{M.shape[1]} matrix")
    rng = np.random.default_rng(seed)
    Y2 = rng.standard_normal((M.shape[1], r))
    for _ in range(power_iters + 1):
        Y1, _ = np.linalg.qr(M @ Y2)
        Y2, _ = np.linalg.qr(M.T @ Y1)
    return (M @ Y2) @ Y2.T


# -- S-step -----------------------------------------------------------------

def _top_k(score: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest strictly-positive scores; lower index wins ties."""
    cand = np.flatnonzero(score > 0)
    order = np.argsort(-score[cand], kind="stable")
    return cand[order[:k]]


def s_step_hard_threshold(R, k: int) -> np.ndarray:
    """Keep the k residual rows (pixels) with the largest L2 norm."""
    R = np.asarray(R, dtype=np.float64)
    sq = np.einsum("ij,ij->i", R, R)
    S = np.zeros_like(R)
    keep = _top_k(sq, k)
    S[keep] = R[keep]
    return S


def s_step_entrywise(R, k: int) -> np.ndarray:
    """Keep the k entries of largest magnitude."""
    R = np.asarray(R, dtype=np.float64)
    flat = R.ravel()
    keep = _top_k(np.abs(flat), k)
    S = np.zeros_like(flat)
    S[keep] = flat[keep]
    return S.reshape(R.shape)


def s_step_csp(R, J, k: int) -> np.ndarray:
    """Keep the residual rows of the k pixels with the largest positive J."""
    R = np.asarray(R, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64).ravel()
    if J.size != R.shape[0]:
        raise ValueError("J does not match the number of pixel rows")
    S = np.zeros_like(R)
    keep = _top_k(J, k)
    S[keep] = R[keep]
    return S


# -- outer loops ------------------------------------------------------------

def relative_residual(X, L, S, power: int = 1, x_norm: float | None = None) -> float:
    if x_norm is None:
        x_norm = float(np.linalg.norm(X))
    if x_norm == 0:
        return 0.0
    return float(np.linalg.norm(np.asarray(X) - L - S)) ** power / x_norm


def _lowrank(X, S, params: GodecParams, t: int) -> np.ndarray:
    if params.lowrank == "brp":
        # one independent, reproducible stream per outer iteration
        seed = np.random.SeedSequence([params.seed, t]).generate_state(1)[0]
        return l_step_brp(X, S, params.rank, int(seed), params.power_iters)
    return l_step(X, S, params.rank)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a pixels x channels matrix")
    return X


def godec(X, params: GodecParams) -> DecompositionResult:
    """Vanilla GoDec (the LSMAD decomposition)."""
    X = _as_matrix(X)
    params.check_shape(*X.shape)
    x_norm = float(np.linalg.norm(X))
    k = params.card if params.sparse == "pixel" else params.card * X.shape[1]
    select = s_step_hard_threshold if params.sparse == "pixel" else s_step_entrywise

    S = np.zeros_like(X)
    L = X
    history = []
    for t in range(1, params.max_iter + 1):
        L = _lowrank(X, S, params, t)
        S = select(X - L, k)
        history.append(relative_residual(X, L, S, params.residual_power, x_norm))
        if history[-1] <= params.eps:
            break
    return DecompositionResult(L=L, S=S, residual_history=history, iterations_used=len(history))


def turbo_godec(X: PixelMatrix, params: GodecParams, csp: CspParams | None = None,
                backend: str | None = None) -> DecompositionResult:
    """GoDec whose S-step selects pixels by cluster-sparsity marginals.

    Each outer iteration: L-step, channel sum of ``X - L``, local evidence,
    ``csp.inner_iters`` damped BP sweeps from uninformative messages, prior
    message, marginals J, then the k pixels with the largest positive J.
    """
    if csp is None:
        csp = CspParams()
    if not isinstance(X, PixelMatrix):
        raise TypeError("turbo_godec needs a PixelMatrix (the pixel grid shape is required)")
    grid = X.grid_shape
    Xm = _as_matrix(X)
    params.check_shape(*Xm.shape)
    x_norm = float(np.linalg.norm(Xm))

    S = np.zeros_like(Xm)
    L = Xm
    J = np.zeros(grid)
    history, sweeps = [], []
    for t in range(1, params.max_iter + 1):
        L = _lowrank(Xm, S, params, t)
        T = csp_bp.channel_sum(Xm, L, grid, csp.residual_mode)
        J, fld = csp_bp.infer(T, csp, backend=backend, return_field=True)
        sweeps.append(fld.sweeps)
        S = s_step_csp(Xm - L, J, params.card)
        history.append(relative_residual(Xm, L, S, params.residual_power, x_norm))
        if history[-1] <= params.eps:
            break
    return DecompositionResult(L=L, S=S, J=J, residual_history=history,
                               iterations_used=len(history), bp_sweeps=sweeps)


# -- rank / cardinality surrogates -----------------------------------------

def estimate_rank(X, energy: float = 0.999) -> int:
    """Smallest r whose leading singular values hold ``energy`` of the
    total squared spectrum."""
    if not 0 < energy < 1:
        raise ValueError("energy must lie in (0, 1)")
    s = np.linalg.svd(np.asarray(X, dtype=np.float64), compute_uv=False)
    e = s ** 2
    total = e.sum()
    if total == 0:
        return 1
    frac = np.cumsum(e) / total
    return int(min(np.searchsorted(frac, energy) + 1, s.size))


def estimate_cardinality(X, fraction: float = 0.02) -> int:
    """``round(fraction * n_pixels)``, at least 1. ``X`` may be a matrix or a
    pixel count."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = X if isinstance(X, (int, np.integer)) else np.asarray(X).shape[0]
    return max(1, int(math.floor(fraction * n + 0.5)))

"""RX scoring and score-map fusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hsi_data import PixelMatrix, minmax

RIDGE_TRIGGER = 1e-10
RIDGE_SCALE = 1e-6


@dataclass(frozen=True)
class RxStats:
    mean: np.ndarray
    cov: np.ndarray
    ridge: float

    @classmethod
    def from_rows(cls, B) -> "RxStats":
        """Background mean and (population) covariance of the rows of ``B``.

        A ridge of ``1e-6 * trace / C`` is added when the covariance is
        numerically singular; a zero covariance falls back to a ridge of 1e-6.
        """
        B = np.asarray(B, dtype=np.float64)
        mu = B.mean(axis=0)
        D = B - mu
        cov = (D.T @ D) / B.shape[0]
        cov = 0.5 * (cov + cov.T)
        c = cov.shape[0]
        scale = np.trace(cov) / c
        ridge = 0.0
        if np.linalg.eigvalsh(cov)[0] < RIDGE_TRIGGER * scale or scale <= 0:
            ridge = RIDGE_SCALE * scale if scale > 0 else RIDGE_SCALE
        return cls(mu, cov, float(ridge))

    def mahalanobis(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        w, Q = np.linalg.eigh(self.cov)
        w = np.clip(w, 0.0, None) + self.ridge
        P = (X - self.mean) @ Q
        return (P * P / w).sum(axis=1)


def _grid(scores: np.ndarray, X) -> np.ndarray:
    if isinstance(X, PixelMatrix):
        return scores.reshape(X.grid_shape)
    return scores


def rx_background(X, L) -> np.ndarray:
    """Mahalanobis distance of each row of X to the statistics of the rows of L.

    Returns an H x W grid when X is a PixelMatrix, otherwise a flat vector.
    """
    return _grid(RxStats.from_rows(L).mahalanobis(X), X)


def rx_global(X) -> np.ndarray:
    """Global RX: background statistics from all pixels of X."""
    return rx_background(X, X)


def fuse(rx, J, alpha: float) -> np.ndarray:
    """``alpha * minmax(rx) + (1 - alpha) * J``, clipped to [0, 1]."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    rx = np.asarray(rx, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    if rx.shape != J.shape:
        raise ValueError(f"shape mismatch: rx {rx.shape} vs J {J.shape}")
    return np.clip(alpha * minmax(rx) + (1.0 - alpha) * J, 0.0, 1.0)

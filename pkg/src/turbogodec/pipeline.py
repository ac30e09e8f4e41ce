"""End-to-end detection: decomposition + scoring for each supported method."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csp_bp import CspParams
from .detector import fuse, rx_background, rx_global
from .godec import DecompositionResult, GodecParams, estimate_cardinality, estimate_rank, godec, turbo_godec
from .hsi_data import HsiCube, flatten, minmax

METHODS = ("grx", "lsmad", "turbo")
DEFAULT_ALPHA = 0.4


@dataclass
class Detection:
    method: str
    scores: np.ndarray  # H x W in [0, 1]
    decomposition: DecompositionResult | None = None


def default_params(cube: HsiCube, rank: int | None = None, card: int | None = None,
                   **kw) -> GodecParams:
    X = flatten(cube)
    if rank is None:
        rank = estimate_rank(X)
    if card is None:
        card = estimate_cardinality(X)
    return GodecParams(rank=rank, card=card, **kw)


def detect(cube: HsiCube, method: str, params: GodecParams | None = None,
           csp: CspParams | None = None, alpha: float = DEFAULT_ALPHA,
           backend: str | None = None) -> Detection:
    """Score map for ``method`` in {grx, lsmad, turbo}, min-max scaled to [0, 1]."""
    X = flatten(cube)
    if method == "grx":
        return Detection(method, minmax(rx_global(X)))
    if params is None:
        params = default_params(cube)
    if method == "lsmad":
        res = godec(X, params)
        return Detection(method, minmax(rx_background(X, res.L)), res)
    if method == "turbo":
        res = turbo_godec(X, params, csp or CspParams(), backend=backend)
        return Detection(method, fuse(rx_background(X, res.L), res.J, alpha), res)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")

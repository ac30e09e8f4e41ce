"""Cluster-sparsity support inference on a 4-connected pixel grid.

Each pixel carries a binary support variable ``a``. The channel-summed residual
``t`` observed at a pixel is modelled as spike-and-slab::

    t | a=0 ~ N(0, sigma1_sq)              (noise only)
    t | a=1 ~ N(0, sigma1_sq + sigma2_sq)  (slab integrated out)

and neighbouring supports are coupled by positive pairwise potentials
``psi[a_first, a_second]`` where "first" is the left/top pixel of the pair.
Marginals ``p(a=1 | T)`` come from damped synchronous loopy sum-product;
``brute_force_marginals`` enumerates all configurations for small grids.

The compiled kernel in ``_bp_ext`` is used when importable; set
``TURBOGODEC_PURE_PYTHON=1`` to force the numpy kernel.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels

try:
    if os.environ.get("TURBOGODEC_PURE_PYTHON"):
        raise ImportError("pure-python kernel requested")
    from . import _bp_ext as _compiled
except ImportError:
    _compiled = None

BACKENDS = ("compiled", "python") if _compiled is not None else ("python",)
DEFAULT_BACKEND = BACKENDS[0]

SIGMA1_FLOOR = 1e-12
MAD_SCALE = 1.4826
BOUNDARY = 0.5


def _kernel(backend: str | None):
    backend = backend or DEFAULT_BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled BP kernel is not available")
        return _compiled
    if backend == "python":
        return _kernels
    raise ValueError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class CspParams:
    """Parameters of the cluster-sparsity prior and its inference loop.

    ``sigma1_sq``/``sigma2_sq`` of ``None`` mean "estimate from T"
    (``noise_estimation='auto'``). ``inner_iters=0`` skips message passing,
    leaving J equal to the local evidence. ``tol`` is the early-exit threshold
    on the largest message change between sweeps.
    """

    psi00: float = 0.5
    psi01: float = 0.3
    psi10: float = 0.3
    psi11: float = 0.5
    sigma1_sq: float | None = None
    sigma2_sq: float | None = None
    damping: float = 0.5
    inner_iters: int = 100
    tol: float = 1e-8
    residual_mode: str = "signed"

    def __post_init__(self):
        for name in ("psi00", "psi01", "psi10", "psi11"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a positive finite number, got {v}")
        if (self.sigma1_sq is None) != (self.sigma2_sq is None):
            raise ValueError("sigma1_sq and sigma2_sq must be given together or not at all")
        for name in ("sigma1_sq", "sigma2_sq"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if int(self.inner_iters) != self.inner_iters or self.inner_iters < 0:
            raise ValueError(f"inner_iters must be a non-negative integer, got {self.inner_iters}")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.residual_mode not in ("signed", "abs"):
            raise ValueError("residual_mode must be 'signed' or 'abs'")

    @property
    def psi(self) -> tuple[float, float, float, float]:
        return (self.psi00, self.psi01, self.psi10, self.psi11)

    @property
    def noise_estimation(self) -> str:
        return "auto" if self.sigma1_sq is None else "manual"

    @classmethod
    def uninformative(cls, **kw) -> "CspParams":
        return cls(psi00=1.0, psi01=1.0, psi10=1.0, psi11=1.0, **kw)


@dataclass
class MessageField:
    """Directional messages plus the local evidence they are combined with."""

    gl: np.ndarray
    gr: np.ndarray
    gt: np.ndarray
    gb: np.ndarray
    pi_in: np.ndarray
    sweeps: int = 0
    last_change: float = field(default=float("nan"))

    @classmethod
    def init(cls, pi_in: np.ndarray) -> "MessageField":
        pi_in = np.ascontiguousarray(pi_in, dtype=np.float64)
        h, w = pi_in.shape
        return cls(*(np.full((h, w), BOUNDARY) for _ in range(4)), pi_in=pi_in)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pi_in.shape

    def copy(self) -> "MessageField":
        return replace(self, gl=self.gl.copy(), gr=self.gr.copy(),
                       gt=self.gt.copy(), gb=self.gb.copy())

    @property
    def pi_out(self) -> np.ndarray:
        return pi_out(self)


# -- local evidence ----------------------------------------------------------

def channel_sum(X, L, shape: tuple[int, int], mode: str = "signed") -> np.ndarray:
    """Per-pixel sum over channels of ``X - L``, reshaped to the H x W grid."""
    R = np.asarray(X, dtype=np.float64) - np.asarray(L, dtype=np.float64)
    if mode == "abs":
        R = np.abs(R)
    elif mode != "signed":
        raise ValueError(f"unknown residual mode {mode!r}")
    return R.sum(axis=1).reshape(shape)


def estimate_noise_params(T) -> tuple[float, float]:
    """Robust (sigma1_sq, sigma2_sq) from a summed-residual grid.

    sigma1 comes from the median absolute deviation; sigma2_sq is the mean
    square of the largest 2% of |T| (the slab is zero-mean), kept at least
    ten times sigma1_sq.
    """
    t = np.asarray(T, dtype=np.float64).ravel()
    mad = np.median(np.abs(t - np.median(t)))
    s1 = max((MAD_SCALE * mad) ** 2, SIGMA1_FLOOR)
    n_top = max(1, math.ceil(0.02 * t.size))
    top = np.sort(np.abs(t))[-n_top:]
    s2 = max(float(np.mean(top ** 2)), 10.0 * s1)
    if np.ptp(t) == 0:
        warnings.warn("summed residual is constant; noise variances fall back to floors",
                      RuntimeWarning, stacklevel=2)
    return s1, s2


def pi_in(T, sigma1_sq: float, sigma2_sq: float) -> np.ndarray:
    """Local evidence P(a=1 | t) under a flat support prior, in log space."""
    t2 = np.asarray(T, dtype=np.float64) ** 2
    s = sigma1_sq + sigma2_sq
    # log N(t; 0, sigma1_sq) - log N(t; 0, s)
    log_ratio = 0.5 * math.log(s / sigma1_sq) - 0.5 * t2 * (1.0 / sigma1_sq - 1.0 / s)
    return 1.0 / (1.0 + np.exp(np.clip(log_ratio, -700.0, 700.0)))


# -- message passing ---------------------------------------------------------

def bp_sweep(fld: MessageField, psi, damping: float, backend: str | None = None) -> MessageField:
    """Return a new field after one damped synchronous sweep."""
    if damping == 0:
        return fld.copy()
    gl, gr, gt, gb, delta = _kernel(backend).sweep(
        fld.pi_in, fld.gl, fld.gr, fld.gt, fld.gb, tuple(psi), float(damping))
    return MessageField(gl, gr, gt, gb, fld.pi_in, fld.sweeps + 1, delta)


def run_bp(fld: MessageField, psi, damping: float, n_sweeps: int, tol: float = 0.0,
           backend: str | None = None) -> MessageField:
    out = fld.copy()
    if n_sweeps > 0:
        done, delta = _kernel(backend).run_sweeps(
            out.pi_in, out.gl, out.gr, out.gt, out.gb,
            tuple(psi), float(damping), int(n_sweeps), float(tol))
        out.sweeps = fld.sweeps + done
        out.last_change = delta
    return out


def pi_out(fld: MessageField) -> np.ndarray:
    """Prior message from the MRF: product of the four incoming messages."""
    on = fld.gl * fld.gr * fld.gt * fld.gb
    off = (1.0 - fld.gl) * (1.0 - fld.gr) * (1.0 - fld.gt) * (1.0 - fld.gb)
    return on / np.maximum(off + on, _kernels.DEN_FLOOR)


def marginals(p_in, p_out) -> np.ndarray:
    """Fuse local evidence and prior message into P(a=1 | T).

    Contradictory certainties (0/0) resolve to 0.
    """
    p_in = np.asarray(p_in, dtype=np.float64)
    p_out = np.asarray(p_out, dtype=np.float64)
    on = p_in * p_out
    den = on + (1.0 - p_in) * (1.0 - p_out)
    with np.errstate(invalid="ignore", divide="ignore"):
        J = np.where(den > 0, on / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(J, 0.0, 1.0)


def resolve_sigmas(T, params: CspParams) -> tuple[float, float]:
    if params.sigma1_sq is not None:
        return params.sigma1_sq, params.sigma2_sq
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return estimate_noise_params(T)


def infer(T, params: CspParams, backend: str | None = None, return_field: bool = False):
    """Anomaly marginals J for a summed-residual grid ``T``."""
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2:
        raise ValueError("T must be an H x W grid")
    s1, s2 = resolve_sigmas(T, params)
    fld = MessageField.init(pi_in(T, s1, s2))
    fld = run_bp(fld, params.psi, params.damping, params.inner_iters, params.tol, backend)
    J = marginals(fld.pi_in, pi_out(fld))
    return (J, fld) if return_field else J


# -- exact oracle ------------------------------------------------------------

MAX_ORACLE_PIXELS = 20


def _grid_edges(h: int, w: int) -> list[tuple[int, int]]:
    edges = []
    for n in range(h):
        for m in range(w):
            i = n * w + m
            if m + 1 < w:
                edges.append((i, i + 1))
            if n + 1 < h:
                edges.append((i, i + w))
    return edges


def brute_force_marginals(T, params: CspParams, chunk: int = 1 << 16) -> np.ndarray:
    """Exact P(a=1 | T) by summing the joint over every support configuration.

    Shares nothing with the message-passing path beyond the model definition.
    """
    T = np.asarray(T, dtype=np.float64)
    h, w = T.shape
    n = h * w
    if n > MAX_ORACLE_PIXELS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_PIXELS} pixels, grid has {n}")
    s1, s2 = resolve_sigmas(T, params)
    t = T.ravel()

    def log_normal(x, var):
        return -0.5 * np.log(2.0 * np.pi * var) - x * x / (2.0 * var)

    unary = np.stack([log_normal(t, s1), log_normal(t, s1 + s2)], axis=1)  # (n, 2)
    log_psi = np.log(np.array([[params.psi00, params.psi01],
                               [params.psi10, params.psi11]]))
    edges = np.array(_grid_edges(h, w), dtype=np.int64).reshape(-1, 2)

    total = 2 ** n
    weighted_on = np.zeros(n)
    # two passes: find the max log-weight, then accumulate stably
    bits = np.arange(n, dtype=np.int64)

    def chunk_logw(start, stop):
        states = ((np.arange(start, stop, dtype=np.int64)[:, None] >> bits) & 1).astype(np.int8)
        lw = unary[bits, states].sum(axis=1)
        if len(edges):
            lw = lw + log_psi[states[:, edges[:, 0]], states[:, edges[:, 1]]].sum(axis=1)
        return states, lw

    peak = -np.inf
    for start in range(0, total, chunk):
        _, lw = chunk_logw(start, min(total, start + chunk))
        peak = max(peak, float(lw.max()))
    z = 0.0
    for start in range(0, total, chunk):
        states, lw = chunk_logw(start, min(total, start + chunk))
        wts = np.exp(lw - peak)
        z += wts.sum()
        weighted_on += wts @ states
    return (weighted_on / z).reshape(h, w)

"""Hyperspectral cube container, pixel-matrix view and file I/O.

The on-disk cube format (HSIC) is::

    b"HSIC" | version u8 (=1) | H u32le | W u32le | C u32le | H*W*C f64le

with the payload in band-sequential order (C planes, each H x W row-major).
Masks are plain CSV grids of 0/1; score maps are written as CSV or ASCII PGM.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"HSIC"
VERSION = 1
_HEADER = struct.Struct("<4sBIII")
PGM_MAXVAL = 65535


class HsiFormatError(ValueError):
    """Raised for malformed cube, mask or map files."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HsiCube:
    """An H x W x C hyperspectral cube.

    ``data`` is stored pixel-interleaved as an ``(H, W, C)`` float64 array and is
    read-only; serialization converts to band-sequential order.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 3:
            raise ValueError(f"cube must be 3-D (H, W, C), got shape {a.shape}")
        h, w, c = a.shape
        if h < 2 or w < 2 or c < 1:
            raise ValueError(f"cube needs H >= 2, W >= 2, C >= 1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def from_band_sequential(cls, values, height: int, width: int, channels: int) -> "HsiCube":
        v = np.asarray(values, dtype=np.float64)
        if v.size != height * width * channels:
            raise ValueError(
                f"expected {height * width * channels} values for "
                f"{height}x{width}x{channels}, got {v.size}"
            )
        return cls(v.reshape(channels, height, width).transpose(1, 2, 0))

    def band_sequential(self) -> np.ndarray:
        """Values flattened in band-sequential (C, H, W) order."""
        return np.ascontiguousarray(self.data.transpose(2, 0, 1)).ravel()

    def __eq__(self, other):
        if not isinstance(other, HsiCube):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PixelMatrix:
    """Row-per-pixel view of a cube: row ``p`` is the spectrum of pixel
    ``(p // W, p % W)``. Supports ``np.asarray``."""

    values: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.height * self.width:
            raise ValueError(
                f"matrix of shape {v.shape} does not match a {self.height}x{self.width} grid"
            )
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n_pixels(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)


def flatten(cube: HsiCube) -> PixelMatrix:
    h, w, c = cube.shape
    return PixelMatrix(cube.data.reshape(h * w, c), h, w)


def unflatten(pm: PixelMatrix) -> HsiCube:
    return HsiCube(pm.values.reshape(pm.height, pm.width, pm.channels))


def normalize(cube: HsiCube) -> HsiCube:
    """Scale by the global maximum so values land in [0, 1].

    A single global factor keeps the relative band contrast intact.
    """
    peak = cube.data.max()
    if peak <= 0:
        raise ValueError("cannot normalize a cube whose maximum is not positive")
    return HsiCube(cube.data / peak)


def save_cube(cube: HsiCube, path) -> None:
    h, w, c = cube.shape
    payload = cube.band_sequential().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, h, w, c))
        fh.write(payload)


def load_cube(path) -> HsiCube:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such cube file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise HsiFormatError(f"{path}: truncated header")
    magic, version, h, w, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise HsiFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise HsiFormatError(f"{path}: unsupported version {version}")
    n = h * w * c
    body = raw[_HEADER.size:]
    if len(body) != 8 * n:
        raise HsiFormatError(
            f"{path}: header declares {n} values but payload holds {len(body) / 8:g}"
        )
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise HsiFormatError(f"{path}: payload contains non-finite values")
    try:
        return HsiCube.from_band_sequential(values, h, w, c)
    except ValueError as exc:
        raise HsiFormatError(f"{path}: {exc}") from exc


def convert_raw(raw_path, height: int, width: int, channels: int,
                dtype: str = "<f8", interleave: str = "bsq") -> HsiCube:
    """Read a headerless raw cube given its dimensions and layout.

    ``interleave`` is one of ``bsq`` (C, H, W), ``bil`` (H, C, W) or
    ``bip`` (H, W, C).
    """
    values = np.fromfile(raw_path, dtype=np.dtype(dtype)).astype(np.float64)
    n = height * width * channels
    if values.size != n:
        raise HsiFormatError(f"{raw_path}: expected {n} values, found {values.size}")
    if interleave == "bsq":
        data = values.reshape(channels, height, width).transpose(1, 2, 0)
    elif interleave == "bil":
        data = values.reshape(height, channels, width).transpose(0, 2, 1)
    elif interleave == "bip":
        data = values.reshape(height, width, channels)
    else:
        raise ValueError(f"unknown interleave {interleave!r}")
    return HsiCube(data)


# -- masks and score maps ---------------------------------------------------

def _read_csv_grid(path) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([tok.strip() for tok in line.split(",")])
    if not rows:
        raise HsiFormatError(f"{path}: empty grid")
    if len({len(r) for r in rows}) != 1:
        raise HsiFormatError(f"{path}: ragged rows")
    return rows


def parse_mask(text: str) -> np.ndarray:
    rows = [[t.strip() for t in ln.split(",")] for ln in text.strip().splitlines() if ln.strip()]
    return _mask_from_rows(rows, "<string>")


def _mask_from_rows(rows, where) -> np.ndarray:
    if not rows:
        raise HsiFormatError(f"{where}: empty grid")
    if len({len(r) for r in rows}) != 1:
        raise HsiFormatError(f"{where}: ragged rows")
    bad = {t for r in rows for t in r if t not in ("0", "1")}
    if bad:
        raise HsiFormatError(f"{where}: non-binary mask entries {sorted(bad)[:3]}")
    return np.array([[int(t) for t in r] for r in rows], dtype=np.uint8)


def load_mask(path) -> np.ndarray:
    """Read an H x W binary ground-truth mask (uint8, 1 = anomalous)."""
    return _mask_from_rows(_read_csv_grid(path), path)


def save_mask(mask: np.ndarray, path) -> None:
    m = np.asarray(mask)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in m:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def check_mask(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError("mask must be a 2-D grid")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask entries must be 0 or 1")
    if m.all() or not m.any():
        raise ValueError("mask must contain both anomalous and background pixels")
    return m.astype(bool)


def minmax(scores: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    s = np.asarray(scores, dtype=np.float64)
    lo, hi = s.min(), s.max()
    if hi - lo <= 0:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def load_map(path) -> np.ndarray:
    rows = _read_csv_grid(path)
    try:
        m = np.array([[float(t) for t in r] for r in rows])
    except ValueError as exc:
        raise HsiFormatError(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(m)):
        raise HsiFormatError(f"{path}: non-finite score")
    return m


def write_map(scores: np.ndarray, path, format: str = "csv") -> None:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("score map must be 2-D")
    if not np.all(np.isfinite(s)):
        raise ValueError("score map contains non-finite values")
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in s:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    elif format == "pgm":
        q = np.rint(minmax(s) * PGM_MAXVAL).astype(np.int64)
        h, w = s.shape
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(f"P2\n{w} {h}\n{PGM_MAXVAL}\n")
            for row in q:
                fh.write(" ".join(str(v) for v in row) + "\n")
    else:
        raise ValueError(f"unknown map format {format!r}")


def read_pgm(path) -> np.ndarray:
    tokens = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise HsiFormatError(f"{path}: not an ASCII PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    px = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    if px.size != w * h or px.max(initial=0) > maxval:
        raise HsiFormatError(f"{path}: bad PGM payload")
    return px.reshape(h, w)

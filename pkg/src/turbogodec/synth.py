"""Seeded synthetic scenes: low-rank background + planted anomalies + noise.

Seeding contract: all randomness of ``gen_scene``/``gen_dispersed_scene`` comes
from one ``numpy.random.Generator(PCG64(seed))`` stream, drawn in this order:

1. background abundances, (H*W) x r, uniform [0, 1)
2. endmember spectra, r x C, uniform [0, 1)
3. (dispersed scenes only) one permutation of the H*W pixel indices
4. noise, (H*W) x C, standard normal, scaled by ``noise_sigma``

The background is ``abundances @ endmembers / r``. The anomaly signature is
the background mean spectrum reversed plus its mean level, scaled to a peak of
1; anomalous pixel rows of the sparse part are ``amplitude * signature``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .hsi_data import HsiCube

MAX_ANOMALY_FRACTION = 0.1


@dataclass(frozen=True)
class Cluster:
    row: int
    col: int
    height: int
    width: int
    amplitude: float

    def pixels(self, grid_width: int) -> np.ndarray:
        rr, cc = np.mgrid[self.row:self.row + self.height, self.col:self.col + self.width]
        return (rr * grid_width + cc).ravel()


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    channels: int
    rank: int
    clusters: tuple[Cluster, ...] = ()
    dispersed_count: int = 0
    dispersed_amplitude: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.height < 2 or self.width < 2 or self.channels < 1:
            raise ValueError("scene needs height >= 2, width >= 2, channels >= 1")
        if not 1 <= self.rank <= self.channels:
            raise ValueError("rank must lie in [1, channels]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.dispersed_count < 0:
            raise ValueError("dispersed_count must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        occupied = np.zeros((self.height, self.width), dtype=bool)
        for c in self.clusters:
            if c.height < 1 or c.width < 1:
                raise ValueError(f"empty cluster {c}")
            if (c.row < 0 or c.col < 0 or c.row + c.height > self.height
                    or c.col + c.width > self.width):
                raise ValueError(f"cluster {c} does not fit in the grid")
            block = occupied[c.row:c.row + c.height, c.col:c.col + c.width]
            if block.any():
                raise ValueError(f"cluster {c} overlaps another cluster")
            block[...] = True
        total = int(occupied.sum()) + self.dispersed_count
        if total >= MAX_ANOMALY_FRACTION * self.height * self.width:
            raise ValueError(
                f"{total} anomalous pixels is not below 10% of the {self.height}x{self.width} grid")


class Scene(NamedTuple):
    cube: HsiCube
    mask: np.ndarray  # uint8 H x W
    L: np.ndarray     # (H*W) x C
    S: np.ndarray     # (H*W) x C


def _background(rng, spec: SceneSpec):
    n = spec.height * spec.width
    A = rng.random((n, spec.rank))
    B = rng.random((spec.rank, spec.channels))
    L = A @ B / spec.rank
    mean = L.mean(axis=0)
    sig = mean[::-1] + mean.mean()
    return L, sig / sig.max()


def _assemble(rng, spec: SceneSpec, L, S) -> Scene:
    noise = rng.standard_normal(L.shape) * spec.noise_sigma
    X = L + S + noise
    mask = np.any(S != 0, axis=1).reshape(spec.height, spec.width).astype(np.uint8)
    return Scene(HsiCube(X.reshape(spec.height, spec.width, spec.channels)), mask, L, S)


def gen_scene(spec: SceneSpec) -> Scene:
    """Background plus the scene's rectangular anomaly clusters."""
    if spec.dispersed_count:
        raise ValueError("use gen_dispersed_scene for dispersed anomalies")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    L, sig = _background(rng, spec)
    S = np.zeros_like(L)
    for c in spec.clusters:
        S[c.pixels(spec.width)] = c.amplitude * sig
    return _assemble(rng, spec, L, S)


def max_isolated(height: int, width: int) -> int:
    """Largest set of pixels with no two within Chebyshev distance 1."""
    return ((height + 1) // 2) * ((width + 1) // 2)


def gen_dispersed_scene(spec: SceneSpec) -> Scene:
    """Background plus ``dispersed_count`` isolated single-pixel anomalies.

    Positions are taken greedily along a seeded permutation, skipping any pixel
    adjacent (8-neighbourhood) to one already chosen.
    """
    if spec.clusters:
        raise ValueError("dispersed scenes take no clusters")
    h, w, count = spec.height, spec.width, spec.dispersed_count
    if count > max_isolated(h, w):
        raise ValueError(f"{count} isolated anomalies cannot fit in a {h}x{w} grid")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    L, sig = _background(rng, spec)
    order = rng.permutation(h * w)
    blocked = np.zeros((h + 2, w + 2), dtype=bool)
    chosen = []
    for p in order:
        if len(chosen) == count:
            break
        r, c = divmod(int(p), w)
        if blocked[r + 1, c + 1]:
            continue
        chosen.append(p)
        blocked[r:r + 3, c:c + 3] = True
    if len(chosen) < count:
        raise ValueError(f"could only place {len(chosen)} of {count} isolated anomalies")
    S = np.zeros_like(L)
    S[np.sort(np.array(chosen, dtype=np.int64))] = spec.dispersed_amplitude * sig
    return _assemble(rng, spec, L, S)


def make_scene(spec: SceneSpec) -> Scene:
    return gen_dispersed_scene(spec) if spec.dispersed_count else gen_scene(spec)


def random_clusters(height: int, width: int, n_clusters: int, sizes=(2, 3),
                    amplitude: float = 1.0, seed: int = 0, margin: int = 1) -> tuple[Cluster, ...]:
    """Place ``n_clusters`` square clusters with side drawn from ``sizes`` at
    random, keeping at least ``margin`` background pixels between any two.

    Uses its own generator so scene layout and scene content stay independent.
    """
    rng = np.random.Generator(np.random.PCG64([seed, 0xC1A5]))
    taken = np.zeros((height, width), dtype=bool)
    out = []
    for _ in range(n_clusters):
        for _attempt in range(1000):
            side = int(rng.choice(sizes))
            r = int(rng.integers(0, height - side + 1))
            c = int(rng.integers(0, width - side + 1))
            r0, c0 = max(r - margin, 0), max(c - margin, 0)
            if not taken[r0:r + side + margin, c0:c + side + margin].any():
                taken[r:r + side, c:c + side] = True
                out.append(Cluster(r, c, side, side, amplitude))
                break
        else:
            raise ValueError("could not place all clusters")
    return tuple(out)


# -- key=value scene configs ------------------------------------------------

_INT_KEYS = {"height", "width", "channels", "rank", "dispersed_count", "seed"}
_FLOAT_KEYS = {"noise_sigma", "dispersed_amplitude"}


def parse_kv(text: str) -> list[tuple[str, str]]:
    """Parse UTF-8 ``key=value`` lines; ``#`` starts a comment."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip().replace("-", "_"), value.strip()))
    return pairs


def scene_spec_from_pairs(pairs) -> SceneSpec:
    """Build a SceneSpec from parsed ``key=value`` pairs.

    ``cluster=row,col,height,width,amplitude`` lines place clusters explicitly;
    ``random_clusters=n,amplitude[,side,side...]`` places ``n`` square clusters
    with :func:`random_clusters` using the scene seed.
    """
    kw: dict = {}
    clusters = []
    random_spec = None
    for key, value in pairs:
        try:
            if key == "cluster":
                r, c, hh, ww, amp = (t.strip() for t in value.split(","))
                clusters.append(Cluster(int(r), int(c), int(hh), int(ww), float(amp)))
            elif key == "random_clusters":
                parts = [t.strip() for t in value.split(",")]
                sizes = tuple(int(t) for t in parts[2:]) or (2, 3)
                random_spec = (int(parts[0]), float(parts[1]), sizes)
            elif key in _INT_KEYS:
                kw[key] = int(value)
            elif key in _FLOAT_KEYS:
                kw[key] = float(value)
            else:
                raise ValueError(f"unknown scene key {key!r}")
        except (TypeError, IndexError) as exc:
            raise ValueError(f"bad value for scene key {key!r}: {value!r}") from exc
    missing = {"height", "width", "channels", "rank"} - kw.keys()
    if missing:
        raise ValueError(f"scene config missing {sorted(missing)}")
    if random_spec is not None:
        n, amp, sizes = random_spec
        clusters += random_clusters(kw["height"], kw["width"], n, sizes, amp, kw.get("seed", 0))
    return SceneSpec(clusters=tuple(clusters), **kw)


def parse_scene_config(text: str) -> SceneSpec:
    return scene_spec_from_pairs(parse_kv(text))


def format_scene_config(spec: SceneSpec) -> str:
    lines = [f"height={spec.height}", f"width={spec.width}", f"channels={spec.channels}",
             f"rank={spec.rank}", f"noise_sigma={spec.noise_sigma!r}", f"seed={spec.seed}"]
    if spec.dispersed_count:
        lines += [f"dispersed_count={spec.dispersed_count}",
                  f"dispersed_amplitude={spec.dispersed_amplitude!r}"]
    lines += [f"cluster={c.row},{c.col},{c.height},{c.width},{c.amplitude!r}" for c in spec.clusters]
    return "\n".join(lines) + "\n"

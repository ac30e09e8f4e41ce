"""Time the message-passing kernel on each available backend.

    python3 benchmarks/bench_bp.py [--sizes 64 128 256] [--sweeps 100] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from turbogodec.csp_bp import BACKENDS, MessageField, run_bp

PSI = (0.5, 0.3, 0.3, 0.5)


def time_backend(backend: str, pi: np.ndarray, sweeps: int, repeat: int) -> tuple[float, MessageField]:
    best = float("inf")
    out = None
    for _ in range(repeat):
        fld = MessageField.init(pi)
        t0 = time.perf_counter()
        out = run_bp(fld, PSI, 0.5, sweeps, tol=0.0, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--sweeps", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    print(f"backends: {', '.join(BACKENDS)}; {args.sweeps} sweeps, best of {args.repeat}")
    print(f"{'grid':>9}  " + "  ".join(f"{b:>10}" for b in BACKENDS) + "  speedup  identical")
    rng = np.random.default_rng(0)
    for n in args.sizes:
        pi = rng.random((n, n))
        results = {b: time_backend(b, pi, args.sweeps, args.repeat) for b in BACKENDS}
        cols = "  ".join(f"{results[b][0] * 1e3:8.1f}ms" for b in BACKENDS)
        if len(BACKENDS) == 2:
            a, b = (results[k][1] for k in BACKENDS)
            speed = results["python"][0] / results["compiled"][0]
            same = all(x.tobytes() == y.tobytes() for x, y in
                       zip((a.gl, a.gr, a.gt, a.gb), (b.gl, b.gr, b.gt, b.gb)))
            cols += f"  {speed:6.1f}x  {same}"
        print(f"{n:>4}x{n:<4}  {cols}")


if __name__ == "__main__":
    main()

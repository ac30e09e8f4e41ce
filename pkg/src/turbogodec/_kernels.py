"""Pure-numpy message-passing kernel.

Mirrors ``_bp_ext.pyx`` operation for operation (same association order, no
fused multiply-add) so both backends produce bit-identical messages.

Message arrays are H x W grids: ``gl[n, m]`` is the message arriving at pixel
(n, m) from the factor it shares with its left neighbour, and likewise for
``gr`` (right), ``gt`` (top) and ``gb`` (bottom). Entries with no neighbour in
that direction are never written.
"""
from __future__ import annotations

import numpy as np

DEN_FLOOR = 1e-300


def sweep(pi, gl, gr, gt, gb, psi, eta):
    """One damped synchronous sweep. Returns the four new grids and the
    largest absolute message change."""
    p00, p01, p10, p11 = psi
    c0l = p00 + p01
    c1l = p11 + p10
    c0r = p00 + p10
    c1r = p11 + p01
    q = 1.0 - pi

    ngl, ngr, ngt, ngb = gl.copy(), gr.copy(), gt.copy(), gb.copy()

    # from the left neighbour (n, m-1), excluding its r message
    s = (slice(None), slice(None, -1))
    d = (slice(None), slice(1, None))
    a = (1.0 - gl[s]) * (1.0 - gt[s]) * (1.0 - gb[s])
    b = gl[s] * gt[s] * gb[s]
    ngl[d] = _update(gl[d], q[s] * a, pi[s] * b, p01, p11, c0l, c1l, eta)

    # from the right neighbour (n, m+1), excluding its l message
    s, d = d, s
    a = (1.0 - gr[s]) * (1.0 - gt[s]) * (1.0 - gb[s])
    b = gr[s] * gt[s] * gb[s]
    ngr[d] = _update(gr[d], q[s] * a, pi[s] * b, p10, p11, c0r, c1r, eta)

    # from the top neighbour (n-1, m), excluding its b message
    s = (slice(None, -1), slice(None))
    d = (slice(1, None), slice(None))
    a = (1.0 - gl[s]) * (1.0 - gr[s]) * (1.0 - gt[s])
    b = gl[s] * gr[s] * gt[s]
    ngt[d] = _update(gt[d], q[s] * a, pi[s] * b, p01, p11, c0l, c1l, eta)

    # from the bottom neighbour (n+1, m), excluding its t message
    s, d = d, s
    a = (1.0 - gl[s]) * (1.0 - gr[s]) * (1.0 - gb[s])
    b = gl[s] * gr[s] * gb[s]
    ngb[d] = _update(gb[d], q[s] * a, pi[s] * b, p10, p11, c0r, c1r, eta)

    delta = max(
        float(np.max(np.abs(ngl - gl), initial=0.0)),
        float(np.max(np.abs(ngr - gr), initial=0.0)),
        float(np.max(np.abs(ngt - gt), initial=0.0)),
        float(np.max(np.abs(ngb - gb), initial=0.0)),
    )
    return ngl, ngr, ngt, ngb, delta


def _update(old, u0, u1, k0, k1, c0, c1, eta):
    num = k0 * u0 + k1 * u1
    den = np.maximum(c0 * u0 + c1 * u1, DEN_FLOOR)
    return old + eta * (num / den - old)


def run_sweeps(pi, gl, gr, gt, gb, psi, eta, n_sweeps, tol):
    """Run up to ``n_sweeps`` sweeps in place; stop early once the largest
    message change drops below ``tol``. Returns (sweeps_run, last_change)."""
    delta = 0.0
    done = 0
    for _ in range(n_sweeps):
        ngl, ngr, ngt, ngb, delta = sweep(pi, gl, gr, gt, gb, psi, eta)
        gl[...] = ngl
        gr[...] = ngr
        gt[...] = ngt
        gb[...] = ngb
        done += 1
        if delta < tol:
            break
    return done, delta

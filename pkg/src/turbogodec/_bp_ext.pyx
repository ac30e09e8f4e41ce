# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled message-passing kernel; see _kernels.py for the reference."""

import numpy as np
from libc.math cimport fabs

cdef double DEN_FLOOR = 1e-300


cdef inline double _upd(double old, double u0, double u1, double k0, double k1,
                        double c0, double c1, double eta) nogil:
    cdef double num = k0 * u0 + k1 * u1
    cdef double den = c0 * u0 + c1 * u1
    if den < DEN_FLOOR:
        den = DEN_FLOOR
    return old + eta * (num / den - old)


cdef double _sweep(const double[:, ::1] pi,
                   double[:, ::1] gl, double[:, ::1] gr,
                   double[:, ::1] gt, double[:, ::1] gb,
                   double[:, ::1] ngl, double[:, ::1] ngr,
                   double[:, ::1] ngt, double[:, ::1] ngb,
                   double p00, double p01, double p10, double p11,
                   double eta) nogil:
    cdef Py_ssize_t H = pi.shape[0], W = pi.shape[1], n, m
    cdef double c0l = p00 + p01, c1l = p11 + p10
    cdef double c0r = p00 + p10, c1r = p11 + p01
    cdef double a, b, p, q, v, delta = 0.0

    for n in range(H):
        for m in range(W):
            if m > 0:
                p = pi[n, m - 1]
                q = 1.0 - p
                a = (1.0 - gl[n, m - 1]) * (1.0 - gt[n, m - 1]) * (1.0 - gb[n, m - 1])
                b = gl[n, m - 1] * gt[n, m - 1] * gb[n, m - 1]
                v = _upd(gl[n, m], q * a, p * b, p01, p11, c0l, c1l, eta)
                ngl[n, m] = v
                if fabs(v - gl[n, m]) > delta:
                    delta = fabs(v - gl[n, m])
            if m < W - 1:
                p = pi[n, m + 1]
                q = 1.0 - p
                a = (1.0 - gr[n, m + 1]) * (1.0 - gt[n, m + 1]) * (1.0 - gb[n, m + 1])
                b = gr[n, m + 1] * gt[n, m + 1] * gb[n, m + 1]
                v = _upd(gr[n, m], q * a, p * b, p10, p11, c0r, c1r, eta)
                ngr[n, m] = v
                if fabs(v - gr[n, m]) > delta:
                    delta = fabs(v - gr[n, m])
            if n > 0:
                p = pi[n - 1, m]
                q = 1.0 - p
                a = (1.0 - gl[n - 1, m]) * (1.0 - gr[n - 1, m]) * (1.0 - gt[n - 1, m])
                b = gl[n - 1, m] * gr[n - 1, m] * gt[n - 1, m]
                v = _upd(gt[n, m], q * a, p * b, p01, p11, c0l, c1l, eta)
                ngt[n, m] = v
                if fabs(v - gt[n, m]) > delta:
                    delta = fabs(v - gt[n, m])
            if n < H - 1:
                p = pi[n + 1, m]
                q = 1.0 - p
                a = (1.0 - gl[n + 1, m]) * (1.0 - gr[n + 1, m]) * (1.0 - gb[n + 1, m])
                b = gl[n + 1, m] * gr[n + 1, m] * gb[n + 1, m]
                v = _upd(gb[n, m], q * a, p * b, p10, p11, c0r, c1r, eta)
                ngb[n, m] = v
                if fabs(v - gb[n, m]) > delta:
                    delta = fabs(v - gb[n, m])
    return delta


def sweep(pi, gl, gr, gt, gb, psi, double eta):
    """One damped synchronous sweep; returns new grids and the max change."""
    cdef double p00 = psi[0], p01 = psi[1], p10 = psi[2], p11 = psi[3]
    pi = np.ascontiguousarray(pi, dtype=np.float64)
    gl = np.ascontiguousarray(gl, dtype=np.float64)
    gr = np.ascontiguousarray(gr, dtype=np.float64)
    gt = np.ascontiguousarray(gt, dtype=np.float64)
    gb = np.ascontiguousarray(gb, dtype=np.float64)
    ngl, ngr, ngt, ngb = gl.copy(), gr.copy(), gt.copy(), gb.copy()
    cdef double delta = _sweep(pi, gl, gr, gt, gb, ngl, ngr, ngt, ngb,
                               p00, p01, p10, p11, eta)
    return ngl, ngr, ngt, ngb, delta


def run_sweeps(pi, double[:, ::1] gl, double[:, ::1] gr,
               double[:, ::1] gt, double[:, ::1] gb,
               psi, double eta, Py_ssize_t n_sweeps, double tol):
    """In-place sweeps with early exit; returns (sweeps_run, last_change)."""
    cdef double p00 = psi[0], p01 = psi[1], p10 = psi[2], p11 = psi[3]
    cdef const double[:, ::1] pv = np.ascontiguousarray(pi, dtype=np.float64)
    cdef double[:, ::1] al = np.array(gl), ar = np.array(gr)
    cdef double[:, ::1] at = np.array(gt), ab = np.array(gb)
    cdef double[:, ::1] bl = np.array(gl), br = np.array(gr)
    cdef double[:, ::1] bt = np.array(gt), bb = np.array(gb)
    cdef double[:, ::1] tl, tr, tt, tb
    cdef double delta = 0.0
    cdef Py_ssize_t done = 0
    with nogil:
        while done < n_sweeps:
            delta = _sweep(pv, al, ar, at, ab, bl, br, bt, bb, p00, p01, p10, p11, eta)
            tl = al; al = bl; bl = tl
            tr = ar; ar = br; br = tr
            tt = at; at = bt; bt = tt
            tb = ab; ab = bb; bb = tb
            done += 1
            if delta < tol:
                break
    gl[...] = al
    gr[...] = ar
    gt[...] = at
    gb[...] = ab
    return done, delta

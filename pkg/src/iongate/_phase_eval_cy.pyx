"""Cython implementation of the phase-evaluation kernels.

Same contract as ``_phase_eval_np``; see that module for shapes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def eval_displacements(double[:, ::1] phases, double[:, ::1] ts, double[:, ::1] tc):
    cdef Py_ssize_t n = phases.shape[0], K = phases.shape[1], M = ts.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out = np.empty((n, M), dtype=np.complex128)
    cdef double xr, yi, re, im, xk, yk
    cdef Py_ssize_t j, m, k
    for j in range(n):
        for m in range(M):
            re = 0.0
            im = 0.0
            for k in range(K):
                xk = cos(phases[j, k])
                yk = sin(phases[j, k])
                re += ts[m, k] * xk + tc[m, k] * yk
                im += tc[m, k] * xk - ts[m, k] * yk
            out[j, m] = re + 1j * im
    return out


def eval_objective_and_gradient(double[:, ::1] phases, double[:, ::1] ts, double[:, ::1] tc):
    cdef Py_ssize_t n = phases.shape[0], K = phases.shape[1], M = ts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((n, K), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xs = np.empty((n, K), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ys = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] gv = grad, xv = xs, yv = ys
    cdef double value = 0.0, re, im
    cdef Py_ssize_t j, m, k
    for j in range(n):
        for k in range(K):
            xv[j, k] = cos(phases[j, k])
            yv[j, k] = sin(phases[j, k])
    for j in range(n):
        for m in range(M):
            re = 0.0
            im = 0.0
            for k in range(K):
                re += ts[m, k] * xv[j, k] + tc[m, k] * yv[j, k]
                im += tc[m, k] * xv[j, k] - ts[m, k] * yv[j, k]
            value += re * re + im * im
            for k in range(K):
                gv[j, k] += 2.0 * (
                    xv[j, k] * (re * tc[m, k] - im * ts[m, k])
                    - yv[j, k] * (re * ts[m, k] + im * tc[m, k])
                )
    return value, grad


def eval_couplings(double[:, ::1] phases, double[:, :, ::1] gs, double[:, :, ::1] gc,
                   cnp.intp_t[:, ::1] pairs):
    cdef Py_ssize_t P = gs.shape[0], K = phases.shape[1]
    cdef Py_ssize_t n = phases.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(P, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xs = np.empty((n, K), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ys = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] xv = xs, yv = ys
    cdef double acc, a, b
    cdef Py_ssize_t p, j, jp, k, l
    for j in range(n):
        for k in range(K):
            xv[j, k] = cos(phases[j, k])
            yv[j, k] = sin(phases[j, k])
    for p in range(P):
        j = pairs[p, 0]
        jp = pairs[p, 1]
        acc = 0.0
        for k in range(K):
            for l in range(k + 1):
                a = gs[p, k, l]
                b = gc[p, k, l]
                acc += a * (xv[j, k] * xv[jp, l] + yv[j, k] * yv[jp, l])
                acc += b * (xv[j, k] * yv[jp, l] - yv[j, k] * xv[jp, l])
        out[p] = acc
    return out


def eval_couplings_and_gradients(double[:, ::1] phases, double[:, :, ::1] gs,
                                 double[:, :, ::1] gc, cnp.intp_t[:, ::1] pairs):
    cdef Py_ssize_t P = gs.shape[0], K = phases.shape[1]
    cdef Py_ssize_t n = phases.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.empty(P, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] dg = np.empty((P, 2, K), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xs = np.empty((n, K), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ys = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] xv = xs, yv = ys
    cdef double[:, :, ::1] dgv = dg
    cdef double acc, a, b, axp, ayp, bxp, byp, atx, aty, btx, bty
    cdef Py_ssize_t p, j, jp, k, l
    for j in range(n):
        for k in range(K):
            xv[j, k] = cos(phases[j, k])
            yv[j, k] = sin(phases[j, k])
    for p in range(P):
        j = pairs[p, 0]
        jp = pairs[p, 1]
        acc = 0.0
        for k in range(K):
            axp = 0.0
            ayp = 0.0
            bxp = 0.0
            byp = 0.0
            for l in range(k + 1):
                a = gs[p, k, l]
                b = gc[p, k, l]
                axp += a * xv[jp, l]
                ayp += a * yv[jp, l]
                bxp += b * xv[jp, l]
                byp += b * yv[jp, l]
            acc += xv[j, k] * (axp + byp) + yv[j, k] * (ayp - bxp)
            dgv[p, 0, k] = xv[j, k] * (ayp - bxp) - yv[j, k] * (axp + byp)
        for l in range(K):
            atx = 0.0
            aty = 0.0
            btx = 0.0
            bty = 0.0
            for k in range(l, K):
                a = gs[p, k, l]
                b = gc[p, k, l]
                atx += a * xv[j, k]
                aty += a * yv[j, k]
                btx += b * xv[j, k]
                bty += b * yv[j, k]
            dgv[p, 1, l] = xv[jp, l] * (aty + btx) + yv[jp, l] * (bty - atx)
        g[p] = acc
    return g, dg

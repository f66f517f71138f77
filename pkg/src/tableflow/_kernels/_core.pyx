# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the two hot inner ops: masked softmax and layer norm.

Contracts mirror tableflow._kernels._fallback exactly.  Reductions run
strictly left-to-right and masked entries are excluded from every
reduction, so the exactness guarantees (masked inputs can never perturb
an output bit) hold by construction.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, sqrt

cnp.import_array()


def masked_softmax_fwd(double[:, ::1] scores, const unsigned char[:, ::1] allow):
    """Row-wise softmax over the allowed columns only; disallowed -> exactly 0."""
    cdef Py_ssize_t rows = scores.shape[0]
    cdef Py_ssize_t cols = scores.shape[1]
    out = np.zeros((rows, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double m, denom, e
    cdef bint any_allowed
    for i in range(rows):
        m = -INFINITY
        any_allowed = False
        for j in range(cols):
            if allow[i, j]:
                any_allowed = True
                if scores[i, j] > m:
                    m = scores[i, j]
        if not any_allowed:
            raise ValueError(f"attention row {i} has no allowed keys")
        denom = 0.0
        for j in range(cols):
            if allow[i, j]:
                e = exp(scores[i, j] - m)
                o[i, j] = e
                denom += e
        for j in range(cols):
            if allow[i, j]:
                o[i, j] /= denom
    return out


def masked_softmax_bwd(double[:, ::1] probs, double[:, ::1] dprobs,
                       const unsigned char[:, ::1] allow):
    cdef Py_ssize_t rows = probs.shape[0]
    cdef Py_ssize_t cols = probs.shape[1]
    dscores = np.zeros((rows, cols), dtype=np.float64)
    cdef double[:, ::1] ds = dscores
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            if allow[i, j]:
                acc += dprobs[i, j] * probs[i, j]
        for j in range(cols):
            if allow[i, j]:
                ds[i, j] = probs[i, j] * (dprobs[i, j] - acc)
    return dscores


def layer_norm_fwd(double[:, ::1] x, double[::1] gamma, double[::1] beta,
                   double eps):
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t dim = x.shape[1]
    y = np.empty((rows, dim), dtype=np.float64)
    xhat = np.empty((rows, dim), dtype=np.float64)
    inv_std = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] yv = y
    cdef double[:, ::1] xh = xhat
    cdef double[::1] isv = inv_std
    cdef Py_ssize_t i, j
    cdef double mean, var, d, istd
    for i in range(rows):
        mean = 0.0
        for j in range(dim):
            mean += x[i, j]
        mean /= dim
        var = 0.0
        for j in range(dim):
            d = x[i, j] - mean
            var += d * d
        var /= dim
        istd = 1.0 / sqrt(var + eps)
        isv[i] = istd
        for j in range(dim):
            d = (x[i, j] - mean) * istd
            xh[i, j] = d
            yv[i, j] = d * gamma[j] + beta[j]
    return y, xhat, inv_std


def layer_norm_bwd(double[:, ::1] dy, double[:, ::1] xhat,
                   double[::1] inv_std, double[::1] gamma):
    cdef Py_ssize_t rows = dy.shape[0]
    cdef Py_ssize_t dim = dy.shape[1]
    dx = np.empty((rows, dim), dtype=np.float64)
    dgamma = np.zeros(dim, dtype=np.float64)
    dbeta = np.zeros(dim, dtype=np.float64)
    cdef double[:, ::1] dxv = dx
    cdef double[::1] dgv = dgamma
    cdef double[::1] dbv = dbeta
    cdef Py_ssize_t i, j
    cdef double h, mean_h, mean_hx
    for i in range(rows):
        mean_h = 0.0
        mean_hx = 0.0
        for j in range(dim):
            h = dy[i, j] * gamma[j]
            mean_h += h
            mean_hx += h * xhat[i, j]
        mean_h /= dim
        mean_hx /= dim
        for j in range(dim):
            h = dy[i, j] * gamma[j]
            dxv[i, j] = (h - mean_h - xhat[i, j] * mean_hx) * inv_std[i]
            dgv[j] += dy[i, j] * xhat[i, j]
            dbv[j] += dy[i, j]
    return dx, dgamma, dbeta

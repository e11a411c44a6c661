# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conv1d / maxpool kernels for channels-last (B, T, C) tensors.

Convolutions are lowered to one GEMM per call: patch extraction and the
scatter back (col2im) run as C loops, the products go straight to the BLAS
shipped with scipy. Inputs must be C-contiguous; ``kernels.py`` ensures it.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()


cdef void _gemm(char ta, char tb, int m, int n, int k, floating alpha,
                floating* a, int lda, floating* b, int ldb, floating beta,
                floating* c, int ldc) noexcept nogil:
    # row-major C = op(A) @ op(B), expressed as column-major C^T = op(B)^T op(A)^T
    if floating is float:
        sgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _im2col(floating[:, :, ::1] x, Py_ssize_t K, floating* cols) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t b, t, k, c, s
    cdef floating* row
    for b in range(B):
        for t in range(T):
            row = cols + (b * T + t) * K * C
            for k in range(K):
                s = t + k - pad
                if s < 0 or s >= T:
                    for c in range(C):
                        row[k * C + c] = 0
                else:
                    for c in range(C):
                        row[k * C + c] = x[b, s, c]


def conv1d_forward(floating[:, :, ::1] x, floating[:, :, ::1] w, floating[::1] bias):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t K = w.shape[0], F = w.shape[2]
    cdef Py_ssize_t n, f
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.empty((B, T, F), dtype=dtype)
    cols_arr = np.empty((B * T, K * C), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef floating[:, ::1] cols = cols_arr
    if B * T == 0:
        return out_arr
    with nogil:
        _im2col(x, K, &cols[0, 0])
        for n in range(B * T):
            for f in range(F):
                out[n // T, n % T, f] = bias[f]
        _gemm(c'N', c'N', <int>(B * T), <int>F, <int>(K * C), 1,
              &cols[0, 0], <int>(K * C), &w[0, 0, 0], <int>F, 1,
              &out[0, 0, 0], <int>F)
    return out_arr


def conv1d_backward(floating[:, :, ::1] x, floating[:, :, ::1] w, floating[:, :, ::1] dout,
                    bint need_dx=True):
    """Return (dx, dw, db); dx is None when need_dx is false."""
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t K = w.shape[0], F = w.shape[2]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t b, t, k, c, f, s
    dtype = np.float64 if floating is double else np.float32
    dw_arr = np.zeros((K, C, F), dtype=dtype)
    db_arr = np.zeros(F, dtype=dtype)
    cdef floating[:, :, ::1] dw = dw_arr
    cdef floating[::1] db = db_arr
    if B * T == 0:
        return (np.zeros((B, T, C), dtype=dtype) if need_dx else None), dw_arr, db_arr
    cols_arr = np.empty((B * T, K * C), dtype=dtype)
    cdef floating[:, ::1] cols = cols_arr
    cdef floating* row
    with nogil:
        _im2col(x, K, &cols[0, 0])
        for b in range(B):
            for t in range(T):
                for f in range(F):
                    db[f] += dout[b, t, f]
        _gemm(c'T', c'N', <int>(K * C), <int>F, <int>(B * T), 1,
              &cols[0, 0], <int>(K * C), &dout[0, 0, 0], <int>F, 0,
              &dw[0, 0, 0], <int>F)
    if not need_dx:
        return None, dw_arr, db_arr
    dx_arr = np.zeros((B, T, C), dtype=dtype)
    cdef floating[:, :, ::1] dx = dx_arr
    with nogil:
        # reuse the patch buffer for d(cols)
        _gemm(c'N', c'T', <int>(B * T), <int>(K * C), <int>F, 1,
              &dout[0, 0, 0], <int>F, &w[0, 0, 0], <int>F, 0,
              &cols[0, 0], <int>(K * C))
        for b in range(B):
            for t in range(T):
                row = &cols[b * T + t, 0]
                for k in range(K):
                    s = t + k - pad
                    if s < 0 or s >= T:
                        continue
                    for c in range(C):
                        dx[b, s, c] += row[k * C + c]
    return dx_arr, dw_arr, db_arr


def maxpool2_forward(floating[:, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t To = T // 2
    cdef Py_ssize_t b, t, c
    cdef floating u, v
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.empty((B, To, C), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    with nogil:
        for b in range(B):
            for t in range(To):
                for c in range(C):
                    u = x[b, 2 * t, c]
                    v = x[b, 2 * t + 1, c]
                    out[b, t, c] = u if u >= v else v
    return out_arr


def maxpool2_backward(floating[:, :, ::1] x, floating[:, :, ::1] dout):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t To = T // 2
    cdef Py_ssize_t b, t, c
    dtype = np.float64 if floating is double else np.float32
    dx_arr = np.zeros((B, T, C), dtype=dtype)
    cdef floating[:, :, ::1] dx = dx_arr
    with nogil:
        for b in range(B):
            for t in range(To):
                for c in range(C):
                    if x[b, 2 * t, c] >= x[b, 2 * t + 1, c]:
                        dx[b, 2 * t, c] = dout[b, t, c]
                    else:
                        dx[b, 2 * t + 1, c] = dout[b, t, c]
    return dx_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM direction kernels.

Same contract as ``lstm_py``: time-major float64 arrays, gate order
(input, forget, cell, output), masked steps carry state and emit zeros.
Recurrent products go through BLAS dgemm; gate math is plain C loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


cdef inline double _tanh(double x) nogil:
    # exp is several times cheaper than libm tanh; saturates cleanly at +-1
    return 1.0 - 2.0 / (1.0 + exp(2.0 * x))


cdef void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                double* a, int lda, double* b, int ldb, double beta,
                double* c, int ldc) noexcept nogil:
    # row-major C(m x n) = op(A) op(B): swap operands for column-major BLAS
    dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def lstm_forward(double[:, :, ::1] xproj, double[:, ::1] w_hh, mask, bint reverse=False):
    cdef Py_ssize_t T = xproj.shape[0], B = xproj.shape[1], G = xproj.shape[2]
    cdef Py_ssize_t H = G // 4
    cdef double[:, ::1] m = np.ascontiguousarray(mask, dtype=np.float64)
    out_a = np.zeros((T, B, H))
    gates_a = np.zeros((T, B, G))
    tanh_c_a = np.zeros((T, B, H))
    h_prev_a = np.zeros((T, B, H))
    c_prev_a = np.zeros((T, B, H))
    cdef double[:, :, ::1] out = out_a
    cdef double[:, :, ::1] gates = gates_a
    cdef double[:, :, ::1] tanh_c = tanh_c_a
    cdef double[:, :, ::1] h_prev = h_prev_a
    cdef double[:, :, ::1] c_prev = c_prev_a
    cdef double[:, ::1] h = np.zeros((B, H))
    cdef double[:, ::1] c = np.zeros((B, H))
    cdef double[:, ::1] z = np.zeros((B, G))
    cdef Py_ssize_t s, t, b, j
    cdef double ig, fg, gg, og, cn, tc
    with nogil:
        for s in range(T):
            t = T - 1 - s if reverse else s
            for b in range(B):
                for j in range(H):
                    h_prev[t, b, j] = h[b, j]
                    c_prev[t, b, j] = c[b, j]
            _gemm(b'N', b'T', <int>B, <int>G, <int>H, 1.0, &h[0, 0], <int>H,
                  &w_hh[0, 0], <int>H, 0.0, &z[0, 0], <int>G)
            for b in range(B):
                for j in range(H):
                    ig = _sig(z[b, j] + xproj[t, b, j])
                    fg = _sig(z[b, H + j] + xproj[t, b, H + j])
                    gg = _tanh(z[b, 2 * H + j] + xproj[t, b, 2 * H + j])
                    og = _sig(z[b, 3 * H + j] + xproj[t, b, 3 * H + j])
                    cn = fg * c[b, j] + ig * gg
                    tc = _tanh(cn)
                    gates[t, b, j] = ig
                    gates[t, b, H + j] = fg
                    gates[t, b, 2 * H + j] = gg
                    gates[t, b, 3 * H + j] = og
                    tanh_c[t, b, j] = tc
                    if m[t, b] != 0.0:
                        c[b, j] = cn
                        h[b, j] = og * tc
                        out[t, b, j] = og * tc
    return out_a, (gates_a, tanh_c_a, h_prev_a, c_prev_a)


def lstm_backward(double[:, :, ::1] dout, cache, double[:, ::1] w_hh, mask, bint reverse=False):
    gates_a, tanh_c_a, h_prev_a, c_prev_a = cache
    cdef double[:, :, ::1] gates = gates_a
    cdef double[:, :, ::1] tanh_c = tanh_c_a
    cdef double[:, :, ::1] h_prev = h_prev_a
    cdef double[:, :, ::1] c_prev = c_prev_a
    cdef Py_ssize_t T = gates.shape[0], B = gates.shape[1], G = gates.shape[2]
    cdef Py_ssize_t H = G // 4
    cdef double[:, ::1] m = np.ascontiguousarray(mask, dtype=np.float64)
    dxproj_a = np.zeros((T, B, G))
    dw_a = np.zeros((G, H))
    cdef double[:, :, ::1] dxproj = dxproj_a
    cdef double[:, ::1] dw = dw_a
    cdef double[:, ::1] dh = np.zeros((B, H))
    cdef double[:, ::1] dc = np.zeros((B, H))
    cdef double[:, ::1] dh_rec = np.zeros((B, H))
    cdef Py_ssize_t s, t, b, j
    cdef double ig, fg, gg, og, tc, dht, dct
    with nogil:
        for s in range(T):
            t = s if reverse else T - 1 - s
            for b in range(B):
                if m[t, b] == 0.0:
                    continue
                for j in range(H):
                    ig = gates[t, b, j]
                    fg = gates[t, b, H + j]
                    gg = gates[t, b, 2 * H + j]
                    og = gates[t, b, 3 * H + j]
                    tc = tanh_c[t, b, j]
                    dht = dout[t, b, j] + dh[b, j]
                    dct = dc[b, j] + dht * og * (1.0 - tc * tc)
                    dxproj[t, b, j] = dct * gg * ig * (1.0 - ig)
                    dxproj[t, b, H + j] = dct * c_prev[t, b, j] * fg * (1.0 - fg)
                    dxproj[t, b, 2 * H + j] = dct * ig * (1.0 - gg * gg)
                    dxproj[t, b, 3 * H + j] = dht * tc * og * (1.0 - og)
                    dc[b, j] = dct * fg
            # dh_rec = dz W  (masked rows of dz are zero)
            _gemm(b'N', b'N', <int>B, <int>H, <int>G, 1.0, &dxproj[t, 0, 0], <int>G,
                  &w_hh[0, 0], <int>H, 0.0, &dh_rec[0, 0], <int>H)
            for b in range(B):
                if m[t, b] != 0.0:
                    for j in range(H):
                        dh[b, j] = dh_rec[b, j]
        # dW = sum_t dz_t^T h_prev_t as one product over all T*B rows
        _gemm(b'T', b'N', <int>G, <int>H, <int>(T * B), 1.0, &dxproj[0, 0, 0], <int>G,
              &h_prev[0, 0, 0], <int>H, 0.0, &dw[0, 0], <int>H)
    return dxproj_a, dw_a

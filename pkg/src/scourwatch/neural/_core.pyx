# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM time-step loops.

Mirrors kernels_py: dgemm for the recurrent matrix products, fused
elementwise gate math in between. The inner loops are written as flat
unit-stride spans so the C compiler can vectorize the transcendentals
(libmvec); the build uses finite-math flags for exactly that reason.
"""

import numpy as np

from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"


cdef inline double _sigmoid(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


def forward_loop(double[:, :, ::1] G, double[:, ::1] U,
                 double[:, ::1] h0, double[:, ::1] c0, double[:, ::1] mh,
                 double[:, :, ::1] C, double[:, :, ::1] Hseq):
    cdef int B = G.shape[0]
    cdef int T = G.shape[1]
    cdef int H4 = G.shape[2]
    cdef int H = H4 // 4
    cdef int H2 = 2 * H
    cdef int H3 = 3 * H
    cdef int ldg = T * H4
    cdef int b, t, j
    cdef double one = 1.0
    cdef double c_new
    cdef double *row
    cdef double *c_prev
    cdef double *c_out
    cdef double *h_out
    cdef double *h_prev
    cdef double *mrow
    if B == 0 or T == 0:
        return
    hm_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] hm = hm_arr
    with nogil:
        for t in range(T):
            # recurrent-dropout mask applies to the gate input only
            for b in range(B):
                h_prev = &h0[b, 0] if t == 0 else &Hseq[b, t - 1, 0]
                mrow = &mh[b, 0]
                for j in range(H):
                    hm[b, j] = h_prev[j] * mrow[j]
            # G[:, t, :] += hm @ U   (column-major trick: C^T = U^T hm^T)
            dgemm("N", "N", &H4, &B, &H, &one,
                  &U[0, 0], &H4, &hm[0, 0], &H, &one, &G[0, t, 0], &ldg)
            for b in range(B):
                row = &G[b, t, 0]
                for j in range(H2):  # input and forget gates
                    row[j] = _sigmoid(row[j])
                for j in range(H2, H3):  # cell candidate
                    row[j] = tanh(row[j])
                for j in range(H3, H4):  # output gate
                    row[j] = _sigmoid(row[j])
                c_prev = &c0[b, 0] if t == 0 else &C[b, t - 1, 0]
                c_out = &C[b, t, 0]
                h_out = &Hseq[b, t, 0]
                for j in range(H):
                    c_new = row[H + j] * c_prev[j] + row[j] * row[H2 + j]
                    c_out[j] = c_new
                    h_out[j] = row[H3 + j] * tanh(c_new)


def backward_loop(double[:, :, ::1] G, double[:, :, ::1] C,
                  double[:, :, ::1] Hseq, double[:, ::1] h0,
                  double[:, ::1] c0, double[:, ::1] U, double[:, ::1] mh,
                  double[:, :, ::1] dHseq, double[:, ::1] dcT,
                  double[:, :, ::1] dZ, double[:, ::1] dh0,
                  double[:, ::1] dc0):
    cdef int B = G.shape[0]
    cdef int T = G.shape[1]
    cdef int H4 = G.shape[2]
    cdef int H = H4 // 4
    cdef int H2 = 2 * H
    cdef int H3 = 3 * H
    cdef int ldz = T * H4
    cdef int b, t, j
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef double i_g, f_g, g_g, o_g, tc, dht, dct
    cdef double *grow
    cdef double *zrow
    cdef double *c_prev
    cdef double *c_row
    cdef double *dh_row
    cdef double *dc_row
    cdef double *dout
    if B == 0 or T == 0:
        dh0[:, :] = 0.0
        dc0[:, :] = dcT
        return
    dh_arr = np.zeros((B, H), dtype=np.float64)
    dc_arr = np.array(dcT, dtype=np.float64, copy=True)
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dc = dc_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                grow = &G[b, t, 0]
                zrow = &dZ[b, t, 0]
                c_row = &C[b, t, 0]
                c_prev = &c0[b, 0] if t == 0 else &C[b, t - 1, 0]
                dh_row = &dh[b, 0]
                dc_row = &dc[b, 0]
                dout = &dHseq[b, t, 0]
                for j in range(H):
                    i_g = grow[j]
                    f_g = grow[H + j]
                    g_g = grow[H2 + j]
                    o_g = grow[H3 + j]
                    tc = tanh(c_row[j])
                    dht = dout[j] + dh_row[j]
                    dct = dc_row[j] + dht * o_g * (1.0 - tc * tc)
                    zrow[j] = (dct * g_g) * i_g * (1.0 - i_g)
                    zrow[H + j] = (dct * c_prev[j]) * f_g * (1.0 - f_g)
                    zrow[H2 + j] = (dct * i_g) * (1.0 - g_g * g_g)
                    zrow[H3 + j] = (dht * tc) * o_g * (1.0 - o_g)
                    dc_row[j] = dct * f_g
            # dh = (dZ[:, t, :] @ U.T) * mh
            dgemm("T", "N", &H, &B, &H4, &one,
                  &U[0, 0], &H4, &dZ[0, t, 0], &ldz, &zero, &dh[0, 0], &H)
            for b in range(B):
                dh_row = &dh[b, 0]
                for j in range(H):
                    dh_row[j] *= mh[b, j]
    dh0[:, :] = dh
    dc0[:, :] = dc

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ldcstats._kernels_py one-to-one."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def crossnobis_batch(const double[:, :, :, ::1] U):
    """Cross-validated distances for a batch of (R, M, K, P) pattern stacks."""
    cdef Py_ssize_t R = U.shape[0], M = U.shape[1], K = U.shape[2], P = U.shape[3]
    cdef Py_ssize_t D = K * (K - 1) // 2
    out_arr = np.empty((R, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, m, i, k, p, j
    cdef double s, ss, diff, acc
    cdef double norm = 1.0 / (<double>M * (M - 1) * P)
    with nogil:
        for r in range(R):
            j = 0
            for i in range(K):
                for k in range(i + 1, K):
                    acc = 0.0
                    for p in range(P):
                        s = 0.0
                        ss = 0.0
                        for m in range(M):
                            diff = U[r, m, i, p] - U[r, m, k, p]
                            s = s + diff
                            ss = ss + diff * diff
                        acc = acc + (s * s - ss)
                    out[r, j] = acc * norm
                    j = j + 1
    return out_arr


def sigma_k_batch(const double[:, :, :, ::1] U):
    """Voxel-averaged condition covariance across partitions, per replication."""
    cdef Py_ssize_t R = U.shape[0], M = U.shape[1], K = U.shape[2], P = U.shape[3]
    out_arr = np.zeros((R, K, K), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] mean = np.empty((K, P), dtype=np.float64)
    cdef Py_ssize_t r, m, i, k, p
    cdef double acc
    cdef double norm = 1.0 / ((M - 1) * <double>P)
    with nogil:
        for r in range(R):
            for i in range(K):
                for p in range(P):
                    acc = 0.0
                    for m in range(M):
                        acc = acc + U[r, m, i, p]
                    mean[i, p] = acc / M
            for i in range(K):
                for k in range(i, K):
                    acc = 0.0
                    for m in range(M):
                        for p in range(P):
                            acc = acc + (U[r, m, i, p] - mean[i, p]) * (U[r, m, k, p] - mean[k, p])
                    out[r, i, k] = acc * norm
                    out[r, k, i] = acc * norm
    return out_arr


def fold_sums(const double[:, :, :, ::1] xi_mn, const double[:, :, :, ::1] xi_m_notn,
              const double[:, :, :, ::1] xi_notm_n, const double[:, :, :, ::1] xi_notm_notn,
              const double[:, ::1] weights):
    """Weighted double sums over fold pairs (m, n) of the signal and noise terms."""
    cdef Py_ssize_t M = xi_mn.shape[0], D = xi_mn.shape[2]
    S_arr = np.zeros((D, D), dtype=np.float64)
    N_arr = np.zeros((D, D), dtype=np.float64)
    cdef double[:, ::1] S = S_arr
    cdef double[:, ::1] N = N_arr
    cdef Py_ssize_t m, n, i, j
    cdef double w
    with nogil:
        for m in range(M):
            for n in range(M):
                for i in range(D):
                    if weights[m, i] == 0.0:
                        continue
                    for j in range(D):
                        w = weights[m, i] * weights[n, j]
                        if w == 0.0:
                            continue
                        S[i, j] += w * (xi_notm_notn[m, n, i, j] + xi_notm_n[m, n, i, j]
                                        + xi_m_notn[m, n, i, j] + xi_mn[m, n, i, j])
                        N[i, j] += w * (xi_mn[m, n, i, j] * xi_notm_notn[m, n, i, j]
                                        + xi_m_notn[m, n, i, j] * xi_notm_n[m, n, i, j])
    return S_arr, N_arr

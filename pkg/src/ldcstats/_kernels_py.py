"""NumPy implementations of the hot loops; used when the extension is not built."""

import numpy as np

_CHUNK_ELEMENTS = 4_000_000


def crossnobis_batch(U):
    U = np.ascontiguousarray(U, dtype=np.float64)
    R, M, K, P = U.shape
    rows, cols = np.triu_indices(K, k=1)
    D = rows.size
    out = np.empty((R, D))
    step = max(1, _CHUNK_ELEMENTS // max(1, M * D * P))
    norm = 1.0 / (M * (M - 1) * P)
    for start in range(0, R, step):
        block = U[start:start + step]
        diffs = block[:, :, rows, :] - block[:, :, cols, :]
        total = diffs.sum(axis=1)
        own = np.einsum("rmdp,rmdp->rd", diffs, diffs)
        out[start:start + step] = (np.einsum("rdp,rdp->rd", total, total) - own) * norm
    return out


def sigma_k_batch(U):
    U = np.asarray(U, dtype=np.float64)
    R, M, K, P = U.shape
    centered = U - U.mean(axis=1, keepdims=True)
    return np.einsum("rmip,rmkp->rik", centered, centered) / ((M - 1) * P)


def fold_sums(xi_mn, xi_m_notn, xi_notm_n, xi_notm_notn, weights):
    w = weights[:, None, :, None] * weights[None, :, None, :]
    S = np.sum(w * (xi_notm_notn + xi_notm_n + xi_m_notn + xi_mn), axis=(0, 1))
    N = np.sum(w * (xi_mn * xi_notm_notn + xi_m_notn * xi_notm_n), axis=(0, 1))
    return S, N

"""Cross-validated Mahalanobis (LDC) distances and the covariance of their estimates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .glm import DesignMatrix, check_spd
from .prewhiten import ResidualSpatialCov
from .rdm import ContrastMatrix, DimensionError, build_contrast_matrix, n_pairs, pair_index

XI_FLOOR = 1e-12


@dataclass(frozen=True)
class PartitionedPatterns:
    """Prewhitened K x P estimates for each of M partitions, stored as (M, K, P)."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise DimensionError(f"expected an (M, K, P) array, got shape {data.shape}")
        if data.shape[0] < 2:
            raise DimensionError(f"cross-validation needs M >= 2 partitions, got {data.shape[0]}")
        if data.shape[1] < 2:
            raise DimensionError("need at least two conditions")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_list(cls, partitions: Sequence[np.ndarray]) -> "PartitionedPatterns":
        shapes = {np.shape(p) for p in partitions}
        if len(shapes) > 1:
            raise DimensionError(f"partitions differ in shape: {sorted(shapes)}")
        return cls(np.stack([np.asarray(p, dtype=float) for p in partitions]))

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def K(self) -> int:
        return self.data.shape[1]

    @property
    def P(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ConditionCov:
    sigma_K: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True)
class CovPrediction:
    V: np.ndarray
    delta: np.ndarray
    xi: np.ndarray
    trace_RR: float
    M: int
    P: int


def pattern_differences(U, C: ContrastMatrix | None = None) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if C is None:
        C = build_contrast_matrix(U.shape[-2])
    if U.shape[-2] != C.K:
        raise DimensionError(f"patterns have {U.shape[-2]} rows, contrast matrix expects {C.K}")
    return C.entries @ U


def crossnobis_distances(patterns: PartitionedPatterns | np.ndarray) -> np.ndarray:
    """Leave-one-partition-out distance estimates, one per condition pair.

    Each partition's pattern difference is multiplied with the average
    difference over the remaining partitions; the products are averaged over
    folds and divided by the channel count.
    """
    if not isinstance(patterns, PartitionedPatterns):
        patterns = PartitionedPatterns(patterns)
    return kernels.crossnobis_batch(patterns.data[None])[0]


def crossnobis_batch(U) -> np.ndarray:
    """Distances for a stack of replications shaped (R, M, K, P)."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    if U.ndim != 4 or U.shape[1] < 2:
        raise DimensionError(f"expected (R, M>=2, K, P) array, got {U.shape}")
    return kernels.crossnobis_batch(U)


def estimate_sigma_k(patterns: PartitionedPatterns | np.ndarray) -> ConditionCov:
    """Condition covariance across partitions, averaged over channels."""
    if not isinstance(patterns, PartitionedPatterns):
        patterns = PartitionedPatterns(patterns)
    sigma_K = kernels.sigma_k_batch(patterns.data[None])[0]
    return ConditionCov(sigma_K, xi_from_sigma_k(sigma_K))


def xi_from_sigma_k(sigma_K, C: ContrastMatrix | None = None) -> np.ndarray:
    sigma_K = np.asarray(sigma_K, dtype=float)
    if C is None:
        C = build_contrast_matrix(sigma_K.shape[0])
    xi = C.entries @ sigma_K @ C.entries.T
    return 0.5 * (xi + xi.T)


def _trace_rr(trace_RR) -> float:
    if isinstance(trace_RR, ResidualSpatialCov):
        return trace_RR.trace_RR
    return float(trace_RR)


def _floor_xi(xi):
    diag = np.diag(xi)
    if np.any(diag < XI_FLOOR):
        warnings.warn(f"{int(np.sum(diag < XI_FLOOR))} diagonal entries of Xi below {XI_FLOOR}; clamped",
                      RuntimeWarning, stacklevel=3)
        xi = xi.copy()
        idx = np.flatnonzero(diag < XI_FLOOR)
        xi[idx, idx] = XI_FLOOR
    return xi


def predict_v_balanced(delta, xi, trace_RR, M: int, P: int) -> CovPrediction:
    """``V = [4 (Delta o Xi) / M + 2 (Xi o Xi) / (M (M-1))] tr(S_R S_R) / P^2``."""
    if M < 2:
        raise DimensionError(f"need M >= 2, got {M}")
    delta = np.asarray(delta, dtype=float)
    xi = _floor_xi(np.asarray(xi, dtype=float))
    if delta.shape != xi.shape or delta.ndim != 2:
        raise DimensionError(f"Delta {delta.shape} and Xi {xi.shape} must be equal square shapes")
    tr = _trace_rr(trace_RR)
    V = (4.0 * delta * xi / M + 2.0 * xi * xi / (M * (M - 1))) * (tr / P**2)
    V = 0.5 * (V + V.T)
    return CovPrediction(V, delta, xi, tr, M, P)


# -- fold-level covariances ---------------------------------------------------

FOLD_CASES = ("mm", "m~m", "~m~m", "mn", "m~n", "~m~n")


def fold_cov_balanced(xi_entry, M: int, case: str):
    """Per-channel covariance between difference estimates from fold sets.

    ``m``/``n`` denote single partitions (m != n), ``~m`` the average of all
    partitions except m.
    """
    if M < 2:
        raise DimensionError(f"need M >= 2, got {M}")
    if case == "mm":
        return xi_entry
    if case in ("m~m", "mn"):
        return 0.0 * xi_entry
    if case in ("~m~m", "m~n"):
        return xi_entry / (M - 1)
    if case == "~m~n":
        return (M - 2) * xi_entry / (M - 1) ** 2
    raise ValueError(f"unknown fold case {case!r}; expected one of {FOLD_CASES}")


@dataclass(frozen=True)
class FoldCovTable:
    """Covariances between difference estimates from partition sets.

    Arrays are indexed ``[m, n, i, j]`` = Cov(delta_hat_{i,A}, delta_hat_{j,B})
    with A in {m, ~m} and B in {n, ~n}. ``weights[m, i]`` is the weight of fold
    m in the average for distance i (1/M for complete designs, 0 for folds in
    which a pair cannot be estimated).
    """

    mn: np.ndarray = field(repr=False)
    m_notn: np.ndarray = field(repr=False)
    notm_n: np.ndarray = field(repr=False)
    notm_notn: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        arrays = [self.mn, self.m_notn, self.notm_n, self.notm_notn]
        if any(a is None for a in arrays) or self.weights is None:
            raise ValueError("fold table is incomplete")
        shape = np.shape(self.mn)
        if len(shape) != 4 or any(np.shape(a) != shape for a in arrays):
            raise DimensionError("fold table entries must share one (M, M, D, D) shape")
        if np.shape(self.weights) != (shape[0], shape[2]):
            raise DimensionError("weights must be (M, D)")
        if not np.all(np.isfinite(np.stack(arrays))):
            raise ValueError("fold table is incomplete (non-finite entries)")

    @property
    def M(self) -> int:
        return self.mn.shape[0]

    @property
    def D(self) -> int:
        return self.mn.shape[2]


def balanced_fold_table(xi, M: int) -> FoldCovTable:
    xi = np.asarray(xi, dtype=float)
    D = xi.shape[0]
    same = np.eye(M, dtype=bool)[:, :, None, None]
    mn = np.where(same, fold_cov_balanced(xi, M, "mm"), fold_cov_balanced(xi, M, "mn"))
    m_notn = np.where(same, fold_cov_balanced(xi, M, "m~m"), fold_cov_balanced(xi, M, "m~n"))
    notm_notn = np.where(same, fold_cov_balanced(xi, M, "~m~m"), fold_cov_balanced(xi, M, "~m~n"))
    notm_n = np.swapaxes(np.swapaxes(m_notn, 0, 1), 2, 3)
    weights = np.full((M, D), 1.0 / M)
    return FoldCovTable(*(np.ascontiguousarray(a, dtype=np.float64) for a in (mn, m_notn, notm_n, notm_notn)),
                        weights=weights)


def fold_sums(table: FoldCovTable) -> tuple[np.ndarray, np.ndarray]:
    """Weighted double sums over fold pairs giving the signal (S) and noise (N) factors."""
    args = [np.ascontiguousarray(a, dtype=np.float64)
            for a in (table.mn, table.m_notn, table.notm_n, table.notm_notn, table.weights)]
    return kernels.fold_sums(*args)


def predict_v_general(delta, table: FoldCovTable, trace_RR, P: int) -> CovPrediction:
    """``Cov(d_i, d_j) = tr(S_R S_R) / P^2 * (Delta_ij S_ij + N_ij)`` for arbitrary fold structure."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (table.D, table.D):
        raise DimensionError(f"Delta {delta.shape} does not match fold table D={table.D}")
    S, N = fold_sums(table)
    tr = _trace_rr(trace_RR)
    V = (delta * S + N) * (tr / P**2)
    V = 0.5 * (V + V.T)
    xi = table.mn[np.arange(table.M), np.arange(table.M)].mean(axis=0)
    return CovPrediction(V, delta, xi, tr, table.M, P)


# -- design-based (unbalanced) estimation -------------------------------------


@dataclass(frozen=True)
class Run:
    """One partition: its design and temporal noise covariance (None = identity)."""

    design: DesignMatrix
    sigma_t: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.design.T


class _RunSet:
    """GLS estimator of condition effects pooled over a set of runs.

    Condition columns are shared between runs; nuisance columns stay run
    specific. ``maps[r]`` is the (n_cond x T_r) block acting on run r's data.
    """

    def __init__(self, runs: Sequence[Run], members: Sequence[int]):
        self.members = tuple(members)
        conds = sorted({c for r in self.members for c in runs[r].design.conditions})
        self.position = {c: i for i, c in enumerate(conds)}
        n_cond = len(conds)
        n_nuis = sum(runs[r].design.Q for r in self.members)
        ncol = n_cond + n_nuis
        embedded, weighted = {}, {}
        info = np.zeros((ncol, ncol))
        offset = n_cond
        for r in self.members:
            dm = runs[r].design
            E = np.zeros((dm.T, ncol))
            for col, c in enumerate(dm.conditions):
                E[:, self.position[c]] = dm.entries[:, col]
            E[:, offset:offset + dm.Q] = dm.nuisance_cols
            offset += dm.Q
            if runs[r].sigma_t is None:
                SiE = E
            else:
                L = check_spd(runs[r].sigma_t, "temporal covariance")
                SiE = np.linalg.solve(L.T, np.linalg.solve(L, E))
            embedded[r], weighted[r] = E, SiE
            info += E.T @ SiE
        if np.linalg.matrix_rank(info) < ncol:
            raise DimensionError(f"pooled design over runs {self.members} is rank deficient")
        inv = np.linalg.inv(info)
        self.maps = {r: (inv @ weighted[r].T)[:n_cond] for r in self.members}

    def contrast(self, c) -> np.ndarray | None:
        """Coefficients on this set's condition columns, or None if not estimable."""
        c = np.asarray(c, dtype=float)
        out = np.zeros(len(self.position))
        for cond in np.flatnonzero(c):
            if cond not in self.position:
                return None
            out[self.position[cond]] = c[cond]
        return out


def _cross_cov(runs, set_a: _RunSet, set_b: _RunSet, ca, cb) -> float:
    total = 0.0
    for r in set_a.members:
        if r not in set_b.members:
            continue
        la = ca @ set_a.maps[r]
        lb = cb @ set_b.maps[r]
        sigma = runs[r].sigma_t
        total += float(la @ lb) if sigma is None else float(la @ sigma @ lb)
    return total


def xi_from_design(runs: Sequence[Run], A: Sequence[int], B: Sequence[int], c_i, c_j) -> float:
    """Per-channel covariance of the GLS contrast estimates from run sets A and B.

    For identity temporal covariance this is
    ``c_i (X_A'X_A)^-1 X_A'X_B (X_B'X_B)^-1 c_j'``; in general the cross term
    weights shared samples by the inverse temporal covariance.
    """
    set_a, set_b = _RunSet(runs, A), _RunSet(runs, B)
    ca, cb = set_a.contrast(c_i), set_b.contrast(c_j)
    if ca is None or cb is None:
        raise DimensionError("contrast refers to a condition absent from the run set")
    return _cross_cov(runs, set_a, set_b, ca, cb)


class DesignCrossnobis:
    """Leave-one-run-out LDC for runs with differing designs.

    The held-in estimate for fold m comes from run m alone; the held-out
    estimate is the GLS fit pooled over all other runs. A pair enters fold m
    only if both conditions are estimable on both sides, and each distance is
    averaged over its valid folds.
    """

    def __init__(self, runs: Sequence[Run], K: int):
        if len(runs) < 2:
            raise DimensionError("need at least two runs")
        self.runs = list(runs)
        self.K = K
        self.M = len(runs)
        C = build_contrast_matrix(K)
        self.C = C
        D = C.D
        M = self.M
        self._single = [_RunSet(self.runs, [m]) for m in range(M)]
        self._rest = [_RunSet(self.runs, [r for r in range(M) if r != m]) for m in range(M)]
        self._coef_single = np.zeros((M, D), dtype=object)
        self._coef_rest = np.zeros((M, D), dtype=object)
        weights = np.zeros((M, D))
        for m in range(M):
            for j in range(D):
                a = self._single[m].contrast(C.entries[j])
                b = self._rest[m].contrast(C.entries[j])
                self._coef_single[m, j], self._coef_rest[m, j] = a, b
                if a is not None and b is not None:
                    weights[m, j] = 1.0
        counts = weights.sum(axis=0)
        if np.any(counts == 0):
            missing = [pair_index(K)[j] for j in np.flatnonzero(counts == 0)]
            raise DimensionError(f"pairs {missing} are not estimable in any fold")
        self.weights = weights / counts
        # linear maps from each run's samples to the D difference estimates
        self._held_in = []
        self._held_out = []
        for m in range(M):
            Lin = np.zeros((D, self.runs[m].T))
            Lout = {r: np.zeros((D, self.runs[r].T)) for r in self._rest[m].members}
            for j in range(D):
                if self.weights[m, j] == 0:
                    continue
                Lin[j] = self._coef_single[m, j] @ self._single[m].maps[m]
                for r in self._rest[m].members:
                    Lout[r][j] = self._coef_rest[m, j] @ self._rest[m].maps[r]
            self._held_in.append(Lin)
            self._held_out.append(Lout)

    def differences(self, Y: Sequence[np.ndarray]):
        """Held-in and held-out difference estimates, each shaped (M, ..., D, P)."""
        if len(Y) != self.M:
            raise DimensionError(f"expected {self.M} runs of data, got {len(Y)}")
        held_in = np.stack([self._held_in[m] @ Y[m] for m in range(self.M)])
        held_out = np.stack([sum(L @ Y[r] for r, L in self._held_out[m].items()) for m in range(self.M)])
        return held_in, held_out

    def distances(self, Y: Sequence[np.ndarray]) -> np.ndarray:
        """Distance estimates from per-run data ``Y[m]`` shaped (..., T_m, P)."""
        held_in, held_out = self.differences(Y)
        P = held_in.shape[-1]
        prod = np.einsum("m...dp,m...dp->m...d", held_in, held_out) / P
        w = self.weights.reshape((self.M,) + (1,) * (prod.ndim - 2) + (-1,))
        return np.sum(w * prod, axis=0)

    def fold_table(self) -> FoldCovTable:
        M, D = self.M, self.C.D
        tables = {key: np.zeros((M, M, D, D)) for key in ("mn", "m_notn", "notm_n", "notm_notn")}
        for m in range(M):
            for n in range(M):
                for i in range(D):
                    if self.weights[m, i] == 0:
                        continue
                    for j in range(D):
                        if self.weights[n, j] == 0:
                            continue
                        sides = {
                            "mn": (self._single[m], self._coef_single[m, i], self._single[n], self._coef_single[n, j]),
                            "m_notn": (self._single[m], self._coef_single[m, i], self._rest[n], self._coef_rest[n, j]),
                            "notm_n": (self._rest[m], self._coef_rest[m, i], self._single[n], self._coef_single[n, j]),
                            "notm_notn": (self._rest[m], self._coef_rest[m, i], self._rest[n], self._coef_rest[n, j]),
                        }
                        for key, (sa, ca, sb, cb) in sides.items():
                            tables[key][m, n, i, j] = _cross_cov(self.runs, sa, sb, ca, cb)
        return FoldCovTable(tables["mn"], tables["m_notn"], tables["notm_n"], tables["notm_notn"],
                            weights=self.weights.copy())


def predict_v(distances_or_delta, sigma_k, trace_RR, M: int, P: int) -> CovPrediction:
    """Balanced prediction from true (or assumed) distances and a condition covariance."""
    x = np.asarray(distances_or_delta, dtype=float)
    sigma_k = np.asarray(sigma_k, dtype=float)
    K = sigma_k.shape[0]
    C = build_contrast_matrix(K)
    if x.ndim == 1:
        if x.size != n_pairs(K):
            raise DimensionError(f"got {x.size} distances for K={K}")
        from .rdm import delta_from_distances
        delta = delta_from_distances(x, C)
    else:
        delta = x
    return predict_v_balanced(delta, xi_from_sigma_k(sigma_k, C), trace_RR, M, P)

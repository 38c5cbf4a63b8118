"""Named Monte-Carlo experiments producing result tables.

Every experiment is a pure function of its configuration and seed.
Replication ``r`` draws from ``replication_rng(seed, r)``, so the tables do
not depend on chunk sizes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import stats

from .. import kernels
from ..crossnobis import (DesignCrossnobis, Run, crossnobis_distances, estimate_sigma_k, predict_v,
                          predict_v_balanced, predict_v_general, xi_from_sigma_k)
from ..glm import DesignMatrix, TemporalCovSpec, build_design, temporal_cov
from ..inference import NullSpec, null_v, pair_contrast, upper_p, z_test
from ..model_eval import ConvergenceWarning, RepModel, select_model
from ..rdm import Dimensions, delta_from_distances, distances_from_patterns, n_pairs
from .sampling import auxiliary_rng, factor, replication_rng, true_patterns_from_rdm
from .timeseries import TimeseriesSimSpec, TimeseriesSimulator, analyze_runs

CHUNK = 2000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentResult:
    kind: str
    config: dict
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    patterns: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class DirectSimSpec:
    """Partition-wise pattern estimates drawn as ``U + A Z B'`` (matrix normal).

    The true patterns are ``true_U`` if given, otherwise realized from
    ``level * target`` with a rotation fixed by ``seed``; with neither they
    are zero.
    """

    dims: Dimensions
    sigma_K: np.ndarray | None = field(default=None, repr=False)
    sigma_R: np.ndarray | None = field(default=None, repr=False)
    true_U: np.ndarray | None = field(default=None, repr=False)
    target: np.ndarray | None = field(default=None, repr=False)
    level: float = 1.0
    seed: int = 0
    replications: int = 1000

    def true_patterns(self) -> np.ndarray:
        K, P = self.dims.K, self.dims.P
        if self.true_U is not None:
            U = np.asarray(self.true_U, dtype=float)
            if U.shape != (K, P):
                raise ConfigError(f"true patterns must be {K}x{P}")
            return U
        if self.target is None:
            return np.zeros((K, P))
        return true_patterns_from_rdm(self.level * np.asarray(self.target, dtype=float), P,
                                      auxiliary_rng(self.seed, 0))

    def trace_RR(self) -> float:
        if self.sigma_R is None:
            return float(self.dims.P)
        S = np.asarray(self.sigma_R, dtype=float)
        return float(np.sum(S * S))

    def draw(self, start: int, stop: int) -> np.ndarray:
        """Replications ``start..stop-1`` stacked as (R, M, K, P)."""
        K, P, M = self.dims.K, self.dims.P, self.dims.M
        Z = np.stack([replication_rng(self.seed, r).standard_normal((M, K, P)) for r in range(start, stop)])
        if self.sigma_K is not None:
            Z = factor(self.sigma_K, "condition covariance") @ Z
        if self.sigma_R is not None:
            Z = Z @ factor(self.sigma_R, "residual spatial covariance").T
        return Z + self.true_patterns()

    def chunks(self, chunk: int = CHUNK):
        for start in range(0, self.replications, chunk):
            stop = min(self.replications, start + chunk)
            yield start, self.draw(start, stop)


# -- configuration ------------------------------------------------------------

def _coerce(key, value, default):
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, list):
            items = [x for x in value.replace(",", " ").split()] if isinstance(value, str) else list(value)
            kind = type(default[0]) if default else float
            return [kind(x) for x in items]
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid value {value!r} for {key!r}") from err


def resolve_config(kind: str, config: Mapping[str, Any] | None) -> dict:
    """Defaults for ``kind`` updated from ``config``; unknown keys are rejected."""
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {sorted(EXPERIMENTS)}")
    defaults = EXPERIMENTS[kind].defaults
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, v in defaults.items()}
    for key, value in (config or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} for experiment {kind!r}")
        cfg[key] = _coerce(key, value, defaults[key])
    for key in ("K", "M", "P", "replications"):
        if isinstance(cfg.get(key), int) and cfg[key] < (2 if key != "replications" else 1):
            raise ConfigError(f"{key} must be at least {2 if key != 'replications' else 1}")
    return cfg


def _distances(cfg, K, key="distances"):
    d = np.asarray(cfg[key], dtype=float)
    if d.size != n_pairs(K):
        raise ConfigError(f"{key} needs {n_pairs(K)} values for K={K}, got {d.size}")
    return d


def _cov_agreement(V_emp, V_pred):
    """Largest relative diagonal error and largest off-diagonal error in units of sqrt(Vii Vjj)."""
    dp = np.diag(V_pred)
    diag = float(np.max(np.abs(np.diag(V_emp) - dp) / dp))
    scale = np.sqrt(np.outer(dp, dp))
    off = np.abs(V_emp - V_pred) / scale
    np.fill_diagonal(off, 0.0)
    return diag, float(off.max())


# -- experiments --------------------------------------------------------------

def _fig1(cfg, seed):
    K, M, P, R = cfg["K"], cfg["M"], cfg["P"], cfg["replications"]
    target = _distances(cfg, K)
    spec = DirectSimSpec(Dimensions(K, P, M), target=target, seed=seed, replications=R)
    d = np.concatenate([kernels.crossnobis_batch(U) for _, U in spec.chunks()])
    mean = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / math.sqrt(R)
    V_pred = predict_v(target, np.eye(K), spec.trace_RR(), M, P).V
    V_emp = np.atleast_2d(np.cov(d, rowvar=False))
    return {
        "distances": d, "truth": target[None], "mc_mean": mean[None], "mc_se": se[None],
        "V_pred": V_pred, "V_emp": V_emp,
    }, {"max_abs_z_mean": float(np.max(np.abs(mean - target) / se))}, spec.draw(0, 1)[0]


def _fig2(cfg, seed):
    K, M, P, R = cfg["K"], cfg["M"], cfg["P"], cfg["replications"]
    pattern = _distances(cfg, K, "pattern")
    tables, summary = {"levels": np.asarray(cfg["levels"], dtype=float)[:, None]}, {}
    for i, level in enumerate(cfg["levels"]):
        spec = DirectSimSpec(Dimensions(K, P, M), target=pattern, level=level, seed=seed, replications=R)
        d = np.concatenate([kernels.crossnobis_batch(U) for _, U in spec.chunks()])
        V_emp = np.cov(d, rowvar=False)
        V_pred = predict_v(level * pattern, np.eye(K), spec.trace_RR(), M, P).V
        tables[f"V_pred_{i}"] = V_pred
        tables[f"V_emp_{i}"] = V_emp
        tables[f"mean_{i}"] = d.mean(axis=0)[None]
        summary[f"diag_rel_err_{i}"], summary[f"offdiag_err_{i}"] = _cov_agreement(V_emp, V_pred)
    return tables, summary


def _fig3(cfg, seed):
    R, hs = cfg["replications"], tuple(cfg["h"])
    rows = []
    for s_eps in cfg["s_eps"]:
        sim = TimeseriesSimulator(TimeseriesSimSpec(K=cfg["K"], M=cfg["M"], s_eps=s_eps,
                                                   radius_mm=cfg["radius_mm"], voxel_mm=cfg["voxel_mm"]))
        M, P = sim.spec.M, sim.P
        d = {h: [] for h in hs}
        pred = {h: np.zeros(3) for h in hs}
        for r in range(R):
            Y = sim.simulate(replication_rng(seed, r)).Y
            for res in analyze_runs(sim, Y, hs):
                d[res.h].append(res.d_hat)
                xi = xi_from_sigma_k(res.sigma_k)
                noise = np.diag(predict_v_balanced(np.zeros_like(xi), xi, 1.0, M, P).V)
                for k, tr in enumerate((res.trace_identity, res.trace_true, res.trace_split)):
                    pred[res.h][k] += float(np.mean(noise)) * tr / R
        for h in hs:
            mc = float(np.mean(np.var(np.asarray(d[h]), axis=0, ddof=1)))
            rows.append([s_eps, h, mc, *pred[h]])
    table = np.asarray(rows)
    summary = {}
    for row in rows:
        tag = f"s{row[0]:g}_h{row[1]:g}"
        summary[f"ratio_true_{tag}"] = row[2] / row[4]
        summary[f"ratio_identity_{tag}"] = row[2] / row[3]
    return {"variance": table}, summary


def _normality(cfg, seed):
    K, M, R = cfg["K"], cfg["M"], cfg["replications"]
    probs = (np.arange(cfg["quantiles"]) + 0.5) / cfg["quantiles"]
    q_tail = stats.norm.ppf(1 - cfg["tail"])
    rows, tables = [], {}
    for P in cfg["P"]:
        spec = DirectSimSpec(Dimensions(K, P, M), seed=seed, replications=R)
        d = np.concatenate([kernels.crossnobis_batch(U) for _, U in spec.chunks()])
        sd = np.sqrt(np.diag(predict_v(np.zeros(n_pairs(K)), np.eye(K), float(P), M, P).V))
        z = (d / sd).ravel()
        ks = float(stats.kstest(z, "norm").statistic)
        rows.append([P, ks, float(stats.skew(z)), float(np.mean(z > q_tail)), float(np.mean(z < -q_tail))])
        tables[f"qq_P{P}"] = np.column_stack([stats.norm.ppf(probs), np.quantile(z, probs)])
    tables["normality"] = np.asarray(rows)
    summary = {}
    for P, ks, skew, right, left in rows:
        summary[f"ks_P{P:g}"] = ks
        summary[f"skew_P{P:g}"] = skew
        summary[f"right_tail_P{P:g}"] = right
        summary[f"left_tail_P{P:g}"] = left
    return tables, summary


def design_sigma_k(K: int, M: int) -> np.ndarray:
    """Condition covariance implied by the default event-related runs with unit noise."""
    return TimeseriesSimulator(TimeseriesSimSpec(K=K, M=M, radius_mm=1.0)).sigma_k()


def _fpr(cfg, seed):
    K, M, P, R = cfg["K"], cfg["M"], cfg["P"], cfg["replications"]
    D = n_pairs(K)
    if cfg["sigma_k"] == "design":
        sigma_K = design_sigma_k(K, M)
    elif cfg["sigma_k"] == "identity":
        sigma_K = np.eye(K)
    else:
        raise ConfigError("sigma_k must be 'design' or 'identity'")
    target = np.full(D, cfg["distance"]) if cfg["distance"] > 0 else None
    j, l = cfg["difference"]
    if not (0 <= j < D and 0 <= l < D and j != l):
        raise ConfigError(f"difference needs two distinct indices in [0, {D})")
    c = pair_contrast(D, j, l)
    alphas = np.asarray(cfg["alpha"], dtype=float)
    spec = DirectSimSpec(Dimensions(K, P, M), sigma_K=sigma_K, target=target, seed=seed, replications=R)
    trace = spec.trace_RR()
    zero, equal = NullSpec("zero"), NullSpec("equalized", (j, l))
    hits = np.zeros(alphas.size)
    p_diff = np.zeros((R, 2))
    for start, U in spec.chunks():
        d = kernels.crossnobis_batch(U)
        S = kernels.sigma_k_batch(U)
        for i in range(d.shape[0]):
            V0 = null_v(d[i], zero, S[i], trace, M, P)
            p = upper_p(d[i] / np.sqrt(np.diag(V0.V)))
            hits += np.sum(p[None, :] < alphas[:, None], axis=1)
            p_diff[start + i, 0] = z_test(d[i], c, V0, zero).p_value
            p_diff[start + i, 1] = z_test(d[i], c, null_v(d[i], equal, S[i], trace, M, P), equal).p_value
    single = hits / (R * D)
    diff = (p_diff[:, :, None] < alphas).mean(axis=0)
    rates = np.column_stack([alphas, single, diff[0], diff[1]])
    summary = {}
    for a, s, dz, de in rates:
        summary[f"single_{a:g}"] = s
        summary[f"diff_zero_{a:g}"] = dz
        summary[f"diff_equalized_{a:g}"] = de
    return {"rates": rates, "p_diff": p_diff, "sigma_k": sigma_K}, summary, spec.draw(0, 1)[0]


def model_pair(K: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two models with identical rank order but different distance ratios.

    The second is the elementwise square root of the first (still a valid
    squared-distance vector); both are scaled to unit mean.
    """
    X = auxiliary_rng(seed, 1).standard_normal((K, K - 1))
    m1 = distances_from_patterns(X)
    m1 = m1 / m1.mean()
    m2 = np.sqrt(m1)
    return m1, m2 / m2.mean()


def _modelsel(cfg, seed):
    K, M, P, R = cfg["K"], cfg["M"], cfg["P"], cfg["replications"]
    methods = tuple(cfg["methods"])
    m1, m2 = model_pair(K, seed)
    models = [RepModel(m1, "m1"), RepModel(m2, "m2")]
    rows = []
    unconverged = 0
    for li, level in enumerate(cfg["signals"]):
        correct = np.zeros(len(methods))
        for r in range(R):
            truth = r % 2
            rng = replication_rng(seed, li * R + r)
            U_true = true_patterns_from_rdm(level * models[truth].m, P, rng)
            U = U_true + rng.standard_normal((M, K, P))
            d = crossnobis_distances(U)
            sigma_k = estimate_sigma_k(U).sigma_K
            for k, method in enumerate(methods):
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", ConvergenceWarning)
                    sel = select_model(d, models, method, sigma_k=sigma_k, trace_RR=float(P), M=M, P=P)
                unconverged += sum(issubclass(w.category, ConvergenceWarning) for w in caught)
                correct[k] += 0.5 if sel.tie else float(sel.winner == truth)
        rows.append([level, *(correct / R)])
    table = np.asarray(rows)
    summary = {"unconverged_fits": float(unconverged)}
    for row in rows:
        for k, method in enumerate(methods):
            summary[f"acc_{method}_{row[0]:g}"] = row[k + 1]
    return {"accuracy": table, "models": np.vstack([m1, m2])}, summary


def unbalanced_runs(cfg) -> list[Run]:
    """Runs with interleaved trials; one condition is left out of one run."""
    K, M, T, dt = cfg["K"], cfg["M"], cfg["T"], cfg["dt"]
    sigma_t = temporal_cov(TemporalCovSpec(), T)
    runs = []
    for m in range(M):
        present = [k for k in range(K) if not (m == cfg["missing_run"] and k == cfg["missing_condition"])]
        onsets = [[] for _ in present]
        t = cfg["start"]
        for _ in range(cfg["trials"]):
            for i in range(len(present)):
                onsets[i].append(t)
                t += cfg["trial_duration"] + cfg["gap"]
        base = build_design(onsets, cfg["trial_duration"], T, dt)
        runs.append(Run(DesignMatrix(base.entries, len(present), dt, tuple(present)), sigma_t))
    return runs


def _unbalanced(cfg, seed):
    K, M, P, R, T = cfg["K"], cfg["M"], cfg["P"], cfg["replications"], cfg["T"]
    if not (0 <= cfg["missing_run"] < M and 0 <= cfg["missing_condition"] < K):
        raise ConfigError("missing_run / missing_condition out of range")
    target = _distances(cfg, K)
    runs = unbalanced_runs(cfg)
    dc = DesignCrossnobis(runs, K)
    U_true = true_patterns_from_rdm(target, P, auxiliary_rng(seed, 0))
    L = factor(runs[0].sigma_t, "temporal covariance")
    signal = [run.design.condition_cols @ U_true[list(run.design.conditions)] for run in runs]
    out = []
    for start in range(0, R, CHUNK):
        stop = min(R, start + CHUNK)
        Z = np.stack([replication_rng(seed, r).standard_normal((M, T, P)) for r in range(start, stop)])
        E = L @ Z
        out.append(dc.distances([signal[m] + E[:, m] for m in range(M)]))
    d = np.concatenate(out)
    V_emp = np.cov(d, rowvar=False)
    V_pred = predict_v_general(delta_from_distances(target), dc.fold_table(), float(P), P).V
    diag, off = _cov_agreement(V_emp, V_pred)
    return {"distances": d, "V_pred": V_pred, "V_emp": V_emp, "weights": dc.weights}, {
        "diag_rel_err": diag, "offdiag_err": off,
        "max_abs_z_mean": float(np.max(np.abs(d.mean(axis=0) - target) / (d.std(axis=0, ddof=1) / math.sqrt(R)))),
    }


@dataclass(frozen=True)
class Experiment:
    run: Callable
    defaults: dict


EXPERIMENTS: dict[str, Experiment] = {
    "fig1": Experiment(_fig1, {"K": 3, "M": 3, "P": 50, "distances": [2.6, 1.4, 2.0], "replications": 10000}),
    "fig2": Experiment(_fig2, {"K": 5, "M": 5, "P": 30, "levels": [0.0, 0.05, 0.1, 0.2],
                               "pattern": [1.5, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0],
                               "replications": 100000}),
    "fig3": Experiment(_fig3, {"K": 10, "M": 8, "s_eps": [0.0, 1.0, 2.0, 3.0], "h": [0.2, 0.4, 0.6, 1.0],
                               "radius_mm": 8.0, "voxel_mm": 2.0, "replications": 200}),
    "normality": Experiment(_normality, {"K": 5, "M": 5, "P": [30, 64], "quantiles": 999, "tail": 0.01,
                                         "replications": 10000}),
    "fpr": Experiment(_fpr, {"K": 10, "M": 8, "P": 375, "distance": 0.0, "sigma_k": "design",
                             "alpha": [0.05, 0.01], "difference": [0, 3], "replications": 10000}),
    "modelsel": Experiment(_modelsel, {"K": 5, "M": 5, "P": 50, "signals": [0.0, 0.05, 0.1, 0.2, 0.4, 0.8],
                                       "methods": ["spearman", "cosine", "loglik"], "replications": 1000}),
    "unbalanced": Experiment(_unbalanced, {"K": 3, "M": 3, "T": 60, "dt": 2.0, "P": 40,
                                           "distances": [0.4, 0.2, 0.3], "trials": 2, "trial_duration": 6.0,
                                           "gap": 8.0, "start": 4.0, "missing_run": 0, "missing_condition": 2,
                                           "replications": 100000}),
}


def run_experiment(kind: str, config: Mapping[str, Any] | None = None, seed: int = 0) -> ExperimentResult:
    """Run a named experiment; ``config`` overrides that experiment's defaults.

    Direct-sampling experiments also return replication 0's partition
    patterns as an (M, K, P) array.
    """
    cfg = resolve_config(kind, config)
    tables, summary, *patterns = EXPERIMENTS[kind].run(cfg, int(seed))
    tables = {name: np.atleast_2d(np.asarray(t, dtype=np.float64)) for name, t in tables.items()}
    return ExperimentResult(kind, cfg, tables, summary, patterns[0] if patterns else None)

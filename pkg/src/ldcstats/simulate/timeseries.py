"""Full first-level simulation: designed runs with temporally and spatially correlated noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..crossnobis import estimate_sigma_k, crossnobis_distances
from ..glm import GlsProjector, TemporalCovSpec, blocked_design, temporal_cov
from ..prewhiten import estimate_sigma_p, estimate_sigma_r, fit_spatial_cov, split_sigma_r
from .sampling import build_roi, factor, replication_rng, spatial_cov_from_grid, true_patterns_from_rdm


@dataclass(frozen=True)
class TimeseriesSimSpec:
    """Event-related experiment in a spherical ROI.

    Defaults follow the finger-tapping layout: 10 conditions, 3 trials of
    8.1 s each per run, 8 runs of 123 samples at 2 s, an 8 mm sphere of
    2 mm voxels.
    """

    K: int = 10
    M: int = 8
    T: int = 123
    dt: float = 2.0
    trials_per_condition: int = 3
    trial_duration: float = 8.1
    temporal: TemporalCovSpec = field(default_factory=TemporalCovSpec)
    radius_mm: float = 8.0
    voxel_mm: float = 2.0
    s_eps: float = 3.0
    noise_var: float = 1.0
    signal: np.ndarray | None = field(default=None, repr=False)
    smooth_signal: bool = False
    same_order: bool = True
    design_seed: int = 0


@dataclass
class SimulatedRuns:
    Y: list
    B: np.ndarray
    U_true: np.ndarray


class TimeseriesSimulator:
    """Holds the fixed parts of a :class:`TimeseriesSimSpec` (designs, kernels, projectors)."""

    def __init__(self, spec: TimeseriesSimSpec):
        self.spec = spec
        order_rng = np.random.default_rng(spec.design_seed)
        base = np.repeat(np.arange(spec.K), spec.trials_per_condition)
        first = order_rng.permutation(base)
        self.designs = []
        for m in range(spec.M):
            order = first if (spec.same_order or m == 0) else order_rng.permutation(base)
            self.designs.append(blocked_design(order, spec.trial_duration, spec.T, spec.dt, n_conditions=spec.K))
        self.sigma_t = temporal_cov(spec.temporal, spec.T)
        self.temporal_factor = factor(self.sigma_t, "temporal covariance")
        self.grid = build_roi(spec.radius_mm, spec.voxel_mm)
        self.spatial = spatial_cov_from_grid(self.grid, spec.s_eps)
        self.spatial_factor = factor(self.spatial, "spatial covariance")
        self.projectors = [GlsProjector(d, self.sigma_t) for d in self.designs]
        self.sigma_p = spec.noise_var * self.spatial

    @property
    def P(self) -> int:
        return self.grid.P

    def sigma_k(self) -> np.ndarray:
        """Condition covariance of one run's betas per unit of spatially white noise."""
        stack = [p.cov_unscaled[: self.spec.K, : self.spec.K] for p in self.projectors]
        return self.spec.noise_var * np.mean(stack, axis=0)

    def simulate(self, rng: np.random.Generator) -> SimulatedRuns:
        spec = self.spec
        P = self.P
        if spec.signal is None or not np.any(spec.signal):
            U = np.zeros((spec.K, P))
        else:
            U = true_patterns_from_rdm(np.asarray(spec.signal, dtype=float), P, rng)
        # with B = sd * U L', the Mahalanobis distances under sigma_p equal those of U
        B = U @ self.spatial_factor.T if spec.smooth_signal else U
        B = np.sqrt(spec.noise_var) * B
        noise_sd = np.sqrt(spec.noise_var)
        Y = []
        for m in range(spec.M):
            Z = rng.standard_normal((spec.T, P))
            E = noise_sd * (self.temporal_factor @ Z @ self.spatial_factor.T)
            Y.append(self.designs[m].condition_cols @ B + E)
        return SimulatedRuns(Y, B, U)


def simulate_timeseries(spec: TimeseriesSimSpec, replication: int, seed: int = 0) -> SimulatedRuns:
    """One replication's per-run data, drawn from the stream for ``(seed, replication)``."""
    return TimeseriesSimulator(spec).simulate(replication_rng(seed, replication))


@dataclass
class RunAnalysis:
    """First-level and distance results for one simulated data set at one shrinkage value."""

    h: float
    d_hat: np.ndarray
    sigma_k: np.ndarray
    trace_identity: float
    trace_true: float
    trace_split: float


def analyze_runs(sim: TimeseriesSimulator, Y, hs=(0.4,)) -> list[RunAnalysis]:
    """GLS, noise covariance, shrinkage, prewhitening and LDC for each value in ``hs``."""
    K = sim.spec.K
    fits = [proj.fit(y) for proj, y in zip(sim.projectors, Y)]
    betas = [f.betas[:K] for f in fits]
    residuals = [f.residuals for f in fits]
    Q = sim.designs[0].Q
    sigma_hat = estimate_sigma_p(residuals, K, Q)
    out = []
    for h in hs:
        spatial = fit_spatial_cov(sigma_hat, h)
        U = np.stack([b @ spatial.whitener for b in betas])
        d_hat = crossnobis_distances(U)
        cc = estimate_sigma_k(U)
        true_r = estimate_sigma_r(sim.sigma_p, whitener=spatial.whitener)
        split_r = split_sigma_r(residuals, K, Q, h, spatial=spatial)
        out.append(RunAnalysis(h, d_hat, cc.sigma_K, float(sim.P), true_r.trace_RR, split_r.trace_RR))
    return out


"""Covariance-trajectory estimation from multivariate time series.

A sliding window segments the series into overlapping blocks; each block is
summarized by a shrinkage covariance estimate (a convex combination
``rho1 * I + rho2 * S`` of the identity and the sample covariance with
data-driven weights), which stays positive definite even when the window is
shorter than the channel count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    EPS_PD,
    normalize_det,
    sym_exp,
    sym_log,
    symmetrize,
)


@dataclass(frozen=True)
class MultivariateTimeSeries:
    """Uniformly sampled multichannel signal, one row per time sample."""

    values: np.ndarray
    sampling_step: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D (times x channels), got {values.ndim}-D")
        if values.shape[0] < 2:
            raise ValueError("time series must have at least 2 samples")
        if not np.all(np.isfinite(values)):
            raise ValueError("time series contains NaN or Inf")
        if self.sampling_step <= 0:
            raise ValueError("sampling_step must be positive")
        object.__setattr__(self, "values", values)

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window parameters, in samples."""

    window_size: int
    step_size: int

    def __post_init__(self):
        if self.window_size < 2:
            raise ValueError("window_size must be at least 2")
        if self.step_size < 1:
            raise ValueError("step_size must be at least 1")


@dataclass(frozen=True)
class ShrinkageDiagnostics:
    rho1: float  # weight of the identity
    rho2: float  # weight of the sample covariance
    degenerate: bool = False


@dataclass(frozen=True)
class CovarianceTrajectory:
    """A time-indexed sequence of SPD matrices on a grid normalized to [0, 1]."""

    matrices: np.ndarray  # (T, n, n)
    times: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"matrices must have shape (T, n, n), got {mats.shape}")
        T = mats.shape[0]
        if self.times is None:
            times = np.linspace(0.0, 1.0, T) if T > 1 else np.zeros(1)
        else:
            times = np.asarray(self.times, dtype=float)
        if times.shape != (T,):
            raise ValueError("times length must match trajectory length")
        if T > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        for k in range(T):
            mats[k] = symmetrize(mats[k])
            if np.linalg.eigvalsh(mats[k])[0] < EPS_PD:
                raise ValueError(f"trajectory matrix {k} is not positive definite")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "times", times)

    @property
    def length(self) -> int:
        return self.matrices.shape[0]

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]


def ledoit_wolf(X: np.ndarray) -> tuple[np.ndarray, ShrinkageDiagnostics]:
    """Shrinkage covariance of a data window (rows are observations).

    Implements the well-conditioned estimator ``Sigma = rho1 I + rho2 S``:
    with ``m = tr(S)/n``, ``d2 = ||S - m I||_F^2 / n`` and ``b2`` the
    (capped) average squared fluctuation of per-sample outer products around
    S, the weights are ``rho1 = b2/d2 * m`` and ``rho2 = 1 - b2/d2``.

    Degenerate windows (no dispersion around the scaled identity) fall back
    to a scaled identity and are flagged in the diagnostics.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("window must be 2-D (samples x channels)")
    K, n = X.shape
    if K < 2:
        raise ValueError("window must contain at least 2 samples")
    Xc = X - X.mean(axis=0)
    S = symmetrize(Xc.T @ Xc / K)
    m = float(np.trace(S)) / n
    d2 = float(np.sum((S - m * np.eye(n)) ** 2)) / n

    scale = max(m * m, 1.0)
    if d2 <= 1e-15 * scale:
        # constant or perfectly isotropic window
        rho1 = max(m, EPS_PD * 10)
        sigma = rho1 * np.eye(n)
        return sigma, ShrinkageDiagnostics(rho1=rho1, rho2=0.0, degenerate=True)

    # average of ||x_k x_k^T - S||_F^2 over samples, divided by K and n
    b2_bar = 0.0
    for k in range(K):
        diff = np.outer(Xc[k], Xc[k]) - S
        b2_bar += float(np.sum(diff * diff))
    b2_bar /= K * K * n
    b2 = min(b2_bar, d2)

    shrink = b2 / d2
    rho1 = shrink * m
    rho2 = 1.0 - shrink
    sigma = symmetrize(rho1 * np.eye(n) + rho2 * S)

    degenerate = False
    wmin = np.linalg.eigvalsh(sigma)[0]
    if wmin < EPS_PD:
        # pathological window (e.g. identical outer products with singular S)
        bump = EPS_PD * 10 + abs(wmin)
        sigma = symmetrize(sigma + bump * np.eye(n))
        rho1 += bump
        degenerate = True
    return sigma, ShrinkageDiagnostics(rho1=rho1, rho2=rho2, degenerate=degenerate)


def window_count(n_times: int, cfg: WindowConfig) -> int:
    return (n_times - cfg.window_size) // cfg.step_size + 1


def estimate_trajectory(
    ts: MultivariateTimeSeries, cfg: WindowConfig
) -> CovarianceTrajectory:
    """Sliding-window covariance trajectory; one SPD matrix per window.

    Produces ``T = floor((n_times - window_size)/step_size) + 1`` matrices on
    a uniform time grid normalized to [0, 1].
    """
    if cfg.window_size > ts.n_times:
        raise ValueError(
            f"window_size {cfg.window_size} exceeds series length {ts.n_times}"
        )
    T = window_count(ts.n_times, cfg)
    mats = np.empty((T, ts.n_channels, ts.n_channels))
    for w in range(T):
        start = w * cfg.step_size
        block = ts.values[start : start + cfg.window_size]
        mats[w], _ = ledoit_wolf(block)
    return CovarianceTrajectory(matrices=mats)


def smooth_resample(
    traj: CovarianceTrajectory, kernel_width: float, T_out: int
) -> CovarianceTrajectory:
    """Gaussian smoothing and resampling of a trajectory.

    Smoothing happens on matrix-log coordinates (the PD cone is not closed
    under entrywise averaging; the log domain is) and maps back through the
    matrix exponential.  ``kernel_width`` is measured in input grid steps.
    """
    if kernel_width <= 0:
        raise ValueError("kernel_width must be positive")
    if T_out < 1:
        raise ValueError("T_out must be positive")
    T = traj.length
    logs = np.array([sym_log(P) for P in traj.matrices])
    if T == 1:
        out = np.repeat(traj.matrices, T_out, axis=0)
        return CovarianceTrajectory(matrices=out)
    dt_in = float(traj.times[-1] - traj.times[0]) / (T - 1)
    sigma = kernel_width * dt_in
    t_out = np.linspace(traj.times[0], traj.times[-1], T_out) if T_out > 1 else np.array([traj.times[0]])
    out = np.empty((T_out, traj.dim, traj.dim))
    for i, s in enumerate(t_out):
        z = (s - traj.times) / sigma
        w = np.exp(-0.5 * np.minimum(z * z, 1400.0))
        total = w.sum()
        if total <= 0:  # extremely narrow kernel: nearest sample
            w = np.zeros(T)
            w[np.argmin(np.abs(traj.times - s))] = 1.0
            total = 1.0
        L = np.tensordot(w / total, logs, axes=(0, 0))
        out[i] = sym_exp(L)
    return CovarianceTrajectory(matrices=out)


def logdet_curve(traj: CovarianceTrajectory) -> np.ndarray:
    """Per-time-point values of ``log det(P(t)) / n``."""
    n = traj.dim
    vals = np.empty(traj.length)
    for k, P in enumerate(traj.matrices):
        w = np.linalg.eigvalsh(P)
        vals[k] = np.sum(np.log(w)) / n
    return vals


def normalize_trajectory(
    traj: CovarianceTrajectory,
) -> tuple[CovarianceTrajectory, np.ndarray]:
    """Pointwise determinant normalization; returns the log-det track too."""
    mats = np.empty_like(traj.matrices)
    track = np.empty(traj.length)
    for k, P in enumerate(traj.matrices):
        mats[k], track[k] = normalize_det(P)
    return CovarianceTrajectory(matrices=mats, times=traj.times.copy()), track


def pca_reduce_timeseries(
    ts: MultivariateTimeSeries, d: int
) -> MultivariateTimeSeries:
    """Project channels onto the top-d principal components of the channel covariance."""
    if d < 1 or d > ts.n_channels:
        raise ValueError(
            f"d must be in [1, {ts.n_channels}] for {ts.n_channels} channels, got {d}"
        )
    Xc = ts.values - ts.values.mean(axis=0)
    C = Xc.T @ Xc / (ts.n_times - 1)
    w, U = np.linalg.eigh(symmetrize(C))
    comps = U[:, np.argsort(-w)[:d]]
    return MultivariateTimeSeries(values=Xc @ comps, sampling_step=ts.sampling_step)

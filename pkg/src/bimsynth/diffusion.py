"""Noise-schedule and coordination-covariance numerics for dual-arm action sequences.

Action sequences are (2H, d) matrices: rows 0..H-1 hold the left-arm actions
over the horizon, rows H..2H-1 the right-arm actions.  Forward noising draws
correlated Gaussian noise whose 2H x 2H covariance couples the two arms
through an off-diagonal kernel scaled by a coupling strength rho; columns
(action dimensions) are independent and identically distributed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveSemiDefinite

ALPHA_BAR_FLOOR = 1e-5


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention sequence alpha_bar over K steps."""

    steps: int
    alpha_bar: np.ndarray  # length steps + 1, alpha_bar[0] == 1, strictly decreasing

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=float)
        if ab.shape != (self.steps + 1,):
            raise ValueError("alpha_bar must have steps + 1 entries")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be 1")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] < ALPHA_BAR_FLOOR:
            raise ValueError(f"alpha_bar floor {ALPHA_BAR_FLOOR} violated")
        object.__setattr__(self, "alpha_bar", ab)


def cosine_schedule(steps: int, offset: float = 0.008) -> NoiseSchedule:
    """Cosine schedule: alpha_bar(k) = f(k)/f(0), f(k) = cos^2(((k/K + s)/(1 + s)) * pi/2)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if offset <= 0.0:
        raise ValueError("offset must be positive")
    k = np.arange(steps + 1, dtype=float)
    f = np.cos(((k / steps + offset) / (1.0 + offset)) * (np.pi / 2.0)) ** 2
    alpha_bar = np.clip(f / f[0], ALPHA_BAR_FLOOR, None)
    alpha_bar[0] = 1.0
    return NoiseSchedule(steps, alpha_bar)


def squared_exponential_kernel(horizon: int, length_scale: float = 2.0) -> np.ndarray:
    """K(i, j) = exp(-(i - j)^2 / (2 l^2)); the default temporal smoothness prior."""
    idx = np.arange(horizon, dtype=float)
    diff = idx[:, None] - idx[None, :]
    return np.exp(-(diff**2) / (2.0 * length_scale**2))


@dataclass(frozen=True)
class CoordinationCovariance:
    """Assembled 2H x 2H arm-coordination covariance and its Cholesky factor."""

    horizon: int
    rho: float
    sigma: np.ndarray  # (2H, 2H) symmetric positive definite
    factor: np.ndarray  # lower triangular, factor @ factor.T == sigma


def build_covariance(
    sigma_left: np.ndarray,
    sigma_right: np.ndarray,
    sigma_cross: np.ndarray,
    rho: float,
) -> CoordinationCovariance:
    """Assemble [[S_L, rho*S_LR], [rho*S_LR^T, S_R]] and factorize it.

    The per-arm kernels must be symmetric H x H; the cross kernel only has to
    be square.  A factorization failure is reported as
    NotPositiveSemiDefinite, never silently repaired.
    """
    sl = np.asarray(sigma_left, dtype=float)
    sr = np.asarray(sigma_right, dtype=float)
    sx = np.asarray(sigma_cross, dtype=float)
    h = sl.shape[0]
    if sl.shape != (h, h) or sr.shape != (h, h) or sx.shape != (h, h):
        raise ValueError("kernels must share a common H x H shape")
    if not np.allclose(sl, sl.T, atol=1e-12) or not np.allclose(sr, sr.T, atol=1e-12):
        raise ValueError("per-arm kernels must be symmetric")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    sigma = np.block([[sl, rho * sx], [rho * sx.T, sr]])
    sigma = 0.5 * (sigma + sigma.T)
    try:
        factor = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveSemiDefinite(
            f"coordination covariance is not positive definite (rho={rho})"
        ) from exc
    return CoordinationCovariance(horizon=h, rho=rho, sigma=sigma, factor=factor)


def identity_covariance(horizon: int) -> CoordinationCovariance:
    eye = np.eye(horizon)
    return build_covariance(eye, eye, eye, 0.0)


def forward_noise(
    actions: np.ndarray,
    k: int,
    schedule: NoiseSchedule,
    cov: CoordinationCovariance,
    seed: int,
) -> np.ndarray:
    """Noised sequence sqrt(ab_k) * A0 + sqrt(1 - ab_k) * L @ Z, Z ~ N(0, I).

    Noise columns carry covariance sigma and are independent across the d
    action dimensions.  Deterministic for a given seed.  k = 0 is allowed for
    testing and returns the input exactly.
    """
    a0 = np.asarray(actions, dtype=float)
    if a0.ndim != 2 or a0.shape[0] != 2 * cov.horizon:
        raise ValueError(f"actions must be (2H, d) with H={cov.horizon}, got {a0.shape}")
    if not 0 <= k <= schedule.steps:
        raise ValueError(f"step {k} outside schedule range 0..{schedule.steps}")
    ab = schedule.alpha_bar[k]
    if ab == 1.0:
        return a0.copy()
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(a0.shape)
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * (cov.factor @ z)


def mahalanobis_loss(
    pred: np.ndarray,
    target: np.ndarray,
    cov: CoordinationCovariance,
) -> tuple[float, np.ndarray]:
    """Loss sum_cols r^T W r with W = sigma^{-1}, and its gradient 2 W r.

    W is applied through two triangular solves against the stored Cholesky
    factor; the inverse is never formed explicitly.
    """
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape or p.shape[0] != 2 * cov.horizon:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape} for H={cov.horizon}")
    r = p - t
    y = solve_triangular(cov.factor, r, lower=True)
    wr = solve_triangular(cov.factor.T, y, lower=False)
    loss = float(np.sum(r * wr))
    return loss, 2.0 * wr

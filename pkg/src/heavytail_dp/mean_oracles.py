"""Central-model DP mean estimators for batches of gradients.

Two estimators are provided. The L2 oracle clips each sample to a
centered ball, averages, and adds isotropic Gaussian noise calibrated to
the 2c/s swap sensitivity of the clipped average. The coordinate oracle
clips per coordinate, takes a median of group means (robust to a
minority of contaminated groups), and adds Gaussian noise calibrated to
the 2*tau*m*sqrt(d)/s sensitivity of the group-mean layer.

Summation order is fixed (strict index order, switching to a pairwise
tree above ``PAIRWISE_THRESHOLD`` samples) so results are bit-identical
across runs with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import median
from .privacy import ZcdpBudget, gaussian_noise, gaussian_sigma_squared

PAIRWISE_THRESHOLD = 4096


@dataclass(frozen=True)
class MomentAssumption:
    """A k-th moment bound on gradient norms, in root form.

    ``r_k`` bounds E[||grad||^k]**(1/k); ``raw()`` returns the k-th power,
    i.e. the bound on the raw moment E[||grad||^k] itself.
    """

    k: float
    r_k: float

    def __post_init__(self):
        if not self.k >= 2:
            raise ValueError(f"moment order k must be >= 2, got {self.k}")
        if not self.r_k > 0:
            raise ValueError(f"moment bound must be > 0, got {self.r_k}")

    def raw(self) -> float:
        return float(self.r_k) ** float(self.k)


@dataclass(frozen=True)
class NoisyGradientEstimate:
    """A private mean estimate plus the calibration metadata for audit."""

    estimate: np.ndarray
    clip_threshold: float
    noise_sigma_squared: float
    batch_size: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noise_sigma_squared < 0:
            raise ValueError("noise_sigma_squared must be >= 0")


def _as_batch(samples) -> np.ndarray:
    batch = np.asarray(samples, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[:, None]
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError(f"expected a nonempty (s, d) batch, got shape {batch.shape}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("batch contains non-finite entries")
    return batch


def fixed_order_sum(rows: np.ndarray) -> np.ndarray:
    """Sum rows of an (s, d) array in a reproducible order.

    Strict index order (sequential accumulation, realized by cumsum's
    final row) up to PAIRWISE_THRESHOLD rows; above that, a pairwise
    halving tree (odd row carried). Both orders are fixed, so repeated
    runs are bit-identical.
    """
    s = rows.shape[0]
    if s == 1:
        return rows[0].copy()
    if s <= PAIRWISE_THRESHOLD:
        return np.cumsum(rows, axis=0)[-1]
    work = rows
    carry = np.zeros(rows.shape[1])
    while work.shape[0] > 1:
        m = work.shape[0]
        if m % 2 == 1:
            carry = carry + work[-1]
            work = work[:-1]
        work = work[0::2] + work[1::2]
    return work[0] + carry


def clip_rows_l2(batch: np.ndarray, c: float) -> np.ndarray:
    """Row-wise L2 clip of an (s, d) batch to norm at most c."""
    if math.isinf(c):
        return batch
    norms = np.linalg.norm(batch, axis=1)
    scale = np.ones_like(norms)
    over = norms > c
    scale[over] = c / norms[over]
    return batch * scale[:, None]


def mean_oracle1(
    samples,
    c: float,
    rho: float,
    rng: np.random.Generator,
) -> NoisyGradientEstimate:
    """Clip-average-perturb mean estimator under a zCDP budget.

    Each sample is clipped to the centered L2 ball of radius c, the
    clipped samples are averaged in fixed order, and N(0, sigma^2 I) noise
    is added with sigma^2 = (2c/s)^2 / (2*rho). rho = inf gives the
    noiseless clipped mean.
    """
    batch = _as_batch(samples)
    s, d = batch.shape
    c = float(c)
    if not c > 0:
        raise ValueError(f"clip threshold must be > 0, got {c}")
    rho = float(rho)
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")

    clipped = clip_rows_l2(batch, c)
    prenoise = fixed_order_sum(clipped) / s
    if math.isinf(c):
        if not math.isinf(rho):
            raise ValueError(
                "infinite clip threshold has unbounded sensitivity; "
                "it is only valid with rho = inf (noiseless runs)"
            )
        sigma2 = 0.0
    else:
        sigma2 = gaussian_sigma_squared(2.0 * c / s, rho)
    estimate = prenoise + gaussian_noise(d, sigma2, rng)
    return NoisyGradientEstimate(estimate, c, sigma2, s)


def coordinate_mean_oracle(
    samples,
    tau: float,
    m: int,
    rho: float,
    rng: np.random.Generator,
) -> NoisyGradientEstimate:
    """Coordinate-wise median-of-means estimator with Gaussian noise.

    Per coordinate: scalars are clipped to [-tau, tau], partitioned by
    index into m contiguous groups of s/m, averaged per group, and the
    median of the m group means is taken. Gaussian noise is calibrated to
    the L2 sensitivity 2*tau*m*sqrt(d)/s of the group-mean layer (one
    swapped sample moves one group mean per coordinate by at most
    2*tau*m/s, and the median moves by no more than the means).
    """
    batch = _as_batch(samples)
    s, d = batch.shape
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    m = int(m)
    if m < 1 or m > s:
        raise ValueError(f"group count m must be in [1, s], got m={m}, s={s}")
    if s % m != 0:
        raise ValueError(f"group count m={m} must divide batch size s={s}")
    rho = float(rho)
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")

    clipped = np.clip(batch, -tau, tau)
    group_means = clipped.reshape(m, s // m, d).mean(axis=1)
    prenoise = np.array([median(group_means[:, j]) for j in range(d)])

    sensitivity = 2.0 * tau * m * math.sqrt(d) / s
    sigma2 = gaussian_sigma_squared(sensitivity, rho)
    estimate = prenoise + gaussian_noise(d, sigma2, rng)
    return NoisyGradientEstimate(estimate, tau, sigma2, s)


def default_moment_grid(domain, rng: np.random.Generator, n_random: int = 32) -> np.ndarray:
    """Probe grid for the empirical moment sup: random interior points
    plus the ball boundary points along each coordinate axis."""
    d = domain.dim
    directions = rng.standard_normal((n_random, d))
    directions /= np.maximum(np.linalg.norm(directions, axis=1), 1e-32)[:, None]
    radii = domain.radius * rng.random(n_random) ** (1.0 / d)
    points = [domain.center + radii[:, None] * directions]
    eye = np.eye(d)
    points.append(domain.center + domain.radius * eye)
    points.append(domain.center - domain.radius * eye)
    return np.vstack(points)


def estimate_empirical_moment(samples, w_grid, loss, k: float) -> float:
    """Grid approximation of sup_w (1/m) sum_i ||grad f(w, x_i)||^k.

    Returns the raw k-th moment (not the 1/k root). The supremum over the
    domain is approximated by the supplied grid; the estimate is a
    diagnostic, not a certified bound.
    """
    batch = _as_batch(samples)
    grid = np.asarray(w_grid, dtype=np.float64)
    if grid.ndim == 1:
        grid = grid[None, :]
    if grid.shape[0] == 0:
        raise ValueError("empty probe grid")
    k = float(k)
    best = 0.0
    for w in grid:
        grads = loss.batch_subgradient(w, batch)
        norms = np.linalg.norm(grads, axis=1)
        best = max(best, float(np.mean(norms**k)))
    return best

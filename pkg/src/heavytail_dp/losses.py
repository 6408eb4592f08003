"""Loss models, proximal operators, synthetic generators, excess risk.

Loss models expose per-sample ``value``/``subgradient`` plus a vectorized
``batch_subgradient`` used by the optimizers. Composite losses also carry
a smooth part and a proximal operator. Samples are rows of a 2-D array;
regression-style losses store the target in the last column.

Generators own a seeded numpy Generator; clone with distinct seeds rather
than sharing an instance across threads. Analytic moments are available
where closed forms exist (Pareto raw moments, truncated-normal moments
via scipy).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .geometry import Ball, project_ball
from .mean_oracles import MomentAssumption


# ---------------------------------------------------------------------------
# Proximal operators


def soft_threshold(z: np.ndarray, t: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass(frozen=True)
class ProxOperator:
    """prox_{eta*g} for g in {0, lambda*||.||_1, indicator of a ball}."""

    kind: str  # "zero" | "l1" | "ball-indicator"
    lam: float = 0.0
    ball: Ball | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "ball-indicator"):
            raise ValueError(f"unknown prox kind {self.kind!r}")
        if self.kind == "l1" and self.lam < 0:
            raise ValueError("l1 weight must be >= 0")
        if self.kind == "ball-indicator" and self.ball is None:
            raise ValueError("ball-indicator prox needs a ball")

    def apply(self, z: np.ndarray, eta: float) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "zero":
            return z.copy()
        if self.kind == "l1":
            return soft_threshold(z, eta * self.lam)
        return project_ball(z, self.ball)

    def penalty(self, w: np.ndarray) -> float:
        """Value of the regularizer g at w (inf outside a ball indicator)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return self.lam * float(np.abs(w).sum())
        return 0.0 if self.ball.contains(w, tol=1e-9) else math.inf


# ---------------------------------------------------------------------------
# Loss models


class LossModel:
    """Behavior contract for losses: value, subgradient, declared constants.

    ``mu``/``beta`` are the strong convexity and smoothness constants of
    the population objective (0 means not strongly convex / not uniformly
    smooth). ``w_independent_gradient`` marks losses whose subgradient
    does not depend on w, which lets optimizers reuse a clipped batch mean
    across iterations.
    """

    mu: float = 0.0
    beta: float = 0.0
    w_independent_gradient: bool = False

    def value(self, w: np.ndarray, x: np.ndarray) -> float:
        raise NotImplementedError

    def subgradient(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_subgradient(self, w: np.ndarray, batch: np.ndarray) -> np.ndarray:
        return np.vstack([self.subgradient(w, x) for x in batch])

    def batch_value(self, w: np.ndarray, batch: np.ndarray) -> float:
        return float(np.mean([self.value(w, x) for x in batch]))


class QuadraticLoss(LossModel):
    """f(w, x) = 0.5 * sum_j a_j (w_j - x_j)^2, isotropic when a is None."""

    def __init__(self, weights=None):
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        if self.weights is None:
            self.mu = 1.0
            self.beta = 1.0
        else:
            if np.any(self.weights <= 0):
                raise ValueError("quadratic weights must be positive")
            self.mu = float(self.weights.min())
            self.beta = float(self.weights.max())

    def value(self, w, x):
        diff = np.asarray(w) - np.asarray(x)
        if self.weights is None:
            return 0.5 * float(diff @ diff)
        return 0.5 * float((self.weights * diff) @ diff)

    def subgradient(self, w, x):
        diff = np.asarray(w, dtype=np.float64) - np.asarray(x, dtype=np.float64)
        return diff if self.weights is None else self.weights * diff

    def batch_subgradient(self, w, batch):
        diff = w[None, :] - batch
        return diff if self.weights is None else diff * self.weights[None, :]

    def batch_value(self, w, batch):
        diff = w[None, :] - batch
        if self.weights is not None:
            diff = diff * np.sqrt(self.weights)[None, :]
        return 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))


class LinearLoss(LossModel):
    """f(w, x) = -<w, x>; gradient -x, smooth with beta = 0."""

    mu = 0.0
    beta = 0.0
    w_independent_gradient = True

    def value(self, w, x):
        return -float(np.dot(w, x))

    def subgradient(self, w, x):
        return -np.asarray(x, dtype=np.float64)

    def batch_subgradient(self, w, batch):
        return -np.asarray(batch, dtype=np.float64)

    def batch_value(self, w, batch):
        return -float(np.mean(batch @ w))


class LinregLoss(LossModel):
    """Squared-error regression, sample = (features..., target).

    Convex but not uniformly Lipschitz or uniformly smooth over data.
    """

    mu = 0.0
    beta = 0.0

    def value(self, w, x):
        x = np.asarray(x, dtype=np.float64)
        residual = float(np.dot(w, x[:-1]) - x[-1])
        return 0.5 * residual * residual

    def subgradient(self, w, x):
        x = np.asarray(x, dtype=np.float64)
        residual = float(np.dot(w, x[:-1]) - x[-1])
        return residual * x[:-1]

    def batch_subgradient(self, w, batch):
        features = batch[:, :-1]
        residuals = features @ w - batch[:, -1]
        return residuals[:, None] * features

    def batch_value(self, w, batch):
        residuals = batch[:, :-1] @ w - batch[:, -1]
        return 0.5 * float(np.mean(residuals * residuals))


class CompositeLassoLoss(LossModel):
    """Least squares plus lam*||w||_1 with a soft-threshold prox.

    The smooth part is the squared error; the optimizers clip/perturb its
    gradients only and handle the l1 part through the prox.
    """

    def __init__(self, lam: float):
        lam = float(lam)
        if lam < 0:
            raise ValueError(f"l1 weight must be >= 0, got {lam}")
        self.lam = lam
        self.prox = ProxOperator("l1", lam=lam)
        self.mu = 0.0
        self.beta = 0.0

    def smooth_value(self, w, x):
        x = np.asarray(x, dtype=np.float64)
        residual = float(np.dot(w, x[:-1]) - x[-1])
        return 0.5 * residual * residual

    def value(self, w, x):
        return self.smooth_value(w, x) + self.lam * float(np.abs(w).sum())

    def smooth_part_gradient(self, w, x):
        x = np.asarray(x, dtype=np.float64)
        residual = float(np.dot(w, x[:-1]) - x[-1])
        return residual * x[:-1]

    def subgradient(self, w, x):
        return self.smooth_part_gradient(w, x) + self.lam * np.sign(w)

    def batch_smooth_gradient(self, w, batch):
        features = batch[:, :-1]
        residuals = features @ w - batch[:, -1]
        return residuals[:, None] * features

    batch_subgradient = None  # composite losses go through the prox path

    def batch_value(self, w, batch):
        residuals = batch[:, :-1] @ w - batch[:, -1]
        return 0.5 * float(np.mean(residuals * residuals)) + self.lam * float(
            np.abs(w).sum()
        )


class SmoothWithProx(LossModel):
    """Composite adapter: a smooth base loss plus an explicit prox term.

    Lets the proximal optimizer run on any smooth loss with a chosen
    regularizer (zero, l1, or a ball indicator as a hard constraint).
    """

    def __init__(self, base: LossModel, prox: ProxOperator):
        self.base = base
        self.prox = prox
        self.mu = base.mu
        self.beta = base.beta

    def smooth_value(self, w, x):
        return self.base.value(w, x)

    def value(self, w, x):
        return self.base.value(w, x) + self.prox.penalty(np.asarray(w))

    def smooth_part_gradient(self, w, x):
        return self.base.subgradient(w, x)

    def subgradient(self, w, x):
        return self.base.subgradient(w, x)

    def batch_smooth_gradient(self, w, batch):
        return self.base.batch_subgradient(w, batch)

    def batch_value(self, w, batch):
        return self.base.batch_value(w, batch) + self.prox.penalty(np.asarray(w))


def quadratic_loss(weights=None) -> QuadraticLoss:
    return QuadraticLoss(weights)


def linear_loss() -> LinearLoss:
    return LinearLoss()


def linreg_loss() -> LinregLoss:
    return LinregLoss()


def composite_lasso_loss(lam: float) -> CompositeLassoLoss:
    return CompositeLassoLoss(lam)


# ---------------------------------------------------------------------------
# Synthetic data generators


class Generator:
    """Base for seeded samplers producing (n, dim) arrays."""

    dim: int

    def __init__(self, seed):
        self._seed = seed
        self.rng = np.random.default_rng(seed)

    def sample(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def clone(self, seed):
        raise NotImplementedError


class TruncatedNormalGenerator(Generator):
    """Normal(mean, var) conditioned on [lo, hi], sampled by rejection.

    Rejection is acceptable because the intended truncation windows are
    wide; the constructor refuses windows with acceptance below ~1%.
    Moments come from scipy's truncnorm.
    """

    def __init__(self, mean, var, lo, hi, d=1, seed=0):
        super().__init__(seed)
        if not var > 0:
            raise ValueError("variance must be > 0")
        if not lo < hi:
            raise ValueError("need lo < hi")
        self.mean, self.var, self.lo, self.hi = float(mean), float(var), float(lo), float(hi)
        self.dim = int(d)
        sd = math.sqrt(self.var)
        self._a = (self.lo - self.mean) / sd
        self._b = (self.hi - self.mean) / sd
        accept = stats.norm.cdf(self._b) - stats.norm.cdf(self._a)
        if accept < 0.01:
            raise ValueError("truncation window too narrow for rejection sampling")

    def sample(self, n):
        sd = math.sqrt(self.var)
        out = np.empty((int(n), self.dim))
        filled = 0
        need = int(n) * self.dim
        flat = out.reshape(-1)
        while filled < need:
            draw = self.mean + sd * self.rng.standard_normal(need - filled)
            keep = draw[(draw >= self.lo) & (draw <= self.hi)]
            flat[filled : filled + keep.size] = keep
            filled += keep.size
        return out

    def _frozen(self):
        return stats.truncnorm(self._a, self._b, loc=self.mean, scale=math.sqrt(self.var))

    def coordinate_moment(self, k: int, central: bool = False) -> float:
        dist = self._frozen()
        if not central:
            return float(dist.moment(k))
        m = float(dist.mean())
        total = 0.0
        for j in range(k + 1):
            total += math.comb(k, j) * float(dist.moment(j)) * (-m) ** (k - j)
        return total

    def mean_vector(self):
        return np.full(self.dim, float(self._frozen().mean()))

    def clone(self, seed):
        return TruncatedNormalGenerator(
            self.mean, self.var, self.lo, self.hi, self.dim, seed
        )


class ParetoGenerator(Generator):
    """Pareto with given shape and scale; support [scale, inf).

    Raw moments E[X^k] = shape*scale^k/(shape-k) exist only for k < shape.
    """

    def __init__(self, shape, scale=1.0, d=1, seed=0):
        super().__init__(seed)
        if not shape > 0 or not scale > 0:
            raise ValueError("shape and scale must be > 0")
        self.shape, self.scale = float(shape), float(scale)
        self.dim = int(d)

    def sample(self, n):
        u = self.rng.random((int(n), self.dim))
        return self.scale * u ** (-1.0 / self.shape)

    def coordinate_raw_moment(self, k: float) -> float:
        if not self.shape > k:
            raise ValueError(
                f"Pareto shape {self.shape} must exceed k={k} for a finite moment"
            )
        return self.shape * self.scale**k / (self.shape - k)

    def mean_vector(self):
        return np.full(self.dim, self.coordinate_raw_moment(1))

    def variance(self) -> float:
        return self.coordinate_raw_moment(2) - self.coordinate_raw_moment(1) ** 2

    def clone(self, seed):
        return ParetoGenerator(self.shape, self.scale, self.dim, seed)


class BernoulliProductGenerator(Generator):
    """Independent +/-1 coordinates, coordinate j equal to +1 w.p. p_j."""

    def __init__(self, p_vector, seed=0):
        super().__init__(seed)
        p = np.asarray(p_vector, dtype=np.float64)
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        self.p = p
        self.dim = p.shape[0]

    def sample(self, n):
        u = self.rng.random((int(n), self.dim))
        return np.where(u < self.p[None, :], 1.0, -1.0)

    def mean_vector(self):
        return 2.0 * self.p - 1.0

    def coordinate_central_abs_moment(self, k: float, j: int = 0) -> float:
        p = float(self.p[j])
        mu = 2.0 * p - 1.0
        return p * abs(1.0 - mu) ** k + (1.0 - p) * abs(-1.0 - mu) ** k

    def clone(self, seed):
        return BernoulliProductGenerator(self.p, seed)


class SymmetricParetoGenerator(Generator):
    """Random-sign Pareto coordinates: mean zero, heavy two-sided tails.

    |X| is Pareto(shape, scale), so raw absolute moments stay in closed
    form: E|X|^k = shape*scale^k/(shape-k) for k < shape.
    """

    def __init__(self, shape, scale=1.0, d=1, seed=0, offset=None):
        super().__init__(seed)
        if not shape > 0 or not scale > 0:
            raise ValueError("shape and scale must be > 0")
        self.shape, self.scale = float(shape), float(scale)
        self.dim = int(d)
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=np.float64)

    def sample(self, n):
        n = int(n)
        magnitude = self.scale * self.rng.random((n, self.dim)) ** (-1.0 / self.shape)
        signs = np.where(self.rng.random((n, self.dim)) < 0.5, 1.0, -1.0)
        return self.offset[None, :] + signs * magnitude

    def coordinate_abs_moment(self, k: float) -> float:
        if not self.shape > k:
            raise ValueError(f"shape {self.shape} must exceed k={k}")
        return self.shape * self.scale**k / (self.shape - k)

    def mean_vector(self):
        return self.offset.copy()

    def clone(self, seed):
        return SymmetricParetoGenerator(self.shape, self.scale, self.dim, seed, self.offset)


def truncated_normal(mean, var, lo, hi, d=1, seed=0) -> TruncatedNormalGenerator:
    return TruncatedNormalGenerator(mean, var, lo, hi, d, seed)


def pareto_tail(shape, scale=1.0, d=1, seed=0) -> ParetoGenerator:
    return ParetoGenerator(shape, scale, d, seed)


def bernoulli_product(p_vector, seed=0) -> BernoulliProductGenerator:
    return BernoulliProductGenerator(p_vector, seed)


def symmetric_pareto(shape, scale=1.0, d=1, seed=0, offset=None) -> SymmetricParetoGenerator:
    return SymmetricParetoGenerator(shape, scale, d, seed, offset)


# ---------------------------------------------------------------------------
# Problem instances and excess risk


@dataclass(frozen=True)
class OptimumInfo:
    """Analytic optimum data when available: F*, w*, and a closed-form
    excess-risk map."""

    f_star: float | None = None
    w_star: np.ndarray | None = None
    excess_fn: object = None  # Callable[[np.ndarray], float]


@dataclass
class ProblemInstance:
    loss: LossModel
    domain: Ball
    distribution: Generator
    moment: MomentAssumption
    moment_2k: MomentAssumption | None = None
    optimum: OptimumInfo = field(default_factory=OptimumInfo)
    eval_size: int = 100_000

    def __post_init__(self):
        if self.optimum.w_star is not None and not self.domain.contains(
            self.optimum.w_star, tol=1e-9
        ):
            raise ValueError("declared optimum lies outside the domain")


def evaluate_excess_risk(
    instance: ProblemInstance,
    w,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Excess risk of w: analytic when the instance provides it, else a
    Monte-Carlo estimate against the best-known F*. Returns (value, stderr);
    the analytic path reports stderr 0."""
    w = np.asarray(w, dtype=np.float64)
    if instance.optimum.excess_fn is not None:
        return float(instance.optimum.excess_fn(w)), 0.0
    if instance.optimum.f_star is None:
        raise ValueError("instance provides neither an excess map nor F*")
    if rng is None:
        rng = np.random.default_rng(0)
    eval_gen = instance.distribution.clone(int(rng.integers(2**63)))
    batch = eval_gen.sample(instance.eval_size)
    values = _per_sample_values(instance.loss, w, batch)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    return mean - instance.optimum.f_star, stderr


def _per_sample_values(loss: LossModel, w: np.ndarray, batch: np.ndarray) -> np.ndarray:
    if isinstance(loss, QuadraticLoss):
        diff = w[None, :] - batch
        if loss.weights is not None:
            diff = diff * np.sqrt(loss.weights)[None, :]
        return 0.5 * np.sum(diff * diff, axis=1)
    if isinstance(loss, LinearLoss):
        return -(batch @ w)
    return np.array([loss.value(w, x) for x in batch])


def quadratic_instance(
    noise: Generator,
    center,
    radius_margin: float = 2.0,
    eval_size: int = 100_000,
) -> ProblemInstance:
    """Quadratic loss with data nu + noise over a ball that contains nu,
    so the excess risk is 0.5*||w - nu||^2 exactly."""
    nu = np.asarray(center, dtype=np.float64) + noise.mean_vector()
    radius = radius_margin * max(1.0, float(np.linalg.norm(nu)))
    domain = Ball(np.zeros(nu.shape[0]), radius)
    k, r_k, r_2k = _quadratic_moment_bounds(noise, nu, domain)
    shifted = _ShiftedGenerator(noise, np.asarray(center, dtype=np.float64))
    return ProblemInstance(
        loss=quadratic_loss(),
        domain=domain,
        distribution=shifted,
        moment=MomentAssumption(k, r_k),
        moment_2k=MomentAssumption(2 * k, r_2k),
        optimum=OptimumInfo(
            f_star=None,
            w_star=nu,
            excess_fn=lambda w: 0.5 * float(np.sum((np.asarray(w) - nu) ** 2)),
        ),
        eval_size=eval_size,
    )


def linear_instance(
    noise: Generator,
    mean_direction,
    radius: float = 1.0,
    eval_size: int = 100_000,
) -> ProblemInstance:
    """Linear loss with data of mean nu over Ball(0, radius): the excess
    risk is radius*||nu|| - <w, nu> exactly."""
    nu = np.asarray(mean_direction, dtype=np.float64) + noise.mean_vector()
    norm_nu = float(np.linalg.norm(nu))
    domain = Ball(np.zeros(nu.shape[0]), float(radius))
    k, r_k, r_2k = _linear_moment_bounds(noise, nu)
    shifted = _ShiftedGenerator(noise, np.asarray(mean_direction, dtype=np.float64))
    w_star = domain.radius * nu / norm_nu if norm_nu > 0 else domain.center
    return ProblemInstance(
        loss=linear_loss(),
        domain=domain,
        distribution=shifted,
        moment=MomentAssumption(k, r_k),
        moment_2k=MomentAssumption(2 * k, r_2k),
        optimum=OptimumInfo(
            f_star=-domain.radius * norm_nu,
            w_star=w_star,
            excess_fn=lambda w: domain.radius * norm_nu - float(np.dot(w, nu)),
        ),
        eval_size=eval_size,
    )


class _ShiftedGenerator(Generator):
    """Adds a constant offset to another generator's samples."""

    def __init__(self, base: Generator, offset: np.ndarray):
        self._base = base
        self.offset = offset
        self.dim = base.dim
        self.rng = base.rng

    def sample(self, n):
        return self._base.sample(n) + self.offset[None, :]

    def mean_vector(self):
        return self._base.mean_vector() + self.offset

    def clone(self, seed):
        return _ShiftedGenerator(self._base.clone(seed), self.offset)


def _coordinate_moments(noise: Generator) -> tuple[float, float]:
    """Centered second and fourth coordinate moments of a noise generator."""
    if isinstance(noise, SymmetricParetoGenerator):
        return noise.coordinate_abs_moment(2), noise.coordinate_abs_moment(4)
    if isinstance(noise, TruncatedNormalGenerator):
        return (
            noise.coordinate_moment(2, central=True),
            noise.coordinate_moment(4, central=True),
        )
    raise TypeError(f"no analytic moments for {type(noise).__name__}")


def _linear_moment_bounds(noise: Generator, nu: np.ndarray) -> tuple[float, float, float]:
    """Exact (k=2) gradient-norm moment values for the linear loss:
    E||x||^2 and E||x||^4 with x = nu + xi, xi symmetric with iid coords."""
    m2, m4 = _coordinate_moments(noise)
    d = noise.dim
    nu2 = float(nu @ nu)
    e2 = nu2 + d * m2
    e_xi4 = d * m4 + d * (d - 1) * m2 * m2
    e4 = nu2 * nu2 + 4.0 * nu2 * m2 + e_xi4 + 2.0 * nu2 * d * m2
    return 2.0, math.sqrt(e2), e4**0.25


def _quadratic_moment_bounds(
    noise: Generator, nu: np.ndarray, domain: Ball
) -> tuple[float, float, float]:
    """Valid upper bounds for sup-gradient moments of the quadratic loss:
    sup_w ||w - x|| <= R + ||x - c||, expanded with Cauchy-Schwarz bounds
    on the odd moments of u = ||x - c||."""
    m2, m4 = _coordinate_moments(noise)
    d = noise.dim
    shift = nu - domain.center
    s2 = float(shift @ shift)
    u2 = s2 + d * m2
    e_xi4 = d * m4 + d * (d - 1) * m2 * m2
    u4 = s2 * s2 + 4.0 * s2 * m2 + e_xi4 + 2.0 * s2 * d * m2
    r = domain.radius
    b2 = r * r + 2.0 * r * math.sqrt(u2) + u2
    b4 = r**4 + 4.0 * r**3 * math.sqrt(u2) + 6.0 * r * r * u2 + 4.0 * r * u4**0.75 + u4
    return 2.0, math.sqrt(b2), b4**0.25


# ---------------------------------------------------------------------------
# Dataset round-trip (cross-language regression format)


def save_dataset_csv(batch: np.ndarray, path) -> None:
    """One row per sample, fixed column order, repr-precision floats."""
    batch = np.asarray(batch, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(batch):
            writer.writerow([repr(float(v)) for v in row])


def load_dataset_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.asarray(rows, dtype=np.float64)

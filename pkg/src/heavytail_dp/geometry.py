"""Euclidean geometry primitives: L2 clipping, ball projections, medians.

Everything here is pure and operates on 1-D float64 numpy arrays. These
routines are the contraction/feasibility layer that every optimizer and
mean estimator in the package relies on, so they validate their inputs
and fail loudly on non-finite data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProjectionError(RuntimeError):
    """Raised when an iterative projection fails to converge."""


def as_vector(z) -> np.ndarray:
    """Coerce to a finite 1-D float64 array, rejecting NaN/Inf entries."""
    v = np.asarray(z, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


@dataclass(frozen=True)
class Ball:
    """Closed L2 ball with a given center and nonnegative radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        r = float(self.radius)
        if not np.isfinite(r) or r < 0:
            raise ValueError(f"radius must be finite and >= 0, got {r}")
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=np.float64)
        return float(np.linalg.norm(z - self.center)) <= self.radius + tol


@dataclass(frozen=True)
class LocalizedDomain:
    """Intersection of an outer constraint ball with a local trust ball.

    Construction fails if the two balls cannot intersect (center distance
    exceeding the sum of radii).
    """

    outer: Ball
    inner: Ball

    def __post_init__(self):
        if self.outer.dim != self.inner.dim:
            raise ValueError("outer and inner balls have mismatched dimensions")
        gap = float(np.linalg.norm(self.outer.center - self.inner.center))
        if gap > self.outer.radius + self.inner.radius + 1e-12:
            raise ValueError(
                f"empty intersection: center distance {gap:.6g} exceeds "
                f"radius sum {self.outer.radius + self.inner.radius:.6g}"
            )

    @property
    def dim(self) -> int:
        return self.outer.dim

    def contains(self, z, tol: float = 0.0) -> bool:
        return self.outer.contains(z, tol) and self.inner.contains(z, tol)


def clip_l2(z, c: float) -> np.ndarray:
    """Project z onto the centered L2 ball of radius c.

    Returns z unchanged (as a copy) when its norm is at most c, otherwise
    rescales it to norm exactly c. 1-Lipschitz in z.
    """
    v = as_vector(z)
    c = float(c)
    if not (c >= 0):
        raise ValueError(f"clip threshold must be >= 0, got {c}")
    norm = float(np.linalg.norm(v))
    if norm <= c:
        return v.copy()
    return v * (c / norm)


def project_ball(z, b: Ball) -> np.ndarray:
    """Closest point of ball b to z. Idempotent and nonexpansive."""
    v = as_vector(z)
    if v.shape[0] != b.dim:
        raise ValueError("dimension mismatch between point and ball")
    return b.center + clip_l2(v - b.center, b.radius)


def project_intersection(
    z,
    dom: LocalizedDomain,
    max_sweeps: int = 200,
    displacement_tol: float = 1e-12,
) -> np.ndarray:
    """Project z onto the intersection of the two balls of dom.

    Uses Dykstra's alternating projection scheme, which converges to the
    true (not merely feasible) projection for convex sets. Terminates when
    the per-sweep iterate displacement drops below ``displacement_tol``;
    raises ProjectionError with the residual after ``max_sweeps`` sweeps.
    """
    v = as_vector(z)
    if v.shape[0] != dom.dim:
        raise ValueError("dimension mismatch between point and domain")
    if dom.contains(v):
        return v.copy()

    x = v.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_sweeps):
        y = project_ball(x + p, dom.outer)
        p = x + p - y
        x_new = project_ball(y + q, dom.inner)
        q = y + q - x_new
        displacement = float(np.linalg.norm(x_new - x))
        x = x_new
        if displacement < displacement_tol:
            return x

    residual = max(
        float(np.linalg.norm(x - dom.outer.center)) - dom.outer.radius,
        float(np.linalg.norm(x - dom.inner.center)) - dom.inner.radius,
        0.0,
    )
    raise ProjectionError(
        f"Dykstra did not converge in {max_sweeps} sweeps; last displacement "
        f"{displacement:.3g}, feasibility residual {residual:.3g}"
    )


def project_domain(z, dom) -> np.ndarray:
    """Dispatch projection for either a Ball or a LocalizedDomain."""
    if isinstance(dom, Ball):
        return project_ball(z, dom)
    if isinstance(dom, LocalizedDomain):
        return project_intersection(z, dom)
    raise TypeError(f"unsupported domain type: {type(dom).__name__}")


def median(values) -> float:
    """Middle order statistic; mean of the two central values for even length."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("median of empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("median input has non-finite entries")
    return float(np.median(arr))

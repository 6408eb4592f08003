"""Zero-concentrated DP accounting and the Gaussian mechanism.

Budget arithmetic is exact and pure: sequential composition adds the
zCDP parameters, disjoint-data (parallel) groups contribute the max of
their members, and conversion to approximate DP follows
eps = rho + 2*sqrt(rho*ln(1/delta)).

Gaussian sampling uses ``numpy.random.Generator.standard_normal``
(ziggurat method); the sampling algorithm is part of the reproducibility
contract and must not change within a release.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ZcdpBudget:
    """A rho-zCDP privacy budget."""

    rho: float

    def __post_init__(self):
        r = float(self.rho)
        if math.isnan(r) or r < 0:
            raise ValueError(f"rho must be >= 0, got {r}")
        object.__setattr__(self, "rho", r)


@dataclass(frozen=True)
class ApproxDpBudget:
    """An (epsilon, delta) approximate-DP budget."""

    epsilon: float
    delta: float

    def __post_init__(self):
        eps = float(self.epsilon)
        delta = float(self.delta)
        if math.isnan(eps) or eps < 0:
            raise ValueError(f"epsilon must be >= 0, got {eps}")
        if not (0 <= delta < 1):
            raise ValueError(f"delta must be in [0, 1), got {delta}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)


def gaussian_sigma_squared(sensitivity: float, rho: float) -> float:
    """Noise variance calibrating the Gaussian mechanism to rho-zCDP.

    Returns sensitivity**2 / (2*rho). rho may be math.inf, which yields 0
    (the noiseless limit used by exact-gradient tests).
    """
    sensitivity = float(sensitivity)
    rho = float(rho)
    if sensitivity < 0:
        raise ValueError(f"sensitivity must be >= 0, got {sensitivity}")
    if not rho > 0:
        raise ValueError(f"rho must be > 0 (rho=0 means infinite noise), got {rho}")
    if math.isinf(rho):
        return 0.0
    return sensitivity * sensitivity / (2.0 * rho)


def compose_sequential(budgets) -> ZcdpBudget:
    """Sequential zCDP composition: parameters add."""
    return ZcdpBudget(math.fsum(b.rho for b in budgets))


def zcdp_to_approx_dp(budget: ZcdpBudget, delta: float) -> ApproxDpBudget:
    """Convert rho-zCDP to its (rho + 2*sqrt(rho*ln(1/delta)), delta) form."""
    delta = float(delta)
    if not (0 < delta < 1):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    rho = budget.rho
    eps = rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))
    return ApproxDpBudget(eps, delta)


def approx_dp_to_zcdp(epsilon: float, delta: float) -> ZcdpBudget:
    """Largest rho whose standard conversion stays within (epsilon, delta).

    Inverts eps = rho + 2*sqrt(rho*L) with L = ln(1/delta):
    sqrt(rho) = sqrt(L + eps) - sqrt(L).
    """
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if not (0 < delta < 1):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    big_l = math.log(1.0 / delta)
    root = math.sqrt(big_l + epsilon) - math.sqrt(big_l)
    return ZcdpBudget(root * root)


def gaussian_noise(d: int, sigma_squared: float, rng: np.random.Generator) -> np.ndarray:
    """d independent N(0, sigma_squared) draws; zeros when sigma_squared == 0."""
    d = int(d)
    if d < 0:
        raise ValueError(f"dimension must be >= 0, got {d}")
    sigma_squared = float(sigma_squared)
    if sigma_squared < 0:
        raise ValueError(f"sigma_squared must be >= 0, got {sigma_squared}")
    if sigma_squared == 0.0:
        return np.zeros(d)
    return math.sqrt(sigma_squared) * rng.standard_normal(d)


@dataclass(frozen=True)
class LedgerEntry:
    label: str
    budget: ZcdpBudget
    group: str | None = None  # None = sequential; same group id = parallel


@dataclass
class AccountantLedger:
    """Descriptive record of zCDP spends.

    Optimizers register what they spent; the ledger does not enforce a cap.
    Sequential entries add; entries sharing a parallel-group id (disjoint
    data) contribute only their maximum. ``audit`` compares the total to a
    declared target.
    """

    entries: list[LedgerEntry] = field(default_factory=list)

    def add(self, label: str, budget: ZcdpBudget, group: str | None = None) -> None:
        self.entries.append(LedgerEntry(str(label), budget, group))

    def total(self) -> ZcdpBudget:
        sequential = [e.budget.rho for e in self.entries if e.group is None]
        groups: dict[str, float] = {}
        for e in self.entries:
            if e.group is not None:
                groups[e.group] = max(groups.get(e.group, 0.0), e.budget.rho)
        return ZcdpBudget(math.fsum(sequential + list(groups.values())))

    def audit(self, target: ZcdpBudget, rel_tol: float = 1e-12) -> bool:
        spent = self.total().rho
        return spent <= target.rho or math.isclose(spent, target.rho, rel_tol=rel_tol)

    def report(self) -> str:
        """Line-oriented text report: label, rho, cumulative rho."""
        lines = []
        cumulative = 0.0
        seen_groups: dict[str, float] = {}
        for e in self.entries:
            if e.group is None:
                cumulative = math.fsum([cumulative, e.budget.rho])
            else:
                prev = seen_groups.get(e.group, 0.0)
                new = max(prev, e.budget.rho)
                cumulative = math.fsum([cumulative, new - prev])
                seen_groups[e.group] = new
            lines.append(f"{e.label},{e.budget.rho!r},{cumulative!r}")
        return "\n".join(lines)

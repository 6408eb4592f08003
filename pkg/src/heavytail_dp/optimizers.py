"""Private first-order optimizers driven by pluggable mean oracles.

Five procedures share the same skeleton: draw a batch, estimate the mean
(sub)gradient privately, step, project. They differ in their parameter
schedules, which are realized here with the explicit constants from
their convergence analyses and are individually overridable through
OptimizerConfig.

Budget bookkeeping: a run is configured with a zCDP budget rho. Batches
that touch disjoint data register as one parallel ledger group (their
total is the max, i.e. rho); multi-step passes over the same batch split
rho evenly across steps and compose sequentially. Shuffle oracles run
each oracle call at the approximate-DP level implied by that call's zCDP
share via the standard conversion, so central and shuffle runs of the
same configuration are matched step for step.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ball, LocalizedDomain, project_ball, project_domain
from .mean_oracles import (
    MomentAssumption,
    NoisyGradientEstimate,
    clip_rows_l2,
    coordinate_mean_oracle,
    fixed_order_sum,
    mean_oracle1,
)
from .privacy import (
    AccountantLedger,
    ZcdpBudget,
    gaussian_noise,
    gaussian_sigma_squared,
    zcdp_to_approx_dp,
)
from .shuffle_protocols import shuffle_mean_oracle1, shuffle_mean_oracle2

ORACLE_KINDS = ("central-l2", "central-coordinate", "shuffle-l2", "shuffle-coordinate")


@dataclass(frozen=True)
class OracleSpec:
    """Which mean oracle an optimizer uses, plus oracle-specific knobs.

    ``delta`` is the total approximate-DP delta for shuffle kinds;
    ``groups`` is the target median-of-means group count for coordinate
    kinds (fitted down to the largest divisor of the batch size).
    """

    kind: str = "central-l2"
    delta: float | None = None
    groups: int | None = None

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}; valid: {ORACLE_KINDS}")
        if self.kind.startswith("shuffle") and not (self.delta and 0 < self.delta < 0.5):
            raise ValueError("shuffle oracles require delta in (0, 1/2)")

    @property
    def is_shuffle(self) -> bool:
        return self.kind.startswith("shuffle")

    def estimate(
        self,
        grads: np.ndarray,
        clip: float,
        rho_call: float,
        delta_call: float | None,
        rng: np.random.Generator,
    ) -> NoisyGradientEstimate:
        s = grads.shape[0]
        if self.kind == "central-l2":
            return mean_oracle1(grads, clip, rho_call, rng)
        if self.kind == "central-coordinate":
            m = _fit_groups(self._target_groups(grads.shape[1]), s)
            return coordinate_mean_oracle(grads, clip, m, rho_call, rng)
        approx = zcdp_to_approx_dp(ZcdpBudget(rho_call), delta_call)
        if self.kind == "shuffle-l2":
            return shuffle_mean_oracle1(grads, clip, approx.epsilon, delta_call, rng)
        m = _fit_groups(self._target_groups(grads.shape[1]), s)
        return shuffle_mean_oracle2(grads, clip, m, approx.epsilon, delta_call, rng)

    def _target_groups(self, d: int) -> int:
        if self.groups is not None:
            return self.groups
        return math.ceil(20.0 * math.log(4.0 * d / 0.05))


def _fit_groups(target: int, s: int) -> int:
    m = max(1, min(int(target), s))
    while s % m != 0:
        m -= 1
    return m


@dataclass
class OptimizerConfig:
    """Run configuration: budget, problem constants, and overrides.

    ``moment`` carries the k-th moment bound on sup-domain gradient norms
    (root form); ``moment_2k`` the corresponding 2k bound where a clip
    recipe needs it. ``eta``, ``steps``, ``clip`` override the schedule
    defaults. mu/beta fall back to the loss's declared constants.
    """

    budget: ZcdpBudget
    moment: MomentAssumption
    domain: Ball
    moment_2k: MomentAssumption | None = None
    mu: float | None = None
    beta: float | None = None
    diameter: float | None = None
    delta0: float | None = None
    eta: float | None = None
    steps: int | None = None
    clip: float | None = None
    oracle: OracleSpec = field(default_factory=OracleSpec)

    def epsilon(self) -> float:
        """The eps with rho = eps^2/2; inf for a noiseless run."""
        return math.sqrt(2.0 * self.budget.rho)

    def loss_mu(self, loss) -> float:
        return self.mu if self.mu is not None else float(loss.mu)

    def loss_beta(self, loss) -> float:
        return self.beta if self.beta is not None else float(loss.beta)

    def domain_diameter(self) -> float:
        return self.diameter if self.diameter is not None else 2.0 * self.domain.radius


@dataclass
class TraceRow:
    step: int
    phase: int
    distance: float
    rho_spent: float
    clip: float
    sigma2: float


@dataclass
class RunTrace:
    """Per-step audit trail: distance to a reference point, spends, noise."""

    reference: np.ndarray | None = None
    rows: list[TraceRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def record(self, step, phase, w, rho_spent, clip, sigma2) -> None:
        ref = self.reference
        distance = float(np.linalg.norm(w if ref is None else w - ref))
        self.rows.append(TraceRow(step, phase, distance, rho_spent, clip, sigma2))

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,phase,distance,rho_spent,clip,sigma2\n")
            for r in self.rows:
                fh.write(
                    f"{r.step},{r.phase},{r.distance!r},{r.rho_spent!r},"
                    f"{r.clip!r},{r.sigma2!r}\n"
                )


def _shuffled(data, rng: np.random.Generator) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return data[rng.permutation(data.shape[0])]


def _noise_sigma2(clip: float, s: int, rho_step: float) -> float:
    if math.isinf(clip):
        if not math.isinf(rho_step):
            raise ValueError("infinite clip threshold requires an infinite budget")
        return 0.0
    return gaussian_sigma_squared(2.0 * clip / s, rho_step)


# ---------------------------------------------------------------------------
# Noisy clipped regularized subgradient method (multi-pass ERM solver)


def clipped_regularized_subgradient(
    data,
    loss,
    domain,
    w0,
    lam: float,
    eta: float,
    steps: int,
    clip: float,
    rho_total: float,
    rng: np.random.Generator,
    *,
    oracle: OracleSpec | None = None,
    delta_total: float | None = None,
    ledger: AccountantLedger | None = None,
    trace: RunTrace | None = None,
    phase: int = 0,
) -> np.ndarray:
    """T projected steps on the regularized empirical loss over one batch.

    Only the loss subgradients go through the clipping oracle; the
    regularization pull lam*(w - w0) is applied outside it, so the
    estimator's sensitivity (and hence the noise) is unaffected by lam.
    Per-step budget is rho_total/steps, composed sequentially.
    """
    batch = np.asarray(data, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[:, None]
    s = batch.shape[0]
    steps = int(steps)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    eta = float(eta)
    if lam > 0 and eta > 2.0 / lam:
        raise ValueError(f"need eta <= 2/lam, got eta={eta}, 2/lam={2.0 / lam}")
    oracle = oracle or OracleSpec()

    rho_step = rho_total / steps
    delta_step = None
    if oracle.is_shuffle:
        delta_step = (delta_total if delta_total is not None else oracle.delta) / steps

    anchor = project_domain(np.asarray(w0, dtype=np.float64), domain)
    w = anchor.copy()
    clip = float(clip)

    cache_gradients = getattr(loss, "w_independent_gradient", False)
    cached_grads = loss.batch_subgradient(w, batch) if cache_gradients else None
    cached_prenoise = None
    cached_sigma2 = None
    if cache_gradients and oracle.kind == "central-l2":
        cached_prenoise = fixed_order_sum(clip_rows_l2(cached_grads, clip)) / s
        cached_sigma2 = _noise_sigma2(clip, s, rho_step)

    d = w.shape[0]
    for t in range(steps):
        if cached_prenoise is not None:
            est_vec = cached_prenoise + gaussian_noise(d, cached_sigma2, rng)
            sigma2 = cached_sigma2
        else:
            grads = cached_grads if cached_grads is not None else loss.batch_subgradient(w, batch)
            est = oracle.estimate(grads, clip, rho_step, delta_step, rng)
            est_vec = est.estimate
            sigma2 = est.noise_sigma_squared
        w = project_domain(w - eta * (est_vec + lam * (w - anchor)), domain)
        if ledger is not None:
            ledger.add(f"phase{phase}/step{t}", ZcdpBudget(rho_step))
        if trace is not None:
            trace.record(t, phase, w, rho_step, clip, sigma2)
    return w


# ---------------------------------------------------------------------------
# Localized subgradient method (convex) and its strongly convex reduction


@dataclass(frozen=True)
class PhaseParams:
    index: int
    batch_size: int
    eta: float
    lam: float
    radius: float
    clip: float
    steps: int
    sigma2: float
    clamped: bool


def localized_schedule(
    n: int,
    d: int,
    k: float,
    eta: float,
    rho: float,
    r_k: float,
    r_2k: float,
    diameter: float,
    steps_override: int | None = None,
    clip_override: float | None = None,
) -> list[PhaseParams]:
    """Per-phase parameters of the localized method for n = 2**l samples.

    Phase i halves the batch (n_i = n/2^i), quarters the step size
    (eta_i = eta/4^i), sets lam_i = 1/(eta_i n_i^p) with p = 1 + 1/k,
    trust radius D_i = 4 r_k (sqrt(n) 2^i)^{1/k} / lam_i, clip threshold
    r_2k (eps n_i / sqrt(d ln n))^{1/k} (last phase: r_2k (eps/sqrt(d))^{1/k}),
    and solves T_i = (1/(lam_i eta_i)) ln(D^2 lam_i / (d sigma_i^2 eta_i))
    self-consistently with sigma_i^2 = 4 C_i^2 T_i / (n_i^2 eps^2).
    """
    levels = int(math.log2(n))
    if 2**levels != n:
        raise ValueError("n must be a power of two")
    eps = math.sqrt(2.0 * rho)
    p = 1.0 + 1.0 / k
    out = []
    for i in range(1, levels + 1):
        n_i = n >> i
        eta_i = eta * 4.0 ** (-i)
        lam_i = 1.0 / (eta_i * n_i**p)
        if clip_override is not None:
            clip_i = clip_override
        elif i < levels:
            clip_i = r_2k * (eps * n_i / math.sqrt(d * math.log(n))) ** (1.0 / k)
        else:
            clip_i = r_2k * (eps / math.sqrt(d)) ** (1.0 / k)
        radius_i = 4.0 * r_k * (math.sqrt(n) * 2.0**i) ** (1.0 / k) / lam_i
        noise_unit = _noise_sigma2(clip_i, n_i, rho)  # sigma_i^2 at T_i = 1
        if steps_override is not None:
            steps_i, clamped = int(steps_override), False
        else:
            steps_i, clamped = _solve_phase_steps(
                1.0 / (lam_i * eta_i), diameter**2 * lam_i / (eta_i * d), noise_unit
            )
        out.append(
            PhaseParams(
                index=i,
                batch_size=n_i,
                eta=eta_i,
                lam=lam_i,
                radius=radius_i,
                clip=clip_i,
                steps=steps_i,
                sigma2=noise_unit * steps_i,
                clamped=clamped,
            )
        )
    return out


def _solve_phase_steps(inv_lam_eta: float, numerator: float, noise_unit: float):
    """Solve T = inv_lam_eta * ln(A/T), A = numerator/noise_unit, by bisection.

    Returns (T, clamped): T >= 1 always; clamped marks the log argument
    having been <= 1 already at T = 1 (noise floor above the target), in
    which case a single step is used.
    """
    if noise_unit == 0.0:
        raise ValueError(
            "noiseless runs have no finite step-count solution; supply a steps override"
        )
    big_a = numerator / noise_unit
    if not big_a > 1.0:
        return 1, True
    lo, hi = 1e-12, big_a
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - inv_lam_eta * math.log(big_a / mid) < 0:
            lo = mid
        else:
            hi = mid
    return max(1, math.ceil(hi)), False


def _default_localized_eta(
    n: int, d: int, k: float, rho: float, r_k: float, diameter: float
) -> float:
    """Base step size from the convergence analysis, with all moment
    constants collapsed to r_k (the stricter sup-form bound)."""
    eps = math.sqrt(2.0 * rho)
    p = 1.0 + 1.0 / k
    terms = [1.0 / (r_k * n ** (1.0 / (2 * k)))]
    if not math.isinf(eps):
        terms.append(
            (1.0 / (r_k * n ** (p / 2.0)))
            * (eps * n / math.sqrt(d * math.log(n))) ** ((k - 1.0) / k)
        )
    return (diameter / n ** (p / 2.0)) * min(terms)


def localized_sco(
    data,
    loss,
    domain: Ball,
    w0,
    config: OptimizerConfig,
    rng: np.random.Generator,
    *,
    ledger: AccountantLedger | None = None,
    trace: RunTrace | None = None,
    ledger_group: str | None = None,
) -> np.ndarray:
    """Multi-phase localized solver for convex losses.

    Each phase runs the regularized subgradient method on a fresh disjoint
    batch inside a shrinking trust ball around the previous output. Sample
    count not a power of two is truncated down after one global shuffle.
    """
    if config.moment is None or config.moment_2k is None:
        raise ValueError("localized_sco needs both k and 2k moment bounds")
    data = _shuffled(data, rng)
    n_raw = data.shape[0]
    if n_raw < 2:
        raise ValueError(f"need at least 2 samples, got {n_raw}")
    n = 2 ** int(math.floor(math.log2(n_raw)))
    data = data[:n]

    d = np.asarray(w0).shape[0]
    k = config.moment.k
    rho = config.budget.rho
    diameter = config.domain_diameter()
    eta = config.eta
    if eta is None:
        eta = _default_localized_eta(n, d, k, rho, config.moment.r_k, diameter)
    schedule = localized_schedule(
        n,
        d,
        k,
        eta,
        rho,
        config.moment.r_k,
        config.moment_2k.r_k,
        diameter,
        steps_override=config.steps,
        clip_override=config.clip,
    )

    group = ledger_group
    if ledger is not None and group is None:
        group = f"localized#{len(ledger.entries)}"
    w = project_ball(np.asarray(w0, dtype=np.float64), domain)
    offset = 0
    for params in schedule:
        batch = data[offset : offset + params.batch_size]
        offset += params.batch_size
        if params.clamped and trace is not None:
            trace.warn(
                f"phase {params.index}: step-count log argument <= 1, clamped to one step"
            )
        dom_i = LocalizedDomain(domain, Ball(w, params.radius))
        w = clipped_regularized_subgradient(
            batch,
            loss,
            dom_i,
            w,
            params.lam,
            params.eta,
            params.steps,
            params.clip,
            rho,
            rng,
            oracle=config.oracle,
            trace=trace,
            phase=params.index,
        )
        if ledger is not None:
            ledger.add(f"localized/phase{params.index}", ZcdpBudget(rho), group=group)
    return w


def strongly_convex_phase_sizes(n: int) -> list[int]:
    """Sample counts N_j = 2^(j-2) n / log2(n) for the restart phases."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    log2n = math.log2(n)
    m_phases = math.ceil(math.log2(log2n)) if log2n > 1 else 1
    if m_phases <= 1:
        return [n]
    sizes = [int(2.0 ** (j - 2) * n / log2n) for j in range(1, m_phases + 1)]
    if sizes[0] < 2:
        raise ValueError(
            f"n={n} is too small to give every restart phase at least 2 samples"
        )
    return sizes


def strongly_convex_sco(
    data,
    loss,
    domain: Ball,
    w0,
    config: OptimizerConfig,
    rng: np.random.Generator,
    *,
    ledger: AccountantLedger | None = None,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """Restart reduction for strongly convex losses.

    Runs the localized solver on geometrically growing disjoint sample
    blocks, warm-starting each phase at the previous output. For n <= 4
    (a single phase) it degenerates to one localized run on all samples.
    """
    if config.loss_mu(loss) <= 0:
        raise ValueError("strongly_convex_sco requires mu > 0")
    data = _shuffled(data, rng)
    n = data.shape[0]
    sizes = strongly_convex_phase_sizes(n)
    group = None
    if ledger is not None:
        group = f"strongly-convex#{len(ledger.entries)}"
    w = np.asarray(w0, dtype=np.float64)
    offset = 0
    for j, n_j in enumerate(sizes, start=1):
        block = data[offset : offset + n_j]
        offset += n_j
        w = localized_sco(
            block,
            loss,
            domain,
            w,
            config,
            rng,
            ledger=ledger,
            trace=trace,
            ledger_group=group,
        )
    return w


# ---------------------------------------------------------------------------
# Accelerated one-pass method for smooth convex losses


def acsa_step_count(
    n: int, d: int, k: float, rho: float, r_k: float, beta: float, diameter: float
) -> int:
    """Default iteration count: the analysis' ceil(min(...)) clamped to [1, n]."""
    eps = math.sqrt(2.0 * rho)
    ratio = beta * diameter / r_k
    t2 = math.sqrt(ratio) * n**0.25
    if math.isinf(eps):
        t_val = t2
    else:
        t1 = ratio ** (2.0 * k / (5.0 * k - 1.0)) * (eps * n / math.sqrt(d)) ** (
            (2.0 * k - 2.0) / (5.0 * k - 1.0)
        )
        t_val = min(t1, t2)
    return min(max(1, math.ceil(t_val)), n)


def acsa(
    data,
    loss,
    domain: Ball,
    w0,
    config: OptimizerConfig,
    rng: np.random.Generator,
    *,
    ledger: AccountantLedger | None = None,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """Accelerated stochastic approximation with clipped, noisy gradients.

    One pass over T disjoint batches with alpha_t = 2/(t+1) and
    eta_t = 4 eta / (t (t+1)); the prox subproblem solves in closed form
    as a projected step of length alpha_t/eta_t. Returns the aggregate
    iterate.
    """
    data = _shuffled(data, rng)
    n = data.shape[0]
    d = np.asarray(w0).shape[0]
    k = config.moment.k
    r = config.moment.r_k
    rho = config.budget.rho
    eps = config.epsilon()
    beta = config.loss_beta(loss)
    diameter = config.domain_diameter()

    steps = config.steps or acsa_step_count(n, d, k, rho, r, beta, diameter)
    if steps > n:
        raise ValueError(f"step count {steps} exceeds sample count {n}")
    batch_size = n // steps

    if config.clip is not None:
        clip = config.clip
    else:
        clip = r * (eps * n / math.sqrt(d * steps)) ** (1.0 / k)

    eta = config.eta
    if eta is None:
        sigma2 = _noise_sigma2(clip, batch_size, rho)
        bias = config.moment.raw() / ((k - 1.0) * clip ** (k - 1.0)) if not math.isinf(clip) else 0.0
        variance = d * sigma2 + r * r * steps / n
        eta = max(2.0 * beta, steps**1.5 * math.sqrt(variance + bias * bias) / diameter)
    if not eta > 0:
        raise ValueError("step scale eta must be > 0; supply eta explicitly for beta=0 noiseless runs")

    group = None
    if ledger is not None:
        group = f"acsa#{len(ledger.entries)}"
    w = project_ball(np.asarray(w0, dtype=np.float64), domain)
    w_ag = w.copy()
    for t in range(1, steps + 1):
        alpha = 2.0 / (t + 1.0)
        eta_t = 4.0 * eta / (t * (t + 1.0))
        w_md = (1.0 - alpha) * w_ag + alpha * w
        batch = data[(t - 1) * batch_size : t * batch_size]
        grads = loss.batch_subgradient(w_md, batch)
        est = oracle_estimate(config, grads, clip, rho, rng)
        w = project_ball(w - (alpha / eta_t) * est.estimate, domain)
        w_ag = alpha * w + (1.0 - alpha) * w_ag
        if ledger is not None:
            ledger.add(f"acsa/batch{t}", ZcdpBudget(rho), group=group)
        if trace is not None:
            trace.record(t, 0, w_ag, rho, clip, est.noise_sigma_squared)
    return w_ag


def oracle_estimate(config, grads, clip, rho_call, rng):
    """One oracle call at the full per-batch budget (disjoint-batch path)."""
    return config.oracle.estimate(grads, clip, rho_call, config.oracle.delta, rng)


# ---------------------------------------------------------------------------
# One-pass clipped SGD for smooth strongly convex losses


def stich_schedule(steps: int, a: float, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Step sizes and averaging weights realizing the two-phase schedule.

    For steps+1 iterations indexed t = 0..steps: if steps <= g/a, a
    constant step 1/g with geometrically growing weights; otherwise a
    constant phase up to t0 = ceil(steps/2) followed by decaying steps
    2/(a (s0 + t - t0)), s0 = 2g/a, with quadratic weights on the decay
    and boundary-matched decaying weights on the constant phase.
    """
    if not (a > 0 and g > 0):
        raise ValueError("need a > 0 and g > 0")
    if a > g:
        raise ValueError("schedule assumes g >= a")
    t_axis = np.arange(steps + 1, dtype=np.float64)
    if steps <= g / a:
        etas = np.full(steps + 1, 1.0 / g)
        zetas = (1.0 - a / g) ** (-(t_axis + 1.0))
        return etas, zetas
    t0 = math.ceil(steps / 2.0)
    s0 = 2.0 * g / a
    etas = np.empty(steps + 1)
    zetas = np.empty(steps + 1)
    const = t_axis <= t0
    etas[const] = 1.0 / g
    zetas[const] = s0 * s0 * (1.0 - a / g) ** (t0 - t_axis[const])
    decay = ~const
    shifted = s0 + t_axis[decay] - t0
    etas[decay] = 2.0 / (a * shifted)
    zetas[decay] = shifted * shifted
    return etas, zetas


def sgd_sc_step_count(
    n: int, d: int, k: float, rho: float, r_k: float, mu: float, beta: float, diameter: float
) -> int:
    """Default T = ceil(4 kappa ln(mu beta D^2/r^2 (n + (eps^2 n^2/d)^((k-1)/k))))."""
    eps = math.sqrt(2.0 * rho)
    kappa = beta / mu
    inner = float(n)
    if not math.isinf(eps):
        inner += (eps * eps * n * n / d) ** ((k - 1.0) / k)
    arg = mu * beta * diameter * diameter / (r_k * r_k) * inner
    steps = math.ceil(4.0 * kappa * math.log(max(arg, math.e)))
    return max(1, steps)


def clipped_sgd_sc(
    data,
    loss,
    domain: Ball,
    w0,
    config: OptimizerConfig,
    rng: np.random.Generator,
    *,
    ledger: AccountantLedger | None = None,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """One-pass noisy clipped SGD with weighted iterate averaging.

    Runs steps+1 iterations on disjoint batches and returns the
    zeta-weighted average of the post-step iterates.
    """
    mu = config.loss_mu(loss)
    beta = config.loss_beta(loss)
    if mu <= 0 or beta <= 0:
        raise ValueError("clipped_sgd_sc requires mu > 0 and beta > 0")
    data = _shuffled(data, rng)
    n = data.shape[0]
    d = np.asarray(w0).shape[0]
    k = config.moment.k
    r = config.moment.r_k
    rho = config.budget.rho
    eps = config.epsilon()
    diameter = config.domain_diameter()
    kappa = beta / mu

    if n >= 3 and kappa > n / math.log(n):
        _warnings.warn(
            f"condition number {kappa:.3g} exceeds n/ln(n)={n / math.log(n):.3g}; "
            "the convergence bound is not guaranteed",
            RuntimeWarning,
        )
        if trace is not None:
            trace.warn("condition number exceeds n/ln(n)")

    steps = config.steps or sgd_sc_step_count(n, d, k, rho, r, mu, beta, diameter)
    if steps + 1 > n:
        _warnings.warn(
            f"step count {steps} clamped to n-1={n - 1} to keep batches disjoint",
            RuntimeWarning,
        )
        steps = n - 1
    batch_size = n // (steps + 1)

    if config.clip is not None:
        clip = config.clip
    else:
        clip = r * (eps * eps * n * n / (d * steps)) ** (1.0 / (2.0 * k))

    etas, zetas = stich_schedule(steps, mu / 2.0, beta)
    group = None
    if ledger is not None:
        group = f"sgd-sc#{len(ledger.entries)}"
    w = project_ball(np.asarray(w0, dtype=np.float64), domain)
    total_weight = 0.0
    averaged = np.zeros_like(w)
    for t in range(steps + 1):
        batch = data[t * batch_size : (t + 1) * batch_size]
        grads = loss.batch_subgradient(w, batch)
        est = oracle_estimate(config, grads, clip, rho, rng)
        w = project_ball(w - etas[t] * est.estimate, domain)
        averaged += zetas[t] * w
        total_weight += zetas[t]
        if ledger is not None:
            ledger.add(f"sgd-sc/batch{t}", ZcdpBudget(rho), group=group)
        if trace is not None:
            trace.record(t, 0, w, rho, clip, est.noise_sigma_squared)
    return averaged / total_weight


# ---------------------------------------------------------------------------
# Proximal clipped SGD for composite (proximal-PL) losses


def prox_sgd_step_count(
    n: int,
    d: int,
    k: float,
    rho: float,
    r_k: float,
    mu: float,
    beta: float,
    delta0: float,
) -> tuple[int, float]:
    """Self-consistent (T, C): C = r (eps^2 n^2/(d T^2))^(1/2k) and
    T = 2 ceil(kappa ln(delta0 mu / (B^2 + Sigma^2))) clamped to [1, n]."""
    eps = math.sqrt(2.0 * rho)
    kappa = beta / mu
    raw = r_k**k

    def clip_for(steps: int) -> float:
        if math.isinf(eps):
            return math.inf
        return r_k * (eps * eps * n * n / (d * steps * steps)) ** (1.0 / (2.0 * k))

    steps = min(n, max(1, 2 * math.ceil(kappa)))
    for _ in range(40):
        clip = clip_for(steps)
        batch = max(1, n // steps)
        sigma2 = _noise_sigma2(clip, batch, rho)
        bias = 0.0 if math.isinf(clip) else raw / ((k - 1.0) * clip ** (k - 1.0))
        variance = d * sigma2 + r_k * r_k * steps / n
        denom = bias * bias + variance
        if denom <= 0:
            new_steps = n
        else:
            arg = delta0 * mu / denom
            new_steps = min(n, max(1, 2 * math.ceil(kappa * math.log(max(arg, math.e)))))
        if new_steps == steps:
            break
        steps = new_steps
    return steps, clip_for(steps)


def prox_clipped_sgd(
    data,
    loss,
    w0,
    config: OptimizerConfig,
    rng: np.random.Generator,
    *,
    ledger: AccountantLedger | None = None,
    trace: RunTrace | None = None,
) -> np.ndarray:
    """Proximal SGD: clip/perturb the smooth part's gradients, then prox.

    Constant step 1/(2 beta); one pass over disjoint batches; returns the
    last iterate. The loss must expose batch_smooth_gradient and a prox
    operator (composite decomposition).
    """
    if not hasattr(loss, "batch_smooth_gradient") or not hasattr(loss, "prox"):
        raise ValueError("prox_clipped_sgd needs a composite loss (smooth part + prox)")
    mu = config.loss_mu(loss)
    beta = config.loss_beta(loss)
    if mu <= 0 or beta <= 0:
        raise ValueError("prox_clipped_sgd requires mu > 0 and beta > 0")
    data = _shuffled(data, rng)
    n = data.shape[0]
    d = np.asarray(w0).shape[0]
    k = config.moment.k
    rho = config.budget.rho
    eps = config.epsilon()

    if n >= 3 and beta / mu > n / math.log(n):
        _warnings.warn(
            "condition number exceeds n/ln(n); the convergence bound is not guaranteed",
            RuntimeWarning,
        )

    if config.steps is not None:
        steps = config.steps
        if config.clip is not None:
            clip = config.clip
        elif math.isinf(eps):
            clip = math.inf
        else:
            clip = config.moment.r_k * (
                eps * eps * n * n / (d * steps * steps)
            ) ** (1.0 / (2.0 * k))
    else:
        if config.delta0 is None:
            raise ValueError("prox_clipped_sgd needs delta0 (initial gap bound) or a steps override")
        steps, clip = prox_sgd_step_count(
            n, d, k, rho, config.moment.r_k, mu, beta, config.delta0
        )
        if config.clip is not None:
            clip = config.clip
    if steps > n:
        raise ValueError(f"step count {steps} exceeds sample count {n}")
    batch_size = n // steps

    eta = 1.0 / (2.0 * beta)
    group = None
    if ledger is not None:
        group = f"prox-sgd#{len(ledger.entries)}"
    w = np.asarray(w0, dtype=np.float64).copy()
    for t in range(steps):
        batch = data[t * batch_size : (t + 1) * batch_size]
        grads = loss.batch_smooth_gradient(w, batch)
        est = oracle_estimate(config, grads, clip, rho, rng)
        w = loss.prox.apply(w - eta * est.estimate, eta)
        if ledger is not None:
            ledger.add(f"prox-sgd/batch{t}", ZcdpBudget(rho), group=group)
        if trace is not None:
            trace.record(t, 0, w, rho, clip, est.noise_sigma_squared)
    return w

"""Shuffle-model DP summation: the scalar protocol and its vector wrappers.

The scalar protocol encodes each value in [0, tau] as a fixed-point count
of ones (granularity g) with stochastic rounding, pads it with
Binomial(b, p) noise ones, and ships g+b unlabeled bits through a
uniformly random shuffler. The analyzer, a symmetric function of the bit
multiset, debiases the total count of ones:

    estimate = (tau/g) * (total_ones - p*b*s).

Parameter derivation follows
    g = max(2, ceil(2*tau*sqrt(s))),
    b = ceil(180*g^2*ln(2/delta) / (eps^2*s)) + 1,
    p = 90*g^2*ln(2/delta) / (b*eps^2*s),
which keeps p strictly below 1/2 whenever it is well defined.

Noise bits are never materialized unless they are needed: the analyzer
output depends on the bit multiset only through the count of ones, so for
large g+b the protocol is sampled in condensed form (per-client stochastic
rounding plus a single Binomial(s*b, p) draw), which has exactly the same
output distribution as the bit-level pipeline. Binomial draws use CDF
inversion for b <= 64 and numpy's exact generator above that; a normal
approximation is never used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mean_oracles import NoisyGradientEstimate, _as_batch, clip_rows_l2

# Above this many total bits, run_p1d switches to the condensed sampler.
MAX_MATERIALIZED_BITS = 1 << 22


@dataclass(frozen=True)
class P1dParams:
    """Design parameters of the scalar summation protocol."""

    g: int
    b: int
    p: float
    tau: float

    def __post_init__(self):
        if self.g < 1 or self.b < 1:
            raise ValueError("g and b must be positive integers")
        if not (0 < self.p < 0.5):
            raise ValueError(f"noise rate p must lie in (0, 1/2), got {self.p}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def bits_per_client(self) -> int:
        return self.g + self.b


@dataclass(frozen=True)
class ClientReport:
    """One client's anonymized message: g+b binary values."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
            raise ValueError("report must be a flat 0/1 sequence")
        object.__setattr__(self, "bits", bits)

    @property
    def ones(self) -> int:
        return int(self.bits.sum())


def derive_p1d_params(s: int, tau: float, epsilon: float, delta: float) -> P1dParams:
    """Derive (g, b, p) for s clients with values in [0, tau].

    Requires epsilon <= 15 and delta in (0, 1/2). Raises when the derived
    noise rate p would leave (0, 1/2), which signals that epsilon is too
    small for the batch size.
    """
    s = int(s)
    if s < 1:
        raise ValueError(f"need at least one client, got s={s}")
    tau = float(tau)
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    epsilon = float(epsilon)
    delta = float(delta)
    if not (0 < epsilon <= 15):
        raise ValueError(f"epsilon must be in (0, 15], got {epsilon}")
    if not (0 < delta < 0.5):
        raise ValueError(f"delta must be in (0, 1/2), got {delta}")

    g = max(2, math.ceil(2.0 * tau * math.sqrt(s)))
    log_term = math.log(2.0 / delta)
    lower = 180.0 * g * g * log_term / (epsilon * epsilon * s)
    b = math.ceil(lower) + 1
    p = 90.0 * g * g * log_term / (b * epsilon * epsilon * s)
    if not (0.0 < p < 0.5):
        raise ValueError(
            f"derived noise rate p={p:.4g} is outside (0, 1/2); "
            "epsilon is too small for this batch size"
        )
    return P1dParams(g=g, b=b, p=p, tau=tau)


def _binomial(rng: np.random.Generator, b: int, p: float) -> int:
    """Exact Binomial(b, p) draw: CDF inversion for b <= 64, else numpy."""
    if b <= 64:
        u = rng.random()
        prob = (1.0 - p) ** b
        cdf = prob
        k = 0
        while u > cdf and k < b:
            prob *= (b - k) / (k + 1) * (p / (1.0 - p))
            k += 1
            cdf += prob
        return k
    return int(rng.binomial(b, p))


def _fixed_point_encode(z: float, params: P1dParams, rng: np.random.Generator) -> int:
    """Stochastically rounded fixed-point value in {0, ..., g}."""
    z = float(z)
    if not (0.0 <= z <= params.tau * (1.0 + 1e-12) + 1e-300):
        raise ValueError(f"value {z} outside [0, tau={params.tau}]")
    if params.tau == 0.0:
        return 0
    scaled = min(z, params.tau) * params.g / params.tau
    base = int(math.floor(scaled))
    frac = scaled - base
    if base >= params.g:
        return params.g
    return base + (1 if rng.random() < frac else 0)


def randomize_1d(z: float, params: P1dParams, rng: np.random.Generator) -> ClientReport:
    """Client-side randomizer: encode z, pad with binomial noise ones."""
    encoded = _fixed_point_encode(z, params, rng)
    noise_ones = _binomial(rng, params.b, params.p)
    total = encoded + noise_ones
    bits = np.zeros(params.bits_per_client, dtype=np.uint8)
    bits[:total] = 1
    return ClientReport(bits)


def shuffle(reports, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random permutation (Fisher-Yates) of all reports' bits."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to shuffle")
    length = reports[0].bits.shape[0]
    if any(r.bits.shape[0] != length for r in reports):
        raise ValueError("reports must have uniform length")
    flat = np.concatenate([r.bits for r in reports])
    rng.shuffle(flat)
    return flat


def analyze_1d(bits, s: int, params: P1dParams) -> float:
    """Debiased sum estimate from the shuffled bit multiset."""
    bits = np.asarray(bits)
    expected = s * params.bits_per_client
    if bits.shape[0] != expected:
        raise ValueError(f"expected {expected} bits for s={s} clients, got {bits.shape[0]}")
    if params.tau == 0.0:
        return 0.0
    ones = float(bits.sum())
    return (params.tau / params.g) * (ones - params.p * params.b * s)


def rle_encode(bits) -> str:
    """Run-length encode a bit sequence as 'value:count,...' (one text line)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return ""
    change = np.flatnonzero(np.diff(bits)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [bits.size]])
    return ",".join(f"{int(bits[a])}:{int(e - a)}" for a, e in zip(starts, ends))


def run_p1d(
    zs,
    params: P1dParams,
    rng: np.random.Generator,
    trace: list | None = None,
) -> float:
    """Full randomize/shuffle/analyze pipeline over a batch of scalars.

    With ``trace`` supplied, the shuffled bit multiset is materialized and
    its run-length encoding appended to the list (protocol-trace debug
    path). Otherwise, when the total bit count exceeds
    MAX_MATERIALIZED_BITS, a condensed sampler with an identical output
    distribution is used: the analyzer is symmetric, so only the total
    count of ones matters, and the sum of s independent Binomial(b, p)
    noise draws is Binomial(s*b, p).
    """
    zs = np.asarray(zs, dtype=np.float64)
    if zs.ndim != 1 or zs.size == 0:
        raise ValueError("zs must be a nonempty 1-D array")
    s = zs.size
    total_bits = s * params.bits_per_client

    if trace is not None or total_bits <= MAX_MATERIALIZED_BITS:
        if total_bits > MAX_MATERIALIZED_BITS:
            raise ValueError(
                f"cannot materialize {total_bits} bits for tracing "
                f"(limit {MAX_MATERIALIZED_BITS}); use smaller parameters"
            )
        reports = [randomize_1d(z, params, rng) for z in zs]
        shuffled = shuffle(reports, rng)
        if trace is not None:
            trace.append(rle_encode(shuffled))
        return analyze_1d(shuffled, s, params)

    # Condensed path: identical output law, no bit materialization.
    if params.tau == 0.0:
        return 0.0
    scaled = np.minimum(zs, params.tau) * (params.g / params.tau)
    if np.any(zs < 0) or np.any(zs > params.tau * (1.0 + 1e-12)):
        raise ValueError("values outside [0, tau]")
    base = np.floor(scaled)
    frac = scaled - base
    encoded = base + (rng.random(s) < frac)
    encoded = np.minimum(encoded, params.g)
    noise_ones = float(rng.binomial(int(s) * int(params.b), params.p))
    ones = float(encoded.sum()) + noise_ones
    return (params.tau / params.g) * (ones - params.p * params.b * s)


def coordinate_budget(epsilon: float, delta: float, d: int) -> tuple[float, float]:
    """Per-coordinate (eps_j, delta_j) split for d-fold protocol composition.

    delta_j = delta/(2d) and eps_j = epsilon / (4*sqrt(2*d*ln(1/delta_j)));
    advanced composition over the d invocations then stays within
    (epsilon, delta) provided epsilon <= 8*ln(2d/delta), which is enforced.
    """
    epsilon = float(epsilon)
    delta = float(delta)
    d = int(d)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not (0 < delta < 0.5):
        raise ValueError(f"delta must be in (0, 1/2), got {delta}")
    cap = 8.0 * math.log(2.0 * d / delta)
    if not (0 < epsilon <= cap):
        raise ValueError(f"epsilon must be in (0, {cap:.4g}] for d={d}, delta={delta}")
    delta_j = delta / (2.0 * d)
    eps_j = epsilon / (4.0 * math.sqrt(2.0 * d * math.log(1.0 / delta_j)))
    return eps_j, delta_j


def p_vec(
    vectors,
    c: float,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    trace: list | None = None,
) -> np.ndarray:
    """Shuffle-private coordinate-wise sum of vectors with norms <= c.

    Each coordinate is shifted by +c into [0, 2c], summed through the
    scalar protocol with range 2c under the per-coordinate budget split,
    and recentered by subtracting s*c.
    """
    batch = _as_batch(vectors)
    s, d = batch.shape
    c = float(c)
    if c < 0:
        raise ValueError("norm bound c must be >= 0")
    norms = np.linalg.norm(batch, axis=1)
    if np.any(norms > c * (1.0 + 1e-9)):
        raise ValueError(f"input norm {norms.max():.6g} exceeds bound c={c}")

    eps_j, delta_j = coordinate_budget(epsilon, delta, d)
    params = derive_p1d_params(s, 2.0 * c, eps_j, delta_j)
    out = np.empty(d)
    for j in range(d):
        shifted = np.clip(batch[:, j] + c, 0.0, 2.0 * c)
        out[j] = run_p1d(shifted, params, rng, trace=trace) - s * c
    return out


def _p1d_mean_noise_var(params: P1dParams, s: int) -> float:
    """Binomial-layer variance of the protocol's per-value mean estimate."""
    if params.tau == 0.0:
        return 0.0
    scale = params.tau / params.g
    return scale * scale * params.b * params.p * (1.0 - params.p) / s


def shuffle_mean_oracle1(
    samples,
    c: float,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
) -> NoisyGradientEstimate:
    """Shuffle counterpart of the L2 clip-average oracle.

    Clips each sample to the centered ball of radius c, runs the vector
    summation protocol, and divides by s so the interface returns a mean
    estimate. The noise metadata records the per-coordinate binomial-layer
    variance of the mean (stochastic rounding excluded).
    """
    batch = _as_batch(samples)
    s, d = batch.shape
    c = float(c)
    if not c > 0:
        raise ValueError(f"clip threshold must be > 0, got {c}")
    clipped = clip_rows_l2(batch, c)
    if math.isinf(c):
        raise ValueError("shuffle oracle requires a finite clip threshold")
    sums = p_vec(clipped, c, epsilon, delta, rng)
    eps_j, delta_j = coordinate_budget(epsilon, delta, d)
    params = derive_p1d_params(s, 2.0 * c, eps_j, delta_j)
    return NoisyGradientEstimate(sums / s, c, _p1d_mean_noise_var(params, s), s)


def shuffle_mean_oracle2(
    samples,
    tau: float,
    m: int,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
) -> NoisyGradientEstimate:
    """Shuffle counterpart of the coordinate median-of-means oracle.

    Per coordinate, under the per-coordinate budget split: scalars are
    clipped to [-tau, tau], shifted by +tau, each of the m index-contiguous
    groups of s/m values is summed through the scalar protocol with range
    2*tau, group sums become recentered group means, and the median across
    groups is returned.
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

    eps_j, delta_j = coordinate_budget(epsilon, delta, d)
    group_size = s // m
    params = derive_p1d_params(group_size, 2.0 * tau, eps_j, delta_j)

    estimate = np.empty(d)
    for j in range(d):
        shifted = np.clip(batch[:, j], -tau, tau) + tau
        groups = shifted.reshape(m, group_size)
        means = np.empty(m)
        for i in range(m):
            means[i] = run_p1d(groups[i], params, rng) / group_size - tau
        estimate[j] = float(np.median(means))
    return NoisyGradientEstimate(
        estimate, tau, _p1d_mean_noise_var(params, group_size), s
    )

"""Output analysis: steady-state means, errors, KS tests, replication CIs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

from .errors import DomainError, InsufficientDataError

DEFAULT_WARMUP = 200.0
KS_MIN_SAMPLES = 20


@dataclass(frozen=True)
class SteadyStateEstimate:
    mean: float
    half_width: float
    replication_count: int

    @property
    def low(self):
        return self.mean - self.half_width

    @property
    def high(self):
        return self.mean + self.half_width


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    sample_size: int


def steady_mean(times, values, warmup: float = DEFAULT_WARMUP) -> float:
    """Time-weighted mean of a piecewise-constant series over ``[warmup, times[-1]]``.

    Each value holds from its own timestamp until the next one.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise DomainError("times and values must be 1-D arrays of equal length")
    if t.size < 2 or t[-1] <= warmup:
        raise InsufficientDataError(f"no observations after warm-up {warmup}")
    if np.any(np.diff(t) < 0):
        raise DomainError("timestamps must be nondecreasing")
    # clip each holding interval [t_i, t_{i+1}) to [warmup, t_end]
    start = np.maximum(t[:-1], warmup)
    stop = np.maximum(t[1:], warmup)
    weights = stop - start
    return float(np.dot(weights, v[:-1]) / (t[-1] - warmup))


def relative_error(simulated: float, analytical: float) -> float:
    if analytical == 0:
        raise DomainError("relative error against an analytical value of 0 is undefined")
    return (simulated - analytical) / analytical


def kolmogorov_sf(x: float, terms: int = 100) -> float:
    """P(K > x) for the Kolmogorov distribution (asymptotic KS p-value)."""
    if x <= 0:
        return 1.0
    if x < 1.18:
        # Jacobi-theta form converges fast for small x
        s = 0.0
        for k in range(1, terms + 1):
            s += math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / x * s))
    s = 0.0
    for k in range(1, terms + 1):
        s += (-1) ** (k - 1) * math.exp(-2 * k * k * x * x)
    return min(1.0, max(0.0, 2.0 * s))


def ks_exponential(samples, rate: float) -> KsResult:
    """One-sample KS test of ``samples`` against Exponential(rate)."""
    if not rate > 0:
        raise DomainError(f"rate must be > 0, got {rate}")
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < KS_MIN_SAMPLES:
        raise InsufficientDataError(f"KS test needs at least {KS_MIN_SAMPLES} samples, got {n}")
    cdf = -np.expm1(-rate * np.maximum(x, 0.0))
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - cdf)), float(np.max(cdf - (i - 1) / n)))
    return KsResult(statistic=d, p_value=kolmogorov_sf(math.sqrt(n) * d), sample_size=n)


def aggregate(values, confidence: float = 0.95) -> SteadyStateEstimate:
    """Mean across replications with a Student-t confidence half-width."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise InsufficientDataError(f"need at least 2 replications, got {v.size}")
    sd = float(np.std(v, ddof=1))
    t = float(_sps.t.ppf(0.5 + confidence / 2, v.size - 1))
    return SteadyStateEstimate(float(np.mean(v)), t * sd / math.sqrt(v.size), int(v.size))


def first_entry_time(times, values, target: float, tolerance: float = 0.1):
    """First time the series comes within ``tolerance`` (relative) of ``target``, or None."""
    v = np.asarray(values, dtype=float)
    hits = np.flatnonzero(np.abs(v - target) <= tolerance * abs(target))
    return float(np.asarray(times)[hits[0]]) if hits.size else None

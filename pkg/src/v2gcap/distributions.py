"""Seeded random streams and the small family of distributions the model needs.

Every stochastic process of a replication owns one :class:`RandomStream`.
Streams are keyed by ``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`
so that perturbing one process never shifts the draws of another.

All variates are built from three primitives of the underlying PCG64 bit
generator (uniform double, ziggurat normal, ziggurat exponential). The
compiled kernel calls the same C routines on the same bit generator, which
is what makes both simulation backends bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, DomainError

TRUNCNORM_MAX_REJECTIONS = 10_000


class Stream(IntEnum):
    """Stream ids, one per stochastic process of a replication."""

    ARRIVALS = 0
    SOC = 1
    THRESHOLDS = 2
    STAY = 3
    QUIT = 4
    PSI1 = 5
    PSI2 = 6
    PSI3 = 7


class RandomStream:
    """Independent, reproducible source of variates."""

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}", "seed")
        if stream_id < 0:
            raise ConfigurationError(f"stream id must be non-negative, got {stream_id}", "stream_id")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.bit_generator = np.random.PCG64(seq)
        self.generator = np.random.Generator(self.bit_generator)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    def random(self) -> float:
        return float(self.generator.random())

    def standard_normal(self) -> float:
        return float(self.generator.standard_normal())

    def standard_exponential(self) -> float:
        return float(self.generator.standard_exponential())


def replication_seed(master_seed: int, replication: int) -> int:
    """Derive the seed of one replication from the experiment's master seed."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication),))
    return int(seq.generate_state(1, np.uint64)[0])


_PARAMS = {
    "exponential": ("rate",),
    "truncated_normal": ("mean", "std", "low", "high"),
    "uniform": ("low", "high"),
    "constant": ("value",),
}


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution kind plus its parameters, in scenario units."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ConfigurationError(
                f"unknown distribution kind {self.kind!r}; expected one of {sorted(_PARAMS)}"
            )
        names = _PARAMS[self.kind]
        if len(self.params) != len(names):
            raise ConfigurationError(f"{self.kind} takes parameters {names}, got {self.params!r}")
        values = tuple(float(v) for v in self.params)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"{self.kind} parameters must be finite, got {values!r}")
        object.__setattr__(self, "params", values)
        p = dict(zip(names, values))
        if self.kind == "exponential" and p["rate"] <= 0:
            raise ConfigurationError(f"exponential rate must be > 0, got {p['rate']}")
        if self.kind == "truncated_normal":
            if p["std"] <= 0:
                raise ConfigurationError(f"truncated_normal std must be > 0, got {p['std']}")
            if not p["low"] < p["high"]:
                raise ConfigurationError(
                    f"truncated_normal needs low < high, got [{p['low']}, {p['high']}]"
                )
        if self.kind == "uniform" and p["low"] > p["high"]:
            raise ConfigurationError(f"uniform needs low <= high, got [{p['low']}, {p['high']}]")

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", (rate,))

    @classmethod
    def truncated_normal(cls, mean, std, low, high):
        return cls("truncated_normal", (mean, std, low, high))

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", (low, high))

    @classmethod
    def constant(cls, value):
        return cls("constant", (value,))

    @classmethod
    def from_mapping(cls, data):
        """Build from ``{"kind": ..., <named params>}`` as found in scenario files."""
        data = dict(data)
        kind = data.pop("kind", None)
        if kind not in _PARAMS:
            raise ConfigurationError(f"unknown distribution kind {kind!r}")
        names = _PARAMS[kind]
        missing = [n for n in names if n not in data]
        extra = sorted(set(data) - set(names))
        if missing or extra:
            raise ConfigurationError(
                f"{kind} takes parameters {names}; missing {missing}, unexpected {extra}"
            )
        return cls(kind, tuple(data[n] for n in names))

    def as_mapping(self) -> dict:
        return {"kind": self.kind, **dict(zip(_PARAMS[self.kind], self.params))}

    @property
    def param_names(self):
        return _PARAMS[self.kind]

    def mean(self) -> float:
        """Analytic mean, used by the Monte-Carlo checks."""
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "exponential":
            return 1.0 / self.params[0]
        if self.kind == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        mean, std, low, high = self.params
        a, b = (low - mean) / std, (high - mean) / std
        z = _phi_cdf(b) - _phi_cdf(a)
        return mean + std * (_phi_pdf(a) - _phi_pdf(b)) / z

    def variance(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "exponential":
            return 1.0 / self.params[0] ** 2
        if self.kind == "uniform":
            return (self.params[1] - self.params[0]) ** 2 / 12.0
        mean, std, low, high = self.params
        a, b = (low - mean) / std, (high - mean) / std
        z = _phi_cdf(b) - _phi_cdf(a)
        fa, fb = _phi_pdf(a), _phi_pdf(b)
        # a*pdf(a) -> 0 as a -> -inf; guard the inf*0 product
        afa = a * fa if math.isfinite(a) else 0.0
        bfb = b * fb if math.isfinite(b) else 0.0
        return std**2 * (1 + (afa - bfb) / z - ((fa - fb) / z) ** 2)


def _phi_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) if math.isfinite(z) else 0.0


def _phi_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2))


def truncated_normal(stream: RandomStream, mean, std, low, high) -> float:
    """Rejection-sample ``N(mean, std)`` restricted to ``[low, high]``."""
    for _ in range(TRUNCNORM_MAX_REJECTIONS + 1):
        v = mean + std * stream.standard_normal()
        if low <= v <= high:
            return v
    raise DomainError(
        f"truncated normal N({mean}, {std}) on [{low}, {high}] rejected "
        f"{TRUNCNORM_MAX_REJECTIONS} draws in a row"
    )


def sample(spec: DistributionSpec, stream: RandomStream) -> float:
    """Draw one variate from ``spec``."""
    kind, p = spec.kind, spec.params
    if kind == "constant":
        return p[0]
    if kind == "exponential":
        return stream.standard_exponential() / p[0]
    if kind == "uniform":
        return p[0] + (p[1] - p[0]) * stream.random()
    return truncated_normal(stream, *p)


def next_poisson_interarrival(rate: float, stream: RandomStream) -> float:
    """Gap until the next event of a Poisson process with ``rate`` events per minute."""
    if not rate > 0:
        raise ConfigurationError(f"Poisson rate must be > 0, got {rate}", "lambda")
    return stream.standard_exponential() / rate

"""Scenario configuration, its file format, and the EV population generator.

Scenario files are flat TOML: one key per line, ``#`` comments, and
distributions written as inline tables::

    lambda = 5.0
    stay = { kind = "truncated_normal", mean = 420.0, std = 60.0, low = 60.0, high = 780.0 }
"""
from __future__ import annotations

import math
import sys
from dataclasses import MISSING, dataclass, fields, replace
from pathlib import Path

from .distributions import DistributionSpec, RandomStream, Stream, sample, truncated_normal
from .errors import ConfigurationError
from .smart_charge import EvRequest, RateBounds

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# file key -> attribute name, where they differ
_FILE_KEYS = {"lambda": "lam"}
_ATTR_KEYS = {v: k for k, v in _FILE_KEYS.items()}

SOC_REJECTION_CAP = 10_000


@dataclass(frozen=True)
class ScenarioConfig:
    lam: float
    frac_no_charge: float
    soc_init: DistributionSpec
    stay: DistributionSpec
    r_low: float
    r_high: float
    q1: float
    q2: float
    mu1: float
    mu2: float
    mu3: float
    p_ev: float
    soc_high_mean_frac: float = 0.5
    soc_high_std_frac: float = 0.1
    soc_low_mult_low: float = 0.6
    soc_low_mult_high: float = 0.8
    delta_t_reg: float = 1.0
    horizon: float = 1440.0
    warmup: float = 200.0
    replications: int = 100
    sample_interval: float = 1.0
    generation_cap: int = 1_000_000

    def __post_init__(self):
        def fail(name, why):
            raise ConfigurationError(f"{_ATTR_KEYS.get(name, name)}: {why}", _ATTR_KEYS.get(name, name))

        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in ("float", "int"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    fail(f.name, f"expected a number, got {value!r}")
                if not math.isfinite(value):
                    fail(f.name, f"must be finite, got {value!r}")
            elif not isinstance(value, DistributionSpec):
                fail(f.name, f"expected a distribution, got {value!r}")
        for name in ("lam", "mu1", "mu2", "mu3", "p_ev", "delta_t_reg", "sample_interval"):
            if not getattr(self, name) > 0:
                fail(name, f"must be > 0, got {getattr(self, name)}")
        for name in ("frac_no_charge", "q1", "q2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                fail(name, f"must lie in [0, 1], got {getattr(self, name)}")
        if not 0.0 <= self.r_low <= self.r_high:
            fail("r_low", f"need 0 <= r_low <= r_high, got [{self.r_low}, {self.r_high}]")
        if self.soc_high_mean_frac < 0 or self.soc_high_std_frac <= 0:
            fail("soc_high_mean_frac", "upper-target rule needs mean_frac >= 0 and std_frac > 0")
        if not 0.0 <= self.soc_low_mult_low <= self.soc_low_mult_high <= 1.0:
            fail("soc_low_mult_low", "lower-target multiplier range must sit inside [0, 1]")
        if self.horizon < 0 or self.warmup < 0:
            fail("horizon", "horizon and warmup must be non-negative")
        for name in ("replications", "generation_cap"):
            value = getattr(self, name)
            if value != int(value) or value < 1:
                fail(name, f"must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        low, high = _support(self.soc_init)
        if self.soc_init.kind == "exponential" or low < 0 or high > 1:
            fail("soc_init", "support must lie inside [0, 1]")
        low, _ = _support(self.stay)
        if self.stay.kind == "exponential" or low <= 0:
            fail("stay", "support must be bounded away from zero")

    @property
    def bounds(self) -> RateBounds:
        return RateBounds(self.r_low, self.r_high)

    @property
    def energy_per_event(self) -> float:
        """kWh moved by one EV during one regulation event."""
        return self.p_ev * self.delta_t_reg / 60.0

    @classmethod
    def reference(cls, **overrides) -> "ScenarioConfig":
        """The parking-structure scenario: 5 EVs/min, mean services 50/70/30 min."""
        base = cls(
            lam=5.0,
            frac_no_charge=0.1,
            soc_init=DistributionSpec.truncated_normal(0.5, 0.2, 0.0, 1.0),
            stay=DistributionSpec.truncated_normal(420.0, 60.0, 60.0, 780.0),
            r_low=0.0,
            r_high=0.05,
            q1=0.1,
            q2=0.1,
            mu1=1 / 50,
            mu2=1 / 70,
            mu3=1 / 30,
            p_ev=6.0,
        )
        return replace(base, **overrides)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def _support(spec: DistributionSpec):
    if spec.kind == "constant":
        return spec.params[0], spec.params[0]
    if spec.kind == "uniform":
        return spec.params
    if spec.kind == "truncated_normal":
        return spec.params[2], spec.params[3]
    return 0.0, math.inf


_DIST_FIELDS = {"soc_init", "stay"}
_REQUIRED = [f.name for f in fields(ScenarioConfig) if f.default is MISSING]


def _from_dict(data: dict, source: str) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)}
    kwargs = {}
    for key, value in data.items():
        attr = _FILE_KEYS.get(key, key)
        if attr not in known or key in _ATTR_KEYS:
            raise ConfigurationError(f"{source}: unknown field {key!r}", key)
        if attr in _DIST_FIELDS:
            if not isinstance(value, dict):
                raise ConfigurationError(f"{source}: {key} must be an inline table with a 'kind'", key)
            try:
                value = DistributionSpec.from_mapping(value)
            except ConfigurationError as exc:
                raise ConfigurationError(f"{source}: {key}: {exc}", key) from None
        kwargs[attr] = value
    missing = [_ATTR_KEYS.get(n, n) for n in _REQUIRED if n not in kwargs]
    if missing:
        raise ConfigurationError(f"{source}: missing required field(s) {', '.join(missing)}", missing[0])
    try:
        return ScenarioConfig(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}", exc.field) from None


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file, filling defaults for optional keys."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: parse error: {exc}") from None
    return _from_dict(data, str(path))


def loads_scenario(text: str, source="<string>") -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: parse error: {exc}") from None
    return _from_dict(data, source)


def _fmt(value):
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def dumps_scenario(config: ScenarioConfig) -> str:
    lines = ["# v2gcap scenario"]
    for f in fields(config):
        value = getattr(config, f.name)
        key = _ATTR_KEYS.get(f.name, f.name)
        if isinstance(value, DistributionSpec):
            body = ", ".join(f"{k} = {_fmt(v)}" for k, v in value.as_mapping().items())
            lines.append(f"{key} = {{ {body} }}")
        else:
            lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def write_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps_scenario(config))


@dataclass(frozen=True)
class SweepSpec:
    target: str
    values: tuple

    def __post_init__(self):
        if self.target not in ("mu1", "mu2", "mu3"):
            raise ConfigurationError(f"sweep target must be mu1, mu2 or mu3, got {self.target!r}", "sweep")
        values = tuple(float(v) for v in self.values)
        if not values or not all(math.isfinite(v) and v > 0 for v in values):
            raise ConfigurationError("sweep values must be a nonempty list of positive rates", "sweep")
        object.__setattr__(self, "values", values)

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        """Parse ``mu1=0.02,1/50,...``; fractions like ``1/70`` are accepted."""
        target, sep, rest = text.partition("=")
        if not sep:
            raise ConfigurationError(f"sweep must look like mu1=v1,v2,..., got {text!r}", "sweep")
        values = []
        for item in rest.split(","):
            item = item.strip()
            try:
                if "/" in item:
                    num, den = item.split("/")
                    values.append(float(num) / float(den))
                else:
                    values.append(float(item))
            except (ValueError, ZeroDivisionError):
                raise ConfigurationError(f"bad sweep value {item!r}", "sweep") from None
        return cls(target.strip(), tuple(values))


class EvStreams:
    """The streams that drive the EV population of one replication.

    ``offset`` shifts the stream ids, giving probes that must not disturb
    a replication's own draws a disjoint set of streams.
    """

    def __init__(self, seed: int, offset: int = 0):
        self.soc = RandomStream(seed, Stream.SOC + offset)
        self.thresholds = RandomStream(seed, Stream.THRESHOLDS + offset)
        self.stay = RandomStream(seed, Stream.STAY + offset)


def generate_ev(config: ScenarioConfig, streams: EvStreams, t_a: float = 0.0) -> EvRequest:
    """Draw one arriving EV.

    A charging EV draws its SOC from ``soc_init`` and targets above it. A
    parking-only EV (probability ``frac_no_charge``) gets targets built the
    same way from a reference SOC, then redraws its own SOC from
    ``soc_init`` until it lands at or above the upper target.
    """
    parking_only = streams.soc.random() < config.frac_no_charge
    x = sample(config.soc_init, streams.soc)

    if x >= 1.0:
        x_high = 1.0
    else:
        head = 1.0 - x
        x_high = truncated_normal(
            streams.thresholds,
            x + config.soc_high_mean_frac * head,
            config.soc_high_std_frac * head,
            x,
            1.0,
        )
    lo, hi = config.soc_low_mult_low, config.soc_low_mult_high
    x_low = x_high * (lo + (hi - lo) * streams.thresholds.random())

    if parking_only:
        for _ in range(SOC_REJECTION_CAP):
            x = sample(config.soc_init, streams.soc)
            if x >= x_high:
                break
        else:
            x = x_high

    stay = sample(config.stay, streams.stay)
    return EvRequest(t_a=t_a, t_d=t_a + stay, x=x, x_low=x_low, x_high=x_high)

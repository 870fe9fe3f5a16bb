"""Closed-form steady state of the three-queue M/M/inf network.

Queue 1 (RDQ) holds EVs below their lower SOC target, queue 2 (RUDQ) EVs
between the targets and queue 3 (RUQ) EVs at or above the upper target.
External Poisson arrivals are split by state fractions ``p1, p2, p3``;
completions of queues 1 and 2 leave the system with probability ``q1`` and
``q2`` and otherwise move one queue to the right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, DomainError

SUM_TOL = 1e-9


@dataclass(frozen=True)
class NetworkParams:
    lam: float
    p1: float
    p2: float
    p3: float
    q1: float
    q2: float
    mu1: float
    mu2: float
    mu3: float
    p_ev: float = 1.0

    def __post_init__(self):
        for name in ("lam", "mu1", "mu2", "mu3", "p_ev"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be a finite positive number, got {value}", name)
        for name in ("p1", "p2", "p3", "q1", "q2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}", name)
        if abs(self.p1 + self.p2 + self.p3 - 1.0) > SUM_TOL:
            raise ConfigurationError(
                f"p1 + p2 + p3 must equal 1, got {self.p1 + self.p2 + self.p3!r}", "p"
            )

    def with_rate(self, name, value):
        """Copy with one of ``mu1``/``mu2``/``mu3`` replaced."""
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields[name] = value
        return NetworkParams(**fields)


@dataclass(frozen=True)
class FlowRates:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda12: float
    lambda23: float

    @property
    def rudq_input(self):
        return self.lambda2 + self.lambda12

    @property
    def ruq_input(self):
        return self.lambda3 + self.lambda23


@dataclass(frozen=True)
class AnalyticResult:
    flows: FlowRates
    l1: float
    l2: float
    l3: float
    departure_rate: float
    c_rd: float
    c_ru: float


def compute_flows(params: NetworkParams) -> FlowRates:
    lam = params.lam
    lambda1, lambda2, lambda3 = params.p1 * lam, params.p2 * lam, params.p3 * lam
    lambda12 = (1.0 - params.q1) * lambda1
    lambda23 = (1.0 - params.q2) * (lambda2 + lambda12)
    return FlowRates(lambda1, lambda2, lambda3, lambda12, lambda23)


def occupancy_pmf(arrival_rate: float, service_rate: float, n: int) -> float:
    """Steady-state probability of ``n`` customers in an M/M/inf queue.

    Evaluated in log space so that large ``n`` does not overflow ``n!``.
    """
    if not service_rate > 0:
        raise ConfigurationError(f"service rate must be > 0, got {service_rate}", "mu")
    if arrival_rate < 0:
        raise ConfigurationError(f"arrival rate must be >= 0, got {arrival_rate}", "lambda")
    if n < 0:
        raise DomainError(f"occupancy must be non-negative, got {n}")
    load = arrival_rate / service_rate
    if load == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(load) - load - math.lgamma(n + 1))


def expected_counts(params: NetworkParams):
    """Expected occupancy ``(l1, l2, l3)`` of RDQ, RUDQ and RUQ."""
    lam, p1, p2, q1, q2 = params.lam, params.p1, params.p2, params.q1, params.q2
    l1 = p1 * lam / params.mu1
    l2 = lam * (p1 + p2 - p1 * q1) / params.mu2
    l3 = lam * (1.0 - p1 * q1 - p1 * q2 - p2 * q2 + p1 * q1 * q2) / params.mu3
    return l1, l2, l3


def departure_rate(flows: FlowRates, q1: float, q2: float) -> float:
    """Rate of the superposed departure stream out of the whole network."""
    return q1 * flows.lambda1 + q2 * (flows.lambda2 + flows.lambda12) + (flows.lambda3 + flows.lambda23)


def capacities(p_ev: float, l1: float, l2: float, l3: float):
    """Regulation-down and regulation-up capacity in kW."""
    for name, value in (("p_ev", p_ev), ("l1", l1), ("l2", l2), ("l3", l3)):
        if value < 0:
            raise DomainError(f"{name} must be non-negative, got {value}")
    return p_ev * (l1 + l2), p_ev * (l2 + l3)


def charging_duration(x_now: float, x_target: float, rate: float) -> float:
    """Minutes needed to charge from ``x_now`` to ``x_target`` at a constant normalized rate."""
    if not rate > 0:
        raise ConfigurationError(f"charging rate must be > 0, got {rate}", "rate")
    if x_target < x_now:
        raise DomainError(f"target SOC {x_target} lies below current SOC {x_now}")
    return (x_target - x_now) / rate


def solve(params: NetworkParams) -> AnalyticResult:
    """Evaluate every closed-form quantity of the network at once."""
    flows = compute_flows(params)
    l1, l2, l3 = expected_counts(params)
    c_rd, c_ru = capacities(params.p_ev, l1, l2, l3)
    return AnalyticResult(
        flows=flows,
        l1=l1,
        l2=l2,
        l3=l3,
        departure_rate=departure_rate(flows, params.q1, params.q2),
        c_rd=c_rd,
        c_ru=c_ru,
    )

"""Smart charging: shape per-queue service times into an exponential law.

Each queue keeps a FIFO reservoir of exponential candidates that did not fit
an earlier EV. An arriving EV takes the earliest pending candidate that fits
its stay and charging-rate limits; failing that, fresh candidates are drawn
until one fits, and every misfit is parked in the reservoir for later EVs.
Since no candidate is ever discarded, the adopted durations are a
reordering of an i.i.d. exponential sequence as long as the reservoir stays
bounded.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .distributions import RandomStream
from .errors import AssignmentError, ConfigurationError, DomainError, StateClassificationError

DEFAULT_GENERATION_CAP = 1_000_000


class Mode(Enum):
    RDQ = "rdq"
    RUDQ_FROM_OUTSIDE = "rudq_from_outside"
    RUDQ_FROM_RDQ = "rudq_from_rdq"
    RUQ = "ruq"

    @property
    def queue(self) -> int:
        return {"rdq": 1, "rudq_from_outside": 2, "rudq_from_rdq": 2, "ruq": 3}[self.value]

    @property
    def charges(self) -> bool:
        return self is not Mode.RUQ


@dataclass(frozen=True)
class EvRequest:
    """What an EV declares when it plugs in."""

    t_a: float
    t_d: float
    x: float
    x_low: float
    x_high: float

    def __post_init__(self):
        if not 0.0 <= self.x_low <= self.x_high <= 1.0:
            raise DomainError(
                f"SOC targets must satisfy 0 <= x_low <= x_high <= 1, got ({self.x_low}, {self.x_high})"
            )
        if not 0.0 <= self.x <= 1.0:
            raise DomainError(f"SOC must lie in [0, 1], got {self.x}")
        if not self.t_d > self.t_a:
            raise DomainError(f"departure {self.t_d} must come after arrival {self.t_a}")

    @property
    def stay(self) -> float:
        return self.t_d - self.t_a


@dataclass(frozen=True)
class RateBounds:
    r_low: float = 0.0
    r_high: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.r_low <= self.r_high:
            raise ConfigurationError(
                f"rate bounds need 0 <= r_low <= r_high, got [{self.r_low}, {self.r_high}]",
                "rate_bounds",
            )


@dataclass
class ReservoirQueue:
    """FIFO store of drawn but not yet adopted candidate durations."""

    mean_rate: float
    generation_cap: int = DEFAULT_GENERATION_CAP
    pending: deque = field(default_factory=deque)
    drawn: int = 0
    adopted: int = 0

    def __post_init__(self):
        if not self.mean_rate > 0:
            raise ConfigurationError(f"reservoir rate must be > 0, got {self.mean_rate}", "mu")
        if self.generation_cap < 1:
            raise ConfigurationError("generation cap must be a positive integer", "generation_cap")
        self.pending = deque(self.pending)
        if any(not v > 0 for v in self.pending):
            raise ConfigurationError("reservoir values must be positive")
        # preloaded candidates count as drawn so that drawn == adopted + pending
        self.drawn += len(self.pending)

    def __len__(self):
        return len(self.pending)


@dataclass(frozen=True)
class Assignment:
    service_time: float
    charge_rate: float | None
    energy_delta: float


def energy_needed(ev: EvRequest, mode: Mode) -> float:
    """Normalized energy the EV must take on during its stay in ``mode``'s queue."""
    if mode is Mode.RDQ:
        energy = ev.x_low - ev.x
    elif mode is Mode.RUDQ_FROM_OUTSIDE:
        energy = ev.x_high - ev.x
    elif mode is Mode.RUDQ_FROM_RDQ:
        energy = ev.x_high - ev.x_low
    else:
        return 0.0
    if energy < 0:
        raise StateClassificationError(
            f"EV with SOC {ev.x} and targets ({ev.x_low}, {ev.x_high}) does not belong in {mode.value}"
        )
    return energy


def _budget(ev, now):
    return ev.t_d - (ev.t_a if now is None else now)


def qualifies(y, ev, bounds, energy, mode, now=None) -> bool:
    """Whether candidate duration ``y`` fits the EV's stay and the rate limits.

    The stay budget runs from ``now`` (the moment the EV enters the queue)
    to its declared departure; ``now`` defaults to the arrival time.
    """
    if y > _budget(ev, now):
        return False
    if not mode.charges:
        return True
    rate = energy / y
    return bounds.r_low <= rate <= bounds.r_high


def qualifying_window(ev, bounds, energy, mode, now=None):
    """The interval of durations that can qualify, or ``None`` if it has zero length."""
    budget = _budget(ev, now)
    low, high = 0.0, budget
    if mode.charges:
        if bounds.r_high > 0:
            low = energy / bounds.r_high
        elif energy > 0:
            return None
        if bounds.r_low > 0:
            high = min(high, energy / bounds.r_low)
    return (low, high) if low < high else None


def reservoir_length(psi: ReservoirQueue) -> int:
    return len(psi.pending)


def assign(ev, psi, bounds, mode, stream: RandomStream, now=None) -> Assignment:
    """Give ``ev`` a service duration taken from ``psi`` or freshly drawn.

    The earliest pending candidate that qualifies is adopted first. Fresh
    exponential draws are only made when none does; each unqualified fresh
    draw joins the back of ``psi``.

    Raises:
        AssignmentError: if no duration can qualify at all, or if
            ``psi.generation_cap`` consecutive fresh draws all failed.
    """
    energy = energy_needed(ev, mode)
    if qualifying_window(ev, bounds, energy, mode, now) is None:
        raise AssignmentError(
            f"no duration can satisfy {mode.value} constraints (energy {energy}, "
            f"stay budget {_budget(ev, now)}, rates [{bounds.r_low}, {bounds.r_high}])",
            ev=ev,
            pending=psi.pending,
        )

    chosen = None
    for index, y in enumerate(psi.pending):
        if qualifies(y, ev, bounds, energy, mode, now):
            chosen = y
            del psi.pending[index]
            break

    if chosen is None:
        for _ in range(psi.generation_cap):
            z = stream.standard_exponential() / psi.mean_rate
            psi.drawn += 1
            if z > 0 and qualifies(z, ev, bounds, energy, mode, now):
                chosen = z
                break
            psi.pending.append(z)
        else:
            raise AssignmentError(
                f"{psi.generation_cap} fresh draws failed to qualify for {mode.value}",
                ev=ev,
                pending=psi.pending,
                draws=psi.generation_cap,
            )

    psi.adopted += 1
    if not mode.charges:
        return Assignment(chosen, None, 0.0)
    return Assignment(chosen, energy / chosen, energy)

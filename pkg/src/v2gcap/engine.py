"""Event-driven simulation of the EV aggregator.

This is the reference (pure Python) backend. :func:`run` dispatches to the
compiled kernel in :mod:`v2gcap._kernel` when it is importable; both produce
bit-identical traces for the same ``(config, seed)``.

Queues are numbered 1 (RDQ), 2 (RUDQ) and 3 (RUQ). Counts are sampled
right-continuously: the sample at time ``t`` reflects every event at or
before ``t``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .distributions import RandomStream, Stream, next_poisson_interarrival
from .errors import AssignmentError, ConsistencyError, DomainError
from .scenario import EvStreams, ScenarioConfig, generate_ev
from .smart_charge import Mode, ReservoirQueue, assign, energy_needed, qualifying_window

ARRIVAL, COMPLETION = 0, 1


class EvState(IntEnum):
    STATE1 = 1
    STATE2 = 2
    STATE3 = 3


def classify(x: float, x_low: float, x_high: float) -> EvState:
    """Map an SOC to its state; ``x <= x_low`` is tested first."""
    if not 0.0 <= x_low <= x_high <= 1.0:
        raise DomainError(f"thresholds must satisfy 0 <= x_low <= x_high <= 1, got ({x_low}, {x_high})")
    if x <= x_low:
        return EvState.STATE1
    if x >= x_high:
        return EvState.STATE3
    return EvState.STATE2


_ENTRY_MODE = {EvState.STATE1: Mode.RDQ, EvState.STATE2: Mode.RUDQ_FROM_OUTSIDE, EvState.STATE3: Mode.RUQ}


@dataclass
class SimTrace:
    """Sampled path of one replication plus the run's event tallies."""

    p_ev: float
    time: np.ndarray
    n: np.ndarray  # shape (3, samples)
    psi: np.ndarray  # shape (3, samples)
    arrivals: np.ndarray  # cumulative, per sample
    departures: np.ndarray  # cumulative, per sample
    adopted: tuple  # three arrays of adopted service times
    rdq_departure_times: np.ndarray
    state_arrivals: tuple  # external arrivals per state
    completions: tuple  # completions per queue
    exits: tuple  # RDQ and RUDQ completions that left the system
    infeasible: int  # EVs that left because no duration could fit
    draws: tuple  # candidates drawn (or preloaded) per reservoir

    @property
    def n1(self):
        return self.n[0]

    @property
    def n2(self):
        return self.n[1]

    @property
    def n3(self):
        return self.n[2]

    @property
    def c_rd(self):
        return self.p_ev * (self.n[0] + self.n[1])

    @property
    def c_ru(self):
        return self.p_ev * (self.n[1] + self.n[2])

    @property
    def empirical_p(self):
        total = sum(self.state_arrivals)
        if total == 0:
            return (math.nan,) * 3
        return tuple(a / total for a in self.state_arrivals)

    @property
    def empirical_q(self):
        return tuple(
            e / c if c else math.nan for e, c in zip(self.exits, self.completions[:2])
        )


@dataclass
class _Resident:
    ev: object
    queue: int
    mode: Mode


@dataclass
class SystemState:
    clock: float = 0.0
    residents: tuple = field(default_factory=lambda: ({}, {}, {}))
    reservoirs: tuple = ()
    calendar: list = field(default_factory=list)
    seq: int = 0


class Simulation:
    """One replication of the aggregator, advanced event by event."""

    def __init__(self, config: ScenarioConfig, seed: int, external_arrivals: bool = True):
        self.config = config
        self.seed = seed
        self.arrival_stream = RandomStream(seed, Stream.ARRIVALS)
        self.ev_streams = EvStreams(seed)
        self.quit_stream = RandomStream(seed, Stream.QUIT)
        self.psi_streams = tuple(RandomStream(seed, s) for s in (Stream.PSI1, Stream.PSI2, Stream.PSI3))
        self.state = SystemState(
            reservoirs=tuple(
                ReservoirQueue(mu, config.generation_cap) for mu in (config.mu1, config.mu2, config.mu3)
            )
        )
        self.bounds = config.bounds
        self.next_id = 0
        self.arrived = 0
        self.departed = 0
        self.state_arrivals = [0, 0, 0]
        self.completions = [0, 0, 0]
        self.exits = [0, 0]
        self.infeasible = 0
        self.adopted = ([], [], [])
        self.rdq_departure_times = []
        if external_arrivals:
            self._schedule(next_poisson_interarrival(config.lam, self.arrival_stream), ARRIVAL, None)

    def preload(self, queue: int, values) -> None:
        """Put candidate durations into a reservoir before the run starts."""
        psi = self.state.reservoirs[queue - 1]
        for v in values:
            if not v > 0:
                raise DomainError("reservoir values must be positive")
            psi.pending.append(float(v))
            psi.drawn += 1

    def _schedule(self, time, kind, payload):
        if time < self.state.clock:
            raise ConsistencyError(f"event at {time} scheduled in the past ({self.state.clock})")
        heapq.heappush(self.state.calendar, (time, self.state.seq, kind, payload))
        self.state.seq += 1

    def _enter(self, ev, ev_id, mode):
        """Assign a service duration in ``mode``'s queue, or let the EV go if none can fit.

        An EV with less than one regulation interval of stay left cannot
        serve a regulation event and leaves instead of joining.
        """
        queue = mode.queue
        now = self.state.clock
        if ev.t_d - now < self.config.delta_t_reg or qualifying_window(
            ev, self.bounds, energy_needed(ev, mode), mode, now
        ) is None:
            self.infeasible += 1
            return False
        try:
            a = assign(ev, self.state.reservoirs[queue - 1], self.bounds, mode, self.psi_streams[queue - 1], now)
        except AssignmentError as exc:
            raise AssignmentError(
                f"t={now}: {exc}", ev=exc.ev, pending=exc.pending, draws=exc.draws
            ) from None
        self.adopted[queue - 1].append(a.service_time)
        self.state.residents[queue - 1][ev_id] = _Resident(ev, queue, mode)
        self._schedule(now + a.service_time, COMPLETION, (ev_id, queue))
        return True

    def handle_arrival(self, ev) -> EvState:
        """Route a newly plugged-in EV to the queue matching its SOC."""
        state = classify(ev.x, ev.x_low, ev.x_high)
        ev_id = self.next_id
        self.next_id += 1
        self.arrived += 1
        self.state_arrivals[state - 1] += 1
        if not self._enter(ev, ev_id, _ENTRY_MODE[state]):
            self.departed += 1
        return state

    def handle_completion(self, ev_id: int, queue: int) -> None:
        """Finish service in ``queue``: quit, move on, or leave from RUQ."""
        try:
            resident = self.state.residents[queue - 1].pop(ev_id)
        except KeyError:
            raise ConsistencyError(f"EV {ev_id} is not resident in queue {queue}") from None
        self.completions[queue - 1] += 1
        if queue == 1:
            self.rdq_departure_times.append(self.state.clock)
        if queue == 3:
            self.departed += 1
            return
        q = self.config.q1 if queue == 1 else self.config.q2
        quits = self.quit_stream.random() < q
        next_mode = Mode.RUDQ_FROM_RDQ if queue == 1 else Mode.RUQ
        if quits or not self._enter(resident.ev, ev_id, next_mode):
            self.exits[queue - 1] += 1
            self.departed += 1

    def step(self) -> None:
        time, _, kind, payload = heapq.heappop(self.state.calendar)
        self.state.clock = time
        if kind == ARRIVAL:
            ev = generate_ev(self.config, self.ev_streams, time)
            self._schedule(time + next_poisson_interarrival(self.config.lam, self.arrival_stream), ARRIVAL, None)
            self.handle_arrival(ev)
        else:
            self.handle_completion(*payload)

    def run(self, horizon: float, sample_interval: float = 1.0) -> SimTrace:
        """Advance to ``horizon`` and return the sampled trace."""
        if horizon < 0 or not sample_interval > 0:
            raise DomainError("horizon must be >= 0 and sample_interval > 0")
        samples = int(math.floor(horizon / sample_interval + 1e-9)) + 1
        time = np.empty(samples)
        n = np.zeros((3, samples), dtype=np.int64)
        psi = np.zeros((3, samples), dtype=np.int64)
        arrivals = np.zeros(samples, dtype=np.int64)
        departures = np.zeros(samples, dtype=np.int64)
        calendar = self.state.calendar
        for k in range(samples):
            t = k * sample_interval
            while calendar and calendar[0][0] <= t:
                self.step()
            time[k] = t
            for j in range(3):
                n[j, k] = len(self.state.residents[j])
                psi[j, k] = len(self.state.reservoirs[j].pending)
            arrivals[k] = self.arrived
            departures[k] = self.departed
        return self._trace(time, n, psi, arrivals, departures)

    def _trace(self, time, n, psi, arrivals, departures):
        return SimTrace(
            p_ev=self.config.p_ev,
            time=time,
            n=n,
            psi=psi,
            arrivals=arrivals,
            departures=departures,
            adopted=tuple(np.asarray(a, dtype=float) for a in self.adopted),
            rdq_departure_times=np.asarray(self.rdq_departure_times, dtype=float),
            state_arrivals=tuple(self.state_arrivals),
            completions=tuple(self.completions),
            exits=tuple(self.exits),
            infeasible=self.infeasible,
            draws=tuple(r.drawn for r in self.state.reservoirs),
        )


def run_python(config: ScenarioConfig, seed: int, horizon=None, sample_interval=None) -> SimTrace:
    horizon = config.horizon if horizon is None else horizon
    sample_interval = config.sample_interval if sample_interval is None else sample_interval
    return Simulation(config, seed).run(horizon, sample_interval)


try:
    from . import _kernel
except ImportError:  # pragma: no cover - exercised only without a compiler
    _kernel = None

BACKENDS = ("compiled", "python") if _kernel is not None else ("python",)
DEFAULT_BACKEND = BACKENDS[0]


def run(config: ScenarioConfig, seed: int, horizon=None, sample_interval=None, backend=None) -> SimTrace:
    """Simulate one replication from an empty system.

    ``backend`` is ``"compiled"``, ``"python"`` or ``None`` for the fastest
    available one.
    """
    backend = backend or DEFAULT_BACKEND
    horizon = config.horizon if horizon is None else horizon
    sample_interval = config.sample_interval if sample_interval is None else sample_interval
    if backend == "python":
        return run_python(config, seed, horizon, sample_interval)
    if backend != "compiled":
        raise ValueError(f"unknown backend {backend!r}")
    if _kernel is None:
        raise RuntimeError("the compiled kernel is not available in this installation")
    if horizon < 0 or not sample_interval > 0:
        raise DomainError("horizon must be >= 0 and sample_interval > 0")
    return SimTrace(p_ev=config.p_ev, **_kernel.simulate(config, seed, horizon, sample_interval))

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled replication kernel.

Mirrors ``engine.Simulation`` step for step: same streams, same draw order,
same floating-point expressions, same (time, seq) event ordering. Any change
to the event logic has to land in both places; ``tests/test_backends.py``
checks that the traces stay identical.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport floor
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memmove
from numpy.random cimport bitgen_t

import numpy as np

from .distributions import TRUNCNORM_MAX_REJECTIONS, RandomStream, Stream
from .errors import AssignmentError, ConsistencyError, DomainError
from .scenario import SOC_REJECTION_CAP
from .smart_charge import EvRequest


cdef extern from "numpy/random/distributions.h":
    double random_standard_uniform(bitgen_t *bitgen_state) nogil
    double random_standard_exponential(bitgen_t *bitgen_state) nogil
    double random_standard_normal(bitgen_t *bitgen_state) nogil


cdef enum:
    K_EXPONENTIAL = 0
    K_TRUNCNORM = 1
    K_UNIFORM = 2
    K_CONSTANT = 3

cdef enum:
    M_RDQ = 0
    M_RUDQ_OUT = 1
    M_RUDQ_RDQ = 2
    M_RUQ = 3

cdef enum:
    EV_ARRIVAL = 0
    EV_COMPLETION = 1

_KIND_CODE = {"exponential": K_EXPONENTIAL, "truncated_normal": K_TRUNCNORM,
              "uniform": K_UNIFORM, "constant": K_CONSTANT}
_MODE_NAMES = ("rdq", "rudq_from_outside", "rudq_from_rdq", "ruq")


cdef struct Event:
    double time
    long long seq
    int kind
    long long ev
    int queue


cdef struct Dist:
    int kind
    double p[4]


cdef class DoubleBuf:
    """Growable double array with cheap removal by index (used as FIFO and log)."""
    cdef double *data
    cdef Py_ssize_t size, cap

    def __cinit__(self):
        self.cap = 64
        self.size = 0
        self.data = <double *> malloc(self.cap * sizeof(double))
        if self.data == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.data)

    cdef int push(self, double v) except -1:
        cdef double *grown
        if self.size == self.cap:
            grown = <double *> realloc(self.data, 2 * self.cap * sizeof(double))
            if grown == NULL:
                raise MemoryError()
            self.data = grown
            self.cap *= 2
        self.data[self.size] = v
        self.size += 1
        return 0

    cdef void remove(self, Py_ssize_t i) noexcept:
        memmove(&self.data[i], &self.data[i + 1], (self.size - i - 1) * sizeof(double))
        self.size -= 1

    cdef object to_array(self):
        out = np.empty(self.size, dtype=np.float64)
        cdef double[::1] view = out
        cdef Py_ssize_t i
        for i in range(self.size):
            view[i] = self.data[i]
        return out


cdef inline bint _before(Event *a, Event *b) noexcept:
    return a.time < b.time or (a.time == b.time and a.seq < b.seq)


cdef class Calendar:
    """Binary min-heap of events keyed by (time, insertion sequence)."""
    cdef Event *heap
    cdef Py_ssize_t size, cap
    cdef long long seq

    def __cinit__(self):
        self.cap = 1024
        self.size = 0
        self.seq = 0
        self.heap = <Event *> malloc(self.cap * sizeof(Event))
        if self.heap == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.heap)

    cdef int push(self, double time, int kind, long long ev, int queue) except -1:
        cdef Event *grown
        cdef Event e
        cdef Py_ssize_t i, parent
        if self.size == self.cap:
            grown = <Event *> realloc(self.heap, 2 * self.cap * sizeof(Event))
            if grown == NULL:
                raise MemoryError()
            self.heap = grown
            self.cap *= 2
        e.time = time
        e.seq = self.seq
        e.kind = kind
        e.ev = ev
        e.queue = queue
        self.seq += 1
        i = self.size
        self.size += 1
        while i > 0:
            parent = (i - 1) >> 1
            if _before(&e, &self.heap[parent]):
                self.heap[i] = self.heap[parent]
                i = parent
            else:
                break
        self.heap[i] = e
        return 0

    cdef Event pop(self) noexcept:
        cdef Event top = self.heap[0]
        cdef Event last
        cdef Py_ssize_t i = 0, child
        self.size -= 1
        if self.size > 0:
            last = self.heap[self.size]
            while True:
                child = 2 * i + 1
                if child >= self.size:
                    break
                if child + 1 < self.size and _before(&self.heap[child + 1], &self.heap[child]):
                    child += 1
                if _before(&self.heap[child], &last):
                    self.heap[i] = self.heap[child]
                    i = child
                else:
                    break
            self.heap[i] = last
        return top


cdef inline bitgen_t *_bitgen(object stream) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(stream.bit_generator.capsule, "BitGenerator")


cdef double _truncnorm(bitgen_t *g, double mean, double std, double low, double high) except? -1.0:
    cdef int i
    cdef double v
    for i in range(TRUNCNORM_MAX_REJECTIONS + 1):
        v = mean + std * random_standard_normal(g)
        if low <= v <= high:
            return v
    raise DomainError(
        f"truncated normal N({mean}, {std}) on [{low}, {high}] rejected "
        f"{TRUNCNORM_MAX_REJECTIONS} draws in a row"
    )


cdef double _sample(Dist *d, bitgen_t *g) except? -1.0:
    if d.kind == K_CONSTANT:
        return d.p[0]
    if d.kind == K_EXPONENTIAL:
        return random_standard_exponential(g) / d.p[0]
    if d.kind == K_UNIFORM:
        return d.p[0] + (d.p[1] - d.p[0]) * random_standard_uniform(g)
    return _truncnorm(g, d.p[0], d.p[1], d.p[2], d.p[3])


cdef Dist _dist(spec):
    cdef Dist d
    cdef int i
    d.kind = _KIND_CODE[spec.kind]
    for i in range(4):
        d.p[i] = spec.params[i] if i < len(spec.params) else 0.0
    return d


cdef class Kernel:
    # scenario
    cdef double lam, frac_no_charge, hi_mean_frac, hi_std_frac, mult_low, mult_high
    cdef double r_low, r_high, q1, q2, min_stay
    cdef double mu[3]
    cdef Dist soc, stay
    cdef long long gen_cap
    # streams (the Python objects keep the bit generators alive)
    cdef object streams
    cdef bitgen_t *g_arr
    cdef bitgen_t *g_soc
    cdef bitgen_t *g_thr
    cdef bitgen_t *g_stay
    cdef bitgen_t *g_quit
    cdef bitgen_t *g_psi[3]
    # state
    cdef double clock
    cdef Calendar cal
    cdef DoubleBuf t_d, x, x_low, x_high
    cdef object where  # bytearray: queue index + 1 of each EV, 0 once gone
    cdef tuple psi  # three DoubleBuf reservoirs
    cdef tuple adopted  # three DoubleBuf logs
    cdef DoubleBuf rdq_departures
    cdef long long n[3]
    cdef long long drawn[3]
    cdef long long arrived, departed, infeasible
    cdef long long state_arrivals[3]
    cdef long long completions[3]
    cdef long long exits[2]

    def __init__(self, config, seed):
        cdef int j
        self.lam = config.lam
        self.frac_no_charge = config.frac_no_charge
        self.hi_mean_frac = config.soc_high_mean_frac
        self.hi_std_frac = config.soc_high_std_frac
        self.mult_low = config.soc_low_mult_low
        self.mult_high = config.soc_low_mult_high
        self.r_low = config.r_low
        self.r_high = config.r_high
        self.q1 = config.q1
        self.q2 = config.q2
        self.min_stay = config.delta_t_reg
        self.mu[0] = config.mu1
        self.mu[1] = config.mu2
        self.mu[2] = config.mu3
        self.soc = _dist(config.soc_init)
        self.stay = _dist(config.stay)
        self.gen_cap = config.generation_cap

        ids = (Stream.ARRIVALS, Stream.SOC, Stream.THRESHOLDS, Stream.STAY, Stream.QUIT,
               Stream.PSI1, Stream.PSI2, Stream.PSI3)
        self.streams = [RandomStream(seed, s) for s in ids]
        self.g_arr = _bitgen(self.streams[0])
        self.g_soc = _bitgen(self.streams[1])
        self.g_thr = _bitgen(self.streams[2])
        self.g_stay = _bitgen(self.streams[3])
        self.g_quit = _bitgen(self.streams[4])
        for j in range(3):
            self.g_psi[j] = _bitgen(self.streams[5 + j])

        self.clock = 0.0
        self.cal = Calendar()
        self.t_d = DoubleBuf()
        self.x = DoubleBuf()
        self.x_low = DoubleBuf()
        self.x_high = DoubleBuf()
        self.where = bytearray()
        self.psi = (DoubleBuf(), DoubleBuf(), DoubleBuf())
        self.adopted = (DoubleBuf(), DoubleBuf(), DoubleBuf())
        for j in range(3):
            self.n[j] = 0
            self.drawn[j] = 0
            self.state_arrivals[j] = 0
            self.completions[j] = 0
        self.rdq_departures = DoubleBuf()
        self.arrived = self.departed = self.infeasible = 0
        self.exits[0] = self.exits[1] = 0
        self.cal.push(random_standard_exponential(self.g_arr) / self.lam, EV_ARRIVAL, -1, 0)

    cdef long long _new_ev(self, double t_a) except -1:
        cdef bint parking_only
        cdef double xv, head, xh, xl, st
        cdef int i
        parking_only = random_standard_uniform(self.g_soc) < self.frac_no_charge
        xv = _sample(&self.soc, self.g_soc)
        if xv >= 1.0:
            xh = 1.0
        else:
            head = 1.0 - xv
            xh = _truncnorm(self.g_thr, xv + self.hi_mean_frac * head, self.hi_std_frac * head, xv, 1.0)
        xl = xh * (self.mult_low + (self.mult_high - self.mult_low) * random_standard_uniform(self.g_thr))
        if parking_only:
            for i in range(SOC_REJECTION_CAP):
                xv = _sample(&self.soc, self.g_soc)
                if xv >= xh:
                    break
            else:
                xv = xh
        st = _sample(&self.stay, self.g_stay)
        self.t_d.push(t_a + st)
        self.x.push(xv)
        self.x_low.push(xl)
        self.x_high.push(xh)
        self.where.append(0)
        return self.t_d.size - 1

    cdef bint _qualifies(self, double y, double budget, double energy, int mode) noexcept:
        cdef double rate
        if y > budget:
            return False
        if mode == M_RUQ:
            return True
        rate = energy / y
        return self.r_low <= rate <= self.r_high

    cdef int _enter(self, long long ev, int mode) except -1:
        """Returns 1 if the EV joined the queue, 0 if it had to leave."""
        cdef int q = 2 if mode == M_RUQ else (0 if mode == M_RDQ else 1)
        cdef double now = self.clock
        cdef double budget = self.t_d.data[ev] - now
        cdef double energy, low, high, y, z
        cdef DoubleBuf psi = <DoubleBuf> self.psi[q]
        cdef Py_ssize_t i
        cdef long long k
        cdef bint found = False

        if mode == M_RDQ:
            energy = self.x_low.data[ev] - self.x.data[ev]
        elif mode == M_RUDQ_OUT:
            energy = self.x_high.data[ev] - self.x.data[ev]
        elif mode == M_RUDQ_RDQ:
            energy = self.x_high.data[ev] - self.x_low.data[ev]
        else:
            energy = 0.0

        if budget < self.min_stay:
            self.infeasible += 1
            return 0
        low = 0.0
        high = budget
        if mode != M_RUQ:
            if self.r_high > 0:
                low = energy / self.r_high
            elif energy > 0:
                self.infeasible += 1
                return 0
            if self.r_low > 0:
                high = min(high, energy / self.r_low)
        if not low < high:
            self.infeasible += 1
            return 0

        for i in range(psi.size):
            y = psi.data[i]
            if self._qualifies(y, budget, energy, mode):
                psi.remove(i)
                found = True
                break
        if not found:
            for k in range(self.gen_cap):
                z = random_standard_exponential(self.g_psi[q]) / self.mu[q]
                self.drawn[q] += 1
                if z > 0 and self._qualifies(z, budget, energy, mode):
                    y = z
                    found = True
                    break
                psi.push(z)
            if not found:
                raise AssignmentError(
                    f"t={now}: {self.gen_cap} fresh draws failed to qualify for {_MODE_NAMES[mode]}",
                    ev=self._request(ev),
                    pending=psi.to_array().tolist(),
                    draws=self.gen_cap,
                )

        (<DoubleBuf> self.adopted[q]).push(y)
        self.where[ev] = q + 1
        self.n[q] += 1
        self.cal.push(now + y, EV_COMPLETION, ev, q + 1)
        return 1

    cdef object _request(self, long long ev):
        return EvRequest(
            t_a=self.clock, t_d=self.t_d.data[ev], x=self.x.data[ev],
            x_low=self.x_low.data[ev], x_high=self.x_high.data[ev],
        )

    cdef int _arrival(self) except -1:
        cdef double t = self.clock
        cdef long long ev = self._new_ev(t)
        cdef double xv, xl, xh
        cdef int state, mode
        self.cal.push(t + random_standard_exponential(self.g_arr) / self.lam, EV_ARRIVAL, -1, 0)
        xv = self.x.data[ev]
        xl = self.x_low.data[ev]
        xh = self.x_high.data[ev]
        if xv <= xl:
            state, mode = 0, M_RDQ
        elif xv >= xh:
            state, mode = 2, M_RUQ
        else:
            state, mode = 1, M_RUDQ_OUT
        self.arrived += 1
        self.state_arrivals[state] += 1
        if not self._enter(ev, mode):
            self.departed += 1
        return 0

    cdef int _completion(self, long long ev, int queue) except -1:
        cdef int q = queue - 1
        cdef bint quits
        cdef double qprob
        if self.where[ev] != queue:
            raise ConsistencyError(f"EV {ev} is not resident in queue {queue}")
        self.where[ev] = 0
        self.n[q] -= 1
        self.completions[q] += 1
        if queue == 1:
            self.rdq_departures.push(self.clock)
        if queue == 3:
            self.departed += 1
            return 0
        qprob = self.q1 if queue == 1 else self.q2
        quits = random_standard_uniform(self.g_quit) < qprob
        if quits or not self._enter(ev, M_RUDQ_RDQ if queue == 1 else M_RUQ):
            self.exits[q] += 1
            self.departed += 1
        return 0

    def run(self, double horizon, double sample_interval):
        cdef Py_ssize_t samples = <Py_ssize_t> floor(horizon / sample_interval + 1e-9) + 1
        cdef Py_ssize_t k
        cdef int j
        cdef double t
        cdef Event e
        time_a = np.empty(samples, dtype=np.float64)
        n_a = np.zeros((3, samples), dtype=np.int64)
        psi_a = np.zeros((3, samples), dtype=np.int64)
        arr_a = np.zeros(samples, dtype=np.int64)
        dep_a = np.zeros(samples, dtype=np.int64)
        cdef double[::1] tv = time_a
        cdef long long[:, ::1] nv = n_a
        cdef long long[:, ::1] pv = psi_a
        cdef long long[::1] av = arr_a
        cdef long long[::1] dv = dep_a
        for k in range(samples):
            t = k * sample_interval
            while self.cal.size > 0 and self.cal.heap[0].time <= t:
                e = self.cal.pop()
                self.clock = e.time
                if e.kind == EV_ARRIVAL:
                    self._arrival()
                else:
                    self._completion(e.ev, e.queue)
            tv[k] = t
            for j in range(3):
                nv[j, k] = self.n[j]
                pv[j, k] = (<DoubleBuf> self.psi[j]).size
            av[k] = self.arrived
            dv[k] = self.departed
        return dict(
            time=time_a,
            n=n_a,
            psi=psi_a,
            arrivals=arr_a,
            departures=dep_a,
            adopted=tuple((<DoubleBuf> b).to_array() for b in self.adopted),
            rdq_departure_times=self.rdq_departures.to_array(),
            state_arrivals=tuple(int(self.state_arrivals[j]) for j in range(3)),
            completions=tuple(int(self.completions[j]) for j in range(3)),
            exits=(int(self.exits[0]), int(self.exits[1])),
            infeasible=int(self.infeasible),
            draws=tuple(int(self.drawn[j]) for j in range(3)),
        )


def simulate(config, seed, double horizon, double sample_interval):
    """Run one replication; returns the fields of ``engine.SimTrace`` as a dict."""
    return Kernel(config, seed).run(horizon, sample_interval)

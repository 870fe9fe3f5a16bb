import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import numpy_stream
from v2gcap.distributions import RandomStream
from v2gcap.errors import AssignmentError, ConfigurationError, DomainError, StateClassificationError
from v2gcap.smart_charge import (
    EvRequest,
    Mode,
    RateBounds,
    ReservoirQueue,
    assign,
    energy_needed,
    qualifies,
    qualifying_window,
    reservoir_length,
)
from v2gcap.stats import ks_exponential

BOUNDS = RateBounds(0.0, 0.05)


def ev(stay=30.0, x=0.2, x_low=0.7, x_high=0.9, t_a=0.0):
    return EvRequest(t_a=t_a, t_d=t_a + stay, x=x, x_low=x_low, x_high=x_high)


def test_modes_map_to_queues():
    assert [m.queue for m in Mode] == [1, 2, 2, 3]
    assert not Mode.RUQ.charges


def test_energy_per_mode():
    e = ev(x=0.2, x_low=0.5, x_high=0.8)
    assert energy_needed(e, Mode.RDQ) == pytest.approx(0.3)
    assert energy_needed(e, Mode.RUDQ_FROM_RDQ) == pytest.approx(0.3)
    assert energy_needed(ev(x=0.6, x_low=0.5, x_high=0.8), Mode.RUDQ_FROM_OUTSIDE) == pytest.approx(0.2)
    assert energy_needed(e, Mode.RUQ) == 0.0
    with pytest.raises(StateClassificationError):
        energy_needed(ev(x=0.9, x_low=0.5, x_high=0.8), Mode.RUDQ_FROM_OUTSIDE)


def test_earliest_qualifying_pending_value_is_taken(stream):
    # energy 0.5 needs y in [10, 30]: 100 is too long, 3 charges too fast, 20 fits
    psi = ReservoirQueue(1 / 50, pending=[100.0, 3.0, 20.0, 25.0])
    a = assign(ev(x=0.2, x_low=0.7), psi, BOUNDS, Mode.RDQ, stream)
    assert a.service_time == 20.0
    assert a.charge_rate == pytest.approx(0.025)
    assert list(psi.pending) == [100.0, 3.0, 25.0]
    assert (psi.drawn, psi.adopted) == (4, 1)


def test_fresh_draws_follow_stream_and_misfits_queue_up():
    stream, ref = RandomStream(3, 0), numpy_stream(3, 0)
    psi = ReservoirQueue(1 / 50)
    e = ev(stay=30.0, x=0.2, x_low=0.7)
    a = assign(e, psi, BOUNDS, Mode.RDQ, stream)
    expected = []
    while True:
        z = ref.standard_exponential() / (1 / 50)
        if 10 <= z <= 30:
            break
        expected.append(z)
    assert a.service_time == z
    assert list(psi.pending) == expected
    assert psi.drawn == len(expected) + 1


def test_ruq_ignores_rate_limits(stream):
    psi = ReservoirQueue(1 / 30, pending=[0.01, 40.0])
    a = assign(ev(stay=30.0, x=0.95), psi, BOUNDS, Mode.RUQ, stream)
    assert a.service_time == 0.01 and a.charge_rate is None and a.energy_delta == 0.0


def test_budget_counts_from_now():
    e = ev(stay=100.0, x=0.6, x_low=0.5, x_high=0.8)
    assert qualifies(50.0, e, BOUNDS, 0.2, Mode.RUDQ_FROM_RDQ)
    assert not qualifies(50.0, e, BOUNDS, 0.2, Mode.RUDQ_FROM_RDQ, now=60.0)


def test_window():
    e = ev(stay=30.0)
    assert qualifying_window(e, BOUNDS, 0.5, Mode.RDQ) == (10.0, 30.0)
    assert qualifying_window(e, BOUNDS, 2.0, Mode.RDQ) is None
    assert qualifying_window(e, RateBounds(0.02, 0.05), 0.5, Mode.RDQ) == (10.0, 25.0)
    assert qualifying_window(e, BOUNDS, 0.0, Mode.RUQ) == (0.0, 30.0)


def test_empty_window_fails_without_drawing(stream):
    psi = ReservoirQueue(1 / 50)
    with pytest.raises(AssignmentError):
        assign(ev(stay=5.0, x=0.0, x_low=0.9), psi, BOUNDS, Mode.RDQ, stream)
    assert psi.drawn == 0 and reservoir_length(psi) == 0


def test_generation_cap(stream):
    psi = ReservoirQueue(1 / 5000, generation_cap=3)
    with pytest.raises(AssignmentError) as info:
        assign(ev(stay=10.0, x=0.2, x_low=0.3), psi, BOUNDS, Mode.RDQ, stream)
    assert info.value.draws == 3
    assert psi.drawn == 3 == len(psi)


def test_bad_inputs():
    with pytest.raises(DomainError):
        EvRequest(0.0, 10.0, 0.5, 0.8, 0.6)
    with pytest.raises(DomainError):
        EvRequest(10.0, 10.0, 0.5, 0.6, 0.8)
    with pytest.raises(ConfigurationError):
        RateBounds(0.1, 0.05)
    with pytest.raises(ConfigurationError):
        ReservoirQueue(0.0)
    with pytest.raises(ConfigurationError):
        ReservoirQueue(1.0, pending=[-1.0])


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32),
    evs=st.lists(
        st.tuples(st.floats(5, 600), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
        min_size=1,
        max_size=40,
    ),
    mu=st.floats(1 / 100, 1 / 5),
)
def test_draw_conservation(seed, evs, mu):
    stream, psi = RandomStream(seed, 0), ReservoirQueue(mu, generation_cap=10_000)
    for stay, a, b, c in evs:
        x, lo, hi = sorted((a, b, c))
        e = EvRequest(0.0, stay, x, lo, hi)
        try:
            out = assign(e, psi, BOUNDS, Mode.RDQ, stream)
        except AssignmentError:
            continue
        assert qualifies(out.service_time, e, BOUNDS, energy_needed(e, Mode.RDQ), Mode.RDQ)
    assert psi.drawn == psi.adopted + len(psi)


def test_adopted_values_shaped_exponential():
    rng = np.random.default_rng(8)
    stream, psi = RandomStream(8, 0), ReservoirQueue(1 / 50)
    adopted = []
    for _ in range(6000):
        x = rng.uniform(0, 0.5)
        e = EvRequest(0.0, rng.uniform(60, 780), x, x + rng.uniform(0, 0.3), 1.0)
        adopted.append(assign(e, psi, BOUNDS, Mode.RDQ, stream).service_time)
    assert len(psi) < 100
    assert ks_exponential(adopted, 1 / 50).p_value > 0.01

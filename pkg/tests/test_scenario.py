import numpy as np
import pytest
from scipy import stats as sps

from v2gcap import ScenarioConfig, reference_scenario_path
from v2gcap.engine import classify
from v2gcap.errors import ConfigurationError
from v2gcap.scenario import (
    EvStreams,
    SweepSpec,
    dumps_scenario,
    generate_ev,
    load_scenario,
    loads_scenario,
    write_scenario,
)


def test_bundled_file_is_reference(reference):
    assert load_scenario(reference_scenario_path()) == reference


def test_round_trip(tmp_path):
    cfg = ScenarioConfig.reference(mu1=1 / 30, horizon=300.0, generation_cap=500)
    path = tmp_path / "s.toml"
    write_scenario(cfg, path)
    assert load_scenario(path) == cfg
    assert loads_scenario(dumps_scenario(cfg)) == cfg


def test_missing_field_is_named(reference):
    text = "\n".join(l for l in dumps_scenario(reference).splitlines() if not l.startswith("lambda"))
    with pytest.raises(ConfigurationError, match="lambda"):
        loads_scenario(text)


def test_unknown_field_rejected(reference):
    with pytest.raises(ConfigurationError, match="colour"):
        loads_scenario(dumps_scenario(reference) + 'colour = "red"\n')


def test_parse_error_reports_location():
    with pytest.raises(ConfigurationError, match="line"):
        loads_scenario("lambda = = 5\n")


@pytest.mark.parametrize(
    "override",
    [{"lam": 0.0}, {"q1": 1.5}, {"r_low": 0.1, "r_high": 0.05}, {"mu2": -1.0}, {"warmup": -1.0},
     {"frac_no_charge": 2.0}, {"replications": 0}],
)
def test_validation(override):
    with pytest.raises(ConfigurationError):
        ScenarioConfig.reference(**override)


def test_sweep_parse():
    s = SweepSpec.parse("mu1=1/30, 0.02 ,1/70")
    assert s.target == "mu1" and s.values == pytest.approx((1 / 30, 0.02, 1 / 70))
    for bad in ("mu4=1", "mu1", "mu1=0", "mu1=1/0", "mu1=abc"):
        with pytest.raises(ConfigurationError):
            SweepSpec.parse(bad)


def generator_oracle(n, rng):
    """State fractions of the EV generator, sampled with scipy's truncnorm."""
    parking = rng.random(n) < 0.1
    x = sps.truncnorm.rvs(-2.5, 2.5, loc=0.5, scale=0.2, size=n, random_state=rng)
    mean, std = x + 0.5 * (1 - x), 0.1 * (1 - x)
    x_high = sps.truncnorm.rvs((x - mean) / std, (1 - mean) / std, loc=mean, scale=std, random_state=rng)
    x_low = x_high * rng.uniform(0.6, 0.8, n)
    state = np.where(x <= x_low, 1, np.where(x >= x_high, 3, 2))
    state[parking] = 3
    return np.bincount(state, minlength=4)[1:] / n


def test_state_fractions_match_oracle(reference):
    streams = EvStreams(11)
    n = 40_000
    counts = np.zeros(3)
    stays = []
    for _ in range(n):
        e = generate_ev(reference, streams)
        counts[classify(e.x, e.x_low, e.x_high) - 1] += 1
        stays.append(e.stay)
        assert 0 <= e.x_low <= e.x_high <= 1
    ours = counts / n
    oracle = generator_oracle(400_000, np.random.default_rng(5))
    np.testing.assert_allclose(ours, oracle, atol=0.01)
    assert min(stays) >= 60 and max(stays) <= 780
    assert np.mean(stays) == pytest.approx(420, abs=2)

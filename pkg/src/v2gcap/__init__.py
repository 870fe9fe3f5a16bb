"""Regulation-capacity estimation for EV aggregators.

The aggregator is modelled as three infinite-server queues (regulation-down,
regulation-up-and-down, regulation-up). :mod:`v2gcap.analytic` evaluates the
closed-form steady state, :mod:`v2gcap.engine` simulates it event by event
with the smart charging mechanism of :mod:`v2gcap.smart_charge`, and
:mod:`v2gcap.experiment` compares the two.
"""
from importlib import resources

from .analytic import NetworkParams, capacities, compute_flows, expected_counts, solve
from .engine import BACKENDS, SimTrace, classify, run
from .scenario import ScenarioConfig, SweepSpec, load_scenario

__all__ = [
    "BACKENDS",
    "NetworkParams",
    "ScenarioConfig",
    "SimTrace",
    "SweepSpec",
    "capacities",
    "classify",
    "compute_flows",
    "expected_counts",
    "load_scenario",
    "reference_scenario_path",
    "run",
    "solve",
]


def reference_scenario_path():
    """Path of the bundled reference scenario file."""
    return resources.files(__name__) / "scenarios" / "reference.toml"

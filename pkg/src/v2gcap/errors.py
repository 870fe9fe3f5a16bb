"""Exception hierarchy shared by every module of the package."""


class V2GError(Exception):
    """Base class for all errors raised by v2gcap."""


class ConfigurationError(V2GError, ValueError):
    """A parameter lies outside its admissible domain."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(V2GError, ValueError):
    """An input is well-formed but the requested quantity is undefined."""


class StateClassificationError(DomainError):
    """An EV was routed to a queue that does not match its SOC."""


class InsufficientDataError(V2GError, ValueError):
    """Too few observations to compute the requested statistic."""


class AssignmentError(V2GError, RuntimeError):
    """The smart charging mechanism could not find a qualifying duration.

    Carries the offending request and a snapshot of the reservoir so that
    infeasible parameter combinations can be diagnosed after the fact.
    """

    def __init__(self, message, ev=None, pending=(), draws=0):
        super().__init__(message)
        self.ev = ev
        self.pending = tuple(pending)
        self.draws = draws


class ConsistencyError(V2GError, RuntimeError):
    """Internal bookkeeping of the simulator went out of sync."""

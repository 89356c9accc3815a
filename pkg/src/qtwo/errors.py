"""Exception types shared across the simulation modules."""


class SimulationError(Exception):
    """Base class for all errors raised by qtwo."""


class ZeroNorm(SimulationError):
    pass


class GridTooLarge(SimulationError, ValueError):
    pass


class IncompatibleGrid(SimulationError, ValueError):
    pass


class WrongSpinDims(SimulationError, ValueError):
    pass


class UnsupportedN(SimulationError, ValueError):
    pass


class NodeProximity(SimulationError):
    """Guidance evaluated where the density is below the node guard.

    ``time`` is filled in by integrators so callers know when the
    trajectory hit the node.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class TooManyFailures(SimulationError):
    pass


class ZeroOccupancy(SimulationError):
    pass


class StiffRates(SimulationError):
    pass


class UnknownConfiguration(SimulationError, KeyError):
    pass


class DegenerateDensity(SimulationError):
    pass


class Unreachable(SimulationError, ValueError):
    pass


class EnsembleMismatch(SimulationError, ValueError):
    pass


class EmptySample(SimulationError, ValueError):
    pass

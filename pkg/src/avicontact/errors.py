"""Exception hierarchy shared by the simulator modules."""


class SimulationError(Exception):
    """Base class for failures raised while building or running a simulation."""


class ClockRegressionError(SimulationError):
    """An event was dispatched at a time earlier than the global clock."""


class NumericError(SimulationError):
    """A non-finite value showed up in a gradient or in the state."""


class ConfigurationError(SimulationError):
    """Unsupported body combination or invalid parameter."""


class DegenerateGeometryError(SimulationError):
    """Coincident centers or endpoints make a normal direction undefined."""


class StatisticsError(SimulationError):
    """Too few samples for a requested statistic."""


class SceneError(ConfigurationError):
    """Scene text could not be parsed or validated.

    ``line`` is the 1-based line number when the error is tied to a line,
    ``key`` names the offending parameter for semantic errors.
    """

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)

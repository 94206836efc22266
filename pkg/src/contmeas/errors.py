"""Exception hierarchy for the simulation laboratory."""


class SimulationError(Exception):
    """Base class for numerical / runtime failures (CLI exit status 2)."""


class ZeroState(SimulationError):
    """A state vector or density matrix has (numerically) vanished."""


class BoundaryLeak(SimulationError):
    """Probability mass reached the outer band of the periodic grid."""


class GridMismatch(SimulationError, ValueError):
    pass


class UnderResolved(SimulationError):
    """The grid is too coarse or too narrow to render a state faithfully."""


class DegenerateWidth(SimulationError):
    pass


class InsufficientSamples(SimulationError):
    pass


class NonPositiveInput(ValueError):
    pass


class GammaZero(ValueError):
    """The measurement record is undefined when gamma == 0."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit status 1).

    ``field`` carries the dotted path of the offending entry, e.g. ``model.mass``.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")

"""Exception hierarchy shared by every module."""


class QucontError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(QucontError, ValueError):
    """Bad grid, config file or propagation setup."""


class EllipticityError(QucontError, ValueError):
    """A sampled metric is not symmetric positive definite."""


class RegionError(QucontError, ValueError):
    """Observation region is empty or incompatible."""


class AssemblyError(QucontError, ValueError):
    """Grid and coefficient fields do not match."""


class ParameterError(QucontError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class MethodError(QucontError, ValueError):
    """The requested time-integration method cannot handle the problem."""


class PreconditionError(QucontError, ValueError):
    """Sign or structure hypotheses of an energy statement are violated."""


class SpectralError(QucontError, RuntimeError):
    """Dense eigensolver failure; the run is aborted."""

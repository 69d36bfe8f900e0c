"""Exception types raised by morleytps."""


class MorleyTpsError(Exception):
    """Base class for all library errors."""


class InvalidArgument(MorleyTpsError, ValueError):
    pass


class PointOutsideDomain(MorleyTpsError, ValueError):
    pass


class DegenerateElement(MorleyTpsError, ArithmeticError):
    pass


class CollinearSamples(MorleyTpsError, ValueError):
    """The sample locations lie on a single line, so affine functions are not identifiable."""


class SolverError(MorleyTpsError, RuntimeError):
    """Iterative solver failed to reach the requested tolerance."""


class IllConditionedSystem(MorleyTpsError, ArithmeticError):
    pass


class DomainError(MorleyTpsError, ValueError):
    """Function evaluated outside its domain of definition."""

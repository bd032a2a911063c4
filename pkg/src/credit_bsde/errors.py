"""Exception hierarchy shared by the solver modules."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class OrderingError(DomainError):
    """Time arguments violate the required ordering (e.g. theta1 > t)."""


class DegeneracyError(ArithmeticError):
    """A quantity is numerically degenerate (underflowed variance, etc.)."""


class SolverError(RuntimeError):
    """An inner optimizer or integrator failed to converge."""


class SimulationError(RuntimeError):
    """Too many Monte-Carlo paths overflowed the utility."""

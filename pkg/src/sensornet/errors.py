"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: :class:`NonEstimableError` is a
mathematical infeasibility (exit 2) and :class:`SimulationError` a failed
simulation (exit 3).
"""


class SensornetError(Exception):
    """Base class for all package errors."""


class ModelError(SensornetError, ValueError):
    """Malformed field model or dimension mismatch."""


class NonEstimableError(SensornetError):
    """The requested quantity cannot be estimated from the sensor network."""


class UnboundedPrecision(NonEstimableError):
    """A direction in the null space of G changes q: the bound is infinite."""


class InconsistentConstraint(NonEstimableError):
    """``G^T w = alpha`` has no solution (alpha outside the row space of G)."""


class InstanceTooLarge(SensornetError, ValueError):
    """Brute-force oracle refused an instance beyond its size limits."""


class RankDeficient(SensornetError, ValueError):
    """Matrix rank is lower than the operation requires."""


class SimulationError(SensornetError):
    """Base class for Monte-Carlo simulation failures."""


class PhaseWrap(SimulationError):
    """Accumulated phase leaves the unambiguous interval (-pi, pi)."""


class NewtonDivergence(SimulationError):
    """Parameter inversion did not converge within the iteration limit."""

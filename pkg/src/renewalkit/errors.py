"""Exception hierarchy.

Input problems (bad files, invalid networks, unsupported partitions) derive
from :class:`InputError`; failures of a numerical procedure derive from
:class:`NumericalError`.  The command line maps them to exit codes 2 and 3.
"""


class RenewalKitError(Exception):
    """Base class for all package errors."""


class InputError(RenewalKitError, ValueError):
    """Invalid user input."""


class NetworkError(InputError):
    """A reaction network violates a structural rule."""


class PartitionError(InputError):
    """A partition is not a valid decomposition of the state space."""


class EntranceError(PartitionError):
    """A compartment has more than one entrance point."""


class GridError(InputError):
    """A time grid is malformed or too coarse for the requested task."""


class NumericalError(RenewalKitError, ArithmeticError):
    """A numerical procedure failed or produced an invalid result."""


class NegativeSolutionError(NumericalError):
    """A quantity that must stay nonnegative dropped below tolerance."""


class ConvergenceError(NumericalError):
    """An iterative procedure did not reach the requested accuracy."""

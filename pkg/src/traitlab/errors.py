"""Exception types shared across the package."""


class TraitLabError(Exception):
    """Base class for all traitlab errors."""


class InvalidBoundsError(TraitLabError, ValueError):
    """Grid bounds are not ordered or the node count is too small."""


class GridMismatchError(TraitLabError, ValueError):
    """Two objects that must share a grid were built on different grids."""


class GridTooLargeError(TraitLabError, ValueError):
    """The O(N^3) reference operator was asked for more nodes than allowed."""


class ZeroMassError(TraitLabError, ValueError):
    """A density with (numerically) zero mass cannot be normalized."""


class NotNormalizedError(TraitLabError, ValueError):
    """An operation required a probability density but got one with mass != 1."""


class NonpositiveValuesError(TraitLabError, ValueError):
    """A log-log rate fit received values that are zero or negative."""


class UnderResolvedError(TraitLabError, ValueError):
    """A kernel or profile width falls under the grid resolution guard."""


class OrderExceededError(TraitLabError, ValueError):
    """A moment of higher order than the extracted vector holds was requested."""


class InsufficientSamplesError(TraitLabError, ValueError):
    """A finite-difference or fit routine received too few samples."""


class OutOfTableError(TraitLabError, ValueError):
    """A tabulated mortality was evaluated outside its table range."""


class NegativityError(TraitLabError, RuntimeError):
    """A simulated density dipped below the negativity tolerance."""


class BlowUpError(TraitLabError, RuntimeError):
    """A simulated density exceeded the blow-up guard."""


class ConfigError(TraitLabError, ValueError):
    """A run configuration is inconsistent or contains unknown keys."""

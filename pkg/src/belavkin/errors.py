"""Exception hierarchy shared by all modules."""


class BelavkinError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(BelavkinError, ValueError):
    """Non-finite entries, mismatched dimensions or out-of-range arguments."""


class InvalidModelError(InvalidInputError):
    """A model violates its invariants (non-Hermitian H, bad couplings, ...)."""


class InvalidStateError(InvalidInputError):
    """A matrix is not a density matrix within tolerance."""


class AmbiguityError(BelavkinError):
    """A steady state is requested but the null space is not one-dimensional."""


class ImpossibleOutcomeError(BelavkinError):
    """A replayed measurement record has probability zero."""


class RefinementError(BelavkinError):
    """Jump-time refinement failed (step-size underflow near a jump)."""


class StepSizeError(InvalidInputError):
    """The time step is too coarse for the requested scheme."""


class BudgetError(BelavkinError):
    """The requested run exceeds the trajectory budget."""


class DerivationError(BelavkinError):
    """The symbolic gain could not be solved; ``residual`` holds the leftover."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SchemaError(BelavkinError):
    """An input file carries an unknown or missing schema version."""

"""Exception and warning types raised across the package."""


class ArgumentError(ValueError):
    """Invalid argument (bad bounds, wrong shape, unsorted input...)."""


class DomainError(ValueError):
    """Evaluation outside the domain of a volatility structure or model."""


class DegenerateDensityError(ArithmeticError):
    """Density with zero, negative or non-finite total mass."""


class ArbitrageError(ValueError):
    """Market input that violates static no-arbitrage (convexity, monotonicity)."""


class ConfigError(ValueError):
    """Scenario configuration failed validation.

    ``field`` is the dotted path of the offending entry, when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class IngestionError(ValueError):
    """Malformed or arbitrageable market CSV."""

    def __init__(self, message: str, rows: list | None = None):
        self.rows = rows or []
        super().__init__(message)


class StabilityWarning(RuntimeWarning):
    """Explicit time stepping produced negative multipliers on many nodes."""


class ClippedMassWarning(RuntimeWarning):
    """A recovered density lost more than the tolerated mass to clipping or truncation."""

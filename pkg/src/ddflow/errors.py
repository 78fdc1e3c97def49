"""Exceptions shared across the package."""


class NotTamed(ValueError):
    """omega(x, Jx) fails to be positive somewhere."""


class NotCompatible(ValueError):
    """The anti-invariant part of omega exceeds the compatibility tolerance."""


class NondegeneracyLost(RuntimeError):
    """min |Pf(omega)| dropped below the nondegeneracy threshold."""


class RetractionDiverged(RuntimeError):
    """Newton iteration for the inverse square root did not converge."""


class BlowupDetected(RuntimeError):
    """A monitored quantity exceeded its stop threshold."""

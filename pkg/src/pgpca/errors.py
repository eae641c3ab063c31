"""Exception types raised across the package."""


class PgpcaError(Exception):
    """Base class for all pgpca errors."""


class DegenerateTangent(PgpcaError):
    """A manifold tangent vector has near-zero norm (collapsed segment)."""


class InsufficientData(PgpcaError):
    """Fewer samples than the operation requires."""


class TooManyKnots(PgpcaError):
    """Exact tour ordering is limited to 20 knots."""


class DegenerateKnots(PgpcaError):
    """Two consecutive spline knots coincide."""


class DegenerateFrame(PgpcaError):
    """An orthonormal frame could not be completed at a manifold state."""


class NonFiniteInput(PgpcaError):
    """An observation contains NaN or infinite entries."""


class AllZeroLikelihood(PgpcaError):
    """Every landmark density underflowed for some sample."""


class InvalidDimension(PgpcaError):
    """Model dimension outside [0, n]."""


class IllegalPair(PgpcaError):
    """Manifold and latent-state law are incompatible."""


class LengthMismatch(PgpcaError):
    """Paired sequences have different lengths."""

"""Exception types shared across the toolkit.

Everything raised on purpose derives from SplatShieldError so callers (and the
CLI) can distinguish "our" failures from genuine bugs.
"""


class SplatShieldError(Exception):
    """Base class for all errors raised by this package."""


# --- image I/O ---------------------------------------------------------------

class UnsupportedFormat(SplatShieldError):
    """File is not a format we read (wrong magic, grayscale, odd bit depth)."""


class CorruptData(SplatShieldError):
    """File claims a supported format but its payload cannot be decoded."""


class DimensionMismatch(SplatShieldError):
    """Two operands that must share a shape do not."""


class TooSmall(SplatShieldError):
    """Input is below the minimum size an operation needs."""


# --- wavelet -----------------------------------------------------------------

class ZeroEnergy(SplatShieldError):
    """Energy fractions are undefined for an all-zero input."""


# --- pose / trajectory -------------------------------------------------------

class InvalidMatrix(SplatShieldError):
    """Cost matrix is not usable: asymmetric, negative, or non-square."""


class EmptyTrajectory(SplatShieldError):
    """No poses to order."""


# --- structured text parsing (CSV ingest, COLMAP text files) -----------------

class SchemaError(SplatShieldError):
    """A structured text file does not match its schema.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NegativeCount(SchemaError):
    """A count column that must be >= 0 is negative."""


class MatchedExceedsExtracted(SchemaError):
    """A match count exceeds the number of extracted keypoints."""


class AllPairsDegenerate(SplatShieldError):
    """Every candidate pair was skipped; no rate can be aggregated."""


# --- gaussian PLY ------------------------------------------------------------

class NotPly(SplatShieldError):
    """File does not start with a PLY header."""


class MissingProperty(SplatShieldError):
    """A required vertex property is absent from the PLY header."""

    def __init__(self, name):
        super().__init__(f"required vertex property missing: {name}")
        self.name = name


class UnsupportedEncoding(SplatShieldError):
    """PLY encoding we do not read (big-endian binary)."""


class NonPositiveScale(SplatShieldError):
    """Scales fed to normalized variance must be strictly positive."""

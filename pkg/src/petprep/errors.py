"""Exception hierarchy for the petprep toolkit.

Every domain failure derives from PetprepError so callers (and the CLI)
can distinguish data errors from programming errors. Plain file-system
failures use the builtin OSError family.
"""


class PetprepError(Exception):
    """Base class for all petprep domain errors."""


# --- volume / geometry -------------------------------------------------------

class NonPositiveSpacingError(PetprepError):
    """Voxel spacing must be strictly positive and finite on every axis."""


class NonFiniteDataError(PetprepError):
    """Volume intensities must be finite (no NaN/Inf)."""


class ShapeMismatchError(PetprepError):
    """Array is not a dense 3D grid, or grids disagree in shape."""


class OutOfBoundsError(PetprepError):
    """Crop window exceeds the volume extent."""


class NonPositiveScaleError(PetprepError):
    """Affine scale factors must be strictly positive."""


class GeometryMismatchError(PetprepError):
    """Two grids expected to share shape/spacing/origin do not."""


class NonBinaryMaskError(PetprepError):
    """Label mask contains values other than 0 and 1."""


# --- intensity ---------------------------------------------------------------

class InvalidBoundsError(PetprepError):
    """Clip bounds with lo >= hi."""


class DegenerateStatisticsError(PetprepError):
    """Fewer than 2 voxels available for normalization statistics."""


class NegativeSigmaError(PetprepError):
    """Gaussian sigma must be non-negative (strictly positive for sharpening)."""


class NegativeStdError(PetprepError):
    """Noise standard deviation must be non-negative."""


# --- config ------------------------------------------------------------------

class ParseError(PetprepError):
    """Document is not syntactically valid (JSON / CSV)."""


class ValidationError(PetprepError):
    """Document parsed but violates the schema; message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# --- metrics -----------------------------------------------------------------

class EmptyGroundTruthError(PetprepError):
    """Dice is undefined when the ground truth has no foreground."""


class EmptyCohortError(PetprepError):
    """Cohort aggregation needs at least one case."""


# --- NIfTI I/O ---------------------------------------------------------------

class BadMagicError(PetprepError):
    """File lacks the NIfTI-1 magic string."""


class UnsupportedDatatypeError(PetprepError):
    """NIfTI datatype outside {uint8, int16, int32, float32, float64}."""


class UnsupportedOrientationError(PetprepError):
    """Oblique (non axis-aligned) volume orientation."""


class CorruptHeaderError(PetprepError):
    """Header truncated or internally inconsistent."""


# --- manifest / split --------------------------------------------------------

class DuplicateCaseIdError(PetprepError):
    """Manifest contains the same case_id twice."""


class UnknownTracerError(PetprepError):
    """Tracer column holds something other than FDG or PSMA."""


class TooFewCasesError(PetprepError):
    """Splitting needs at least 2 cases."""


class InvalidFractionError(PetprepError):
    """Test fraction must lie strictly between 0 and 1."""

"""Exception taxonomy shared by all modules.

Every error raised on purpose derives from LfsalError so the CLI can turn it
into a single machine-parsable line and a nonzero exit code.
"""


class LfsalError(Exception):
    """Base class for all deliberate failures."""

    kind = "error"


class ConfigurationError(LfsalError):
    """Invalid hyperparameter, shape wiring, or option value."""

    kind = "configuration"


class DataError(LfsalError):
    """Malformed input data (sizes, label values, missing files)."""

    kind = "data"


class BoundsError(DataError):
    """Index outside the valid viewpoint / location range."""

    kind = "bounds"


class AlignmentError(DataError):
    """Crop origin or size not aligned to the micro-lens grid."""

    kind = "alignment"


class NumericalError(LfsalError):
    """NaN or Inf showed up where only finite values are allowed."""

    kind = "numerical"

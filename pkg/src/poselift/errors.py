"""Exception hierarchy.

Three base classes map onto the CLI exit-code contract: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class PoseliftError(Exception):
    """Base class for all library errors."""


class ConfigError(PoseliftError):
    """Invalid configuration or argument values."""


class DataError(PoseliftError):
    """Problems with input files or input data shapes."""


class NumericError(PoseliftError):
    """Numerical failure during computation."""


class OutOfRangeTime(ConfigError):
    """Diffusion time outside the valid interval."""


class WrongJointCount(DataError):
    """Pose has an unexpected number of joints."""


class JointCountMismatch(DataError):
    """Two poses being compared have different joint counts."""


class TooFewPoses(DataError):
    """Dataset smaller than the number of requested anchors."""


class InsufficientJoints(DataError):
    """Not enough usable joints for a solve."""


class CorruptFile(DataError):
    """File failed structural validation; message carries the byte offset."""


class ParseError(DataError):
    """Text input failed parsing; message carries the line number."""


class NonPositiveDepth(NumericError):
    """A joint sits at or behind the camera plane during projection."""


class DegeneratePose(NumericError):
    """Pose has zero spatial variance where spread is required."""


class SingularSystem(NumericError):
    """Linear system for the translation solve is rank-deficient."""


class AllCandidatesBehindCamera(NumericError):
    """Every rotation candidate placed most joints behind the camera."""


class NonFiniteLoss(NumericError):
    """Training loss overflowed to inf/nan."""


class NonFinitePose(NumericError):
    """A pose stopped being finite (score blow-up or bad input)."""

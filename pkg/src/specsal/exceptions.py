"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
(format, manifest, shape) exit 2, numeric failures exit 3.
"""


class SpecsalError(Exception):
    """Base class for package errors."""


class ShapeError(SpecsalError, ValueError):
    """Operand shapes or dimensions are incompatible."""


class DataError(SpecsalError, ValueError):
    """Input data violates a documented contract."""


class CubeFormatError(DataError):
    """A cube file does not follow the binary cube format."""


class CubeMagicError(CubeFormatError):
    """Cube file does not start with the expected magic bytes."""


class CubeTruncationError(CubeFormatError):
    """Cube payload is shorter than the header promises."""


class CubeDimensionError(CubeFormatError):
    """Cube header fields and payload size disagree, or header values are invalid."""


class MaskFormatError(DataError):
    """A mask file is not a binary (0/255) 8-bit PGM."""


class CalibrationError(DataError):
    """Calibration frames are unusable (white <= dark somewhere, shape mismatch)."""


class SceneSpecError(DataError):
    """A synthetic scene specification is invalid (bad shapes, out-of-bounds objects)."""


class ManifestError(DataError):
    """A dataset manifest violates its schema."""


class MetricInputError(DataError):
    """Metric inputs are outside their domain (empty ground truth, constant map...)."""


class ConfigError(DataError):
    """A run configuration file contains unknown or ill-typed entries."""


class CheckpointError(DataError):
    """A checkpoint file is malformed or does not match the model."""


class NumericError(SpecsalError, ArithmeticError):
    """A non-finite value appeared where the pipeline requires finite numbers."""

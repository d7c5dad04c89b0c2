"""Exception hierarchy shared by all codec modules.

Every error raised on a bad input or a bad byte stream derives from
``CodecError`` so callers can catch one base class at API boundaries.
"""


class CodecError(Exception):
    """Base class for all codec errors."""


class DimensionMismatch(CodecError, ValueError):
    """Shapes or divisibility constraints do not line up."""


class NonFiniteInput(CodecError, ValueError):
    """Input tensor contains NaN or Inf."""


class EmptyPlane(CodecError, ValueError):
    """Plane has zero tokens or zero channels."""


class EmptyInput(CodecError, ValueError):
    """Clustering input has no rows."""


class NonFiniteScale(CodecError, ValueError):
    """Scale value is NaN or Inf and cannot be FP8-encoded."""


class NaNPattern(CodecError, ValueError):
    """FP8 byte is one of the NaN bit patterns (0x7F / 0xFF)."""


class RangeOverflow(CodecError, ValueError):
    """Integer value outside the symmetric b-bit range."""


class Truncated(CodecError, ValueError):
    """Byte stream shorter than its declared contents."""


class BadMagic(CodecError, ValueError):
    """File does not start with the expected magic bytes."""


class UnknownDtype(CodecError, ValueError):
    """Raw tensor file declares an unsupported dtype code."""


class BadParams(CodecError, ValueError):
    """Generator or config parameters out of their valid domain."""


class NotPowerOfTwo(CodecError, ValueError):
    """Hadamard transform requires a power-of-two length."""


class ShapeMismatch(CodecError, ValueError):
    """Two matrices that must agree in shape do not."""


class ConfigMismatch(CodecError, ValueError):
    """Chunk config disagrees with the container header."""


class CorruptChunk(CodecError, ValueError):
    """Chunk record failed CRC or structural validation."""


class OutOfRange(CodecError, IndexError):
    """Chunk index outside the container's valid range."""

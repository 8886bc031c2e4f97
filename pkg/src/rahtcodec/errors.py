"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for every failure the codec raises on purpose."""


class PlyError(CodecError):
    """Unreadable, malformed, or unsupported PLY input."""


class BitstreamError(CodecError):
    """Truncated, corrupt, or incompatible compressed stream."""


class WeightFileError(CodecError):
    """Malformed refiner weight file."""

"""Exception types shared across the codec."""


class FormatError(ValueError):
    """A file or byte stream does not match its expected container format."""


class CorruptionError(ValueError):
    """A bitstream parses structurally but fails an internal consistency check."""

"""Exception types shared across the package.

Each class carries a short machine-readable ``category`` that the CLI
reports on failure.
"""


class DovError(Exception):
    category = "error"


class InvalidArgument(DovError, ValueError):
    category = "invalid-argument"


class ConstructionFailure(DovError):
    category = "construction-failure"

    def __init__(self, message, partial_size=None):
        super().__init__(message)
        self.partial_size = partial_size


class DegenerateSample(DovError, ValueError):
    category = "degenerate-sample"


class ExternalChannelError(DovError):
    category = "external-channel-error"


class AudioFormatError(DovError, ValueError):
    category = "audio-format"


class UnsupportedFormat(AudioFormatError):
    category = "unsupported-format"


class ClippingError(AudioFormatError):
    category = "clipping"


class Desynchronized(DovError):
    category = "desynchronized"

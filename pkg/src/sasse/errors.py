"""Exception types raised across the package."""


class SasseError(Exception):
    """Base class for all package errors."""


class ConfigError(SasseError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DegenerateQuaternion(SasseError, ValueError):
    pass


class DimensionMismatch(SasseError, ValueError):
    pass


class NonFiniteInput(SasseError, ValueError):
    pass


class CodecError(SasseError, ValueError):
    pass


class Overflow(CodecError):
    pass


class NonFinite(CodecError):
    pass


class NonFiniteDecoded(CodecError):
    pass


class DecodeFailure(SasseError):
    """A predicted bit pattern that cannot be turned back into a pose.

    ``component_index`` is the slot (0-3 quaternion, 4-6 translation) that
    failed, or -1 when the failure concerns the whole quaternion.
    """

    def __init__(self, component_index, reason):
        super().__init__(f"component {component_index}: {reason}")
        self.component_index = component_index
        self.reason = reason


class BruteforceTooLarge(SasseError, ValueError):
    pass


class KTooLarge(ConfigError):
    """More clusters requested than training items."""


ClusterTooLarge = KTooLarge


class ClusterTooSmall(SasseError, ValueError):
    def __init__(self, cluster, size):
        super().__init__(f"cluster {cluster} has {size} item(s), need at least 2")
        self.cluster = cluster
        self.size = size


class InvalidEdge(SasseError, ValueError):
    pass


class ParseError(SasseError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidPose(SasseError, ValueError):
    pass


class DegenerateFit(SasseError, ValueError):
    pass


class TargetUnreachable(SasseError):
    def __init__(self, n):
        super().__init__(f"no grid configuration meets the error targets at N={n}")
        self.n = n


class BundleFormatError(SasseError, ValueError):
    pass

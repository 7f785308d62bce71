"""Exception types shared across the package, mapped to CLI exit codes in cli.py."""


class BtfError(Exception):
    """Base class for all package-specific failures."""


class ArgumentError(BtfError, ValueError):
    """Caller passed a structurally invalid argument (bad shape, range, or combination)."""


class ConfigError(ArgumentError):
    """A config object or file parsed but holds invalid or inconsistent values."""


class FormatError(BtfError):
    """A file is not in the expected container format (bad magic, malformed header)."""


class VersionError(FormatError):
    """Container format recognised but the version is unsupported."""


class CorruptionError(FormatError):
    """Container header is fine but the payload is truncated or fails validation."""


class DegeneratePairError(ArgumentError):
    """wi + wo is too close to zero for a half vector to exist.

    `indices` holds the offending element positions when raised from a batch.
    """

    def __init__(self, msg, indices=None):
        super().__init__(msg)
        self.indices = indices


class OutOfHemisphereError(ArgumentError):
    """A direction left the upper hemisphere (z <= 0) where one was required.

    `indices` holds the offending element positions when raised from a batch.
    """

    def __init__(self, msg, indices=None):
        super().__init__(msg)
        self.indices = indices


class NumericError(BtfError):
    """A numeric invariant failed at runtime (NaN loss, non-finite parameter)."""

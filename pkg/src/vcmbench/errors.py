"""Exception hierarchy shared across the toolkit."""


class VcmBenchError(Exception):
    """Base class for all toolkit errors."""


class DataError(VcmBenchError):
    """Malformed or inconsistent input data (parse failures, bad curves, ...)."""


class ParseError(DataError):
    """An interchange file violates its documented schema."""


class BdError(DataError):
    """A Bjontegaard delta cannot be computed from the given curves."""


class CodecError(VcmBenchError):
    """An external encoder or decoder invocation failed."""

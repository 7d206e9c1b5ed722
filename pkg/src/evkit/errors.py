"""Exception hierarchy shared by all evkit modules.

Every error carries a short component tag so the CLI can print stable,
machine-parsable one-liners (``error: codec: ...``) and map the failure
to an exit code.
"""

from __future__ import annotations


class EvkitError(Exception):
    """Base class for all toolkit errors."""

    component = "evkit"
    exit_code = 5

    def __str__(self) -> str:
        return super().__str__()


class UsageError(EvkitError):
    """Bad arguments or flag combinations."""

    component = "cli"
    exit_code = 2


class FormatError(EvkitError):
    """Malformed or inconsistent file content / in-memory data."""

    component = "format"
    exit_code = 3


class CodecError(FormatError):
    """Encode/decode failure in one of the byte formats."""

    component = "codec"


class CapacityError(EvkitError):
    """A plan asks for more material than the pools contain."""

    component = "mixer"
    exit_code = 4

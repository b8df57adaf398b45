"""Exception hierarchy shared by all layers."""

from __future__ import annotations


class EdpError(Exception):
    """Base class for every error raised by this package."""


class NotAPoset(EdpError):
    pass


class UnknownElement(EdpError, KeyError):
    pass


class InvalidPayload(EdpError, ValueError):
    pass


class InvalidExtension(EdpError, ValueError):
    pass


class AlreadyPresent(EdpError):
    pass


class EmptyMlb(EdpError):
    pass


class GenesisMismatch(EdpError):
    pass


class AssertionFailed(EdpError):
    """A precondition of ``generate`` did not hold.

    ``which`` names the violated assertion so callers can tell them apart.
    """

    def __init__(self, which: str, message: str | None = None) -> None:
        super().__init__(message or which)
        self.which = which


class UnresolvedAncestors(EdpError):
    """Some maximal-lower-bound hashes are not (yet) known locally."""

    def __init__(self, missing) -> None:
        self.missing = tuple(sorted(missing))
        super().__init__(f"{len(self.missing)} unresolved ancestor(s): "
                         + ", ".join(m.hex()[:12] for m in self.missing))


class NotDownwardClosed(EdpError):
    pass


class UnknownExtension(EdpError, KeyError):
    pass


class DecodeError(EdpError, ValueError):
    pass


class ScenarioInvalid(EdpError, ValueError):
    pass

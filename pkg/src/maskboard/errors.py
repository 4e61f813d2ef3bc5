"""Exception types shared across the package.

Every error the HTTP layer can surface maps onto one of these, so the
service can translate exceptions into {"code", "message"} bodies without
string matching.
"""


class MaskboardError(Exception):
    """Base class for all package errors."""


class InvalidInput(MaskboardError, ValueError):
    """A precondition on caller-supplied data was violated."""


class NotFoundError(MaskboardError, KeyError):
    """A named entry (corpus, theme, model, ...) does not exist."""

    def __str__(self) -> str:  # KeyError quotes its args; keep plain text
        return self.args[0] if self.args else ""


class ConflictError(MaskboardError):
    """A write collides with existing state (duplicate review, name reuse)."""


class IntegrityError(MaskboardError):
    """Stored bytes no longer match their registered content hash."""


class ProviderUnavailable(MaskboardError):
    """The embedding provider failed after retries."""


class BackendUnavailable(MaskboardError):
    """An optional classifier backend is not usable in this environment."""

"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class DocmtError(Exception):
    """Base class for all toolkit errors."""


class RecordError(DocmtError):
    """A corpus record failed to parse or validate."""


class BackendError(DocmtError):
    """A translation backend request failed after retries."""


class ScorerError(DocmtError):
    """A quality scorer call failed."""


class ContextOverflowError(DocmtError):
    """A rendered request does not fit the backend context window."""


class UnalignableDocumentError(DocmtError):
    """Sentence alignment could not pair a document's sides."""

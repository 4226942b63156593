"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in cli.py; library code raises these
and never calls sys.exit.
"""

from __future__ import annotations


class AstSearchError(Exception):
    """Base class for all package errors."""


class UnsupportedLanguage(AstSearchError):
    """Requested language id has no registered grammar."""


class EncodingError(AstSearchError):
    """Input bytes are not valid UTF-8."""


class EmbeddingError(AstSearchError):
    """Embedding a node content failed; carries the node id."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message)
        self.node_id = node_id


class MissingEmbedding(AstSearchError):
    """Store-backed provider has no vector for the requested key."""


class FormatError(AstSearchError):
    """A binary or JSON artifact violates its file format; carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(AstSearchError):
    """Tensor dimensions do not match the model contract."""


class ContractViolation(AstSearchError):
    """A documented precondition was violated by the caller."""


class DuplicateId(AstSearchError):
    """Two corpus samples or index entries share an id."""


class FingerprintMismatch(AstSearchError):
    """Index queried with a model/provider it was not built with."""


class TrainingDiverged(AstSearchError):
    """Loss became non-finite; diagnostics were dumped."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path

"""Exception hierarchy.

Input problems derive from :class:`BadInput` (CLI exit code 2); backend
transport problems derive from :class:`BackendError` (exit code 3).
"""

from __future__ import annotations


class DrfAgentError(Exception):
    """Base class for every error raised by this package."""


class BadInput(DrfAgentError, ValueError):
    pass


class BackendError(DrfAgentError):
    pass


# scene / ingestion
class MissingColumn(BadInput):
    def __init__(self, name: str):
        super().__init__(f"missing required column {name!r}")
        self.name = name


class MalformedRow(BadInput):
    def __init__(self, line: int, reason: str = ""):
        msg = f"malformed row at line {line}"
        super().__init__(f"{msg}: {reason}" if reason else msg)
        self.line = line


class DuplicateKey(BadInput):
    def __init__(self, frame: int, track_id: int):
        super().__init__(f"duplicate (frame, id) = ({frame}, {track_id})")
        self.frame = frame
        self.track_id = track_id


class UnknownEgo(BadInput):
    pass


class UnknownFrame(BadInput):
    pass


class TrackTooShort(BadInput):
    pass


class BadParameter(BadInput):
    pass


# risk assessment
class EmptyDataset(BadInput):
    pass


class InsufficientSamples(BadInput):
    pass


class ConventionMismatch(BadInput):
    pass


# memory
class EmptyText(BadInput):
    pass


class DimensionMismatch(BadInput):
    pass


class CorruptStore(BadInput):
    def __init__(self, reason: str):
        super().__init__(f"corrupt memory store: {reason}")
        self.reason = reason


class SchemaVersionMismatch(BadInput):
    pass


class BackendUnavailable(BackendError):
    pass


# agent
class ParseError(DrfAgentError):
    """The model output carried no decodable decision."""

    def __init__(self, raw: str, reason: str = "no decision line"):
        super().__init__(f"{reason}: {raw[:200]!r}")
        self.raw = raw
        self.reason = reason


# evaluation
class NonPositiveGap(BadInput):
    pass


class EmptyLog(BadInput):
    pass


class MissingLabels(BadInput):
    pass

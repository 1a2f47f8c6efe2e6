"""Exception types raised across the package.

Every error that a caller is expected to handle gets its own class so CLI
exit-code mapping and tests can match on type rather than message text.
"""

from __future__ import annotations


class RoadcondError(Exception):
    """Base class for all package-specific errors."""


class MalformedRow(RoadcondError):
    """CSV row with the wrong shape or an unparsable value."""

    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class DuplicateSectionId(RoadcondError):
    pass


class ScoreOutOfRange(RoadcondError):
    """Condition score outside [0, 100]."""

    def __init__(self, value: float, row: int | None = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"condition score {value!r} outside [0, 100]{where}")
        self.value = value
        self.row = row


class UnknownPavementTypeCode(RoadcondError):
    pass


class EncoderMismatch(RoadcondError):
    """Category present in the data but absent from the fitted encoder."""


class DuplicateMarker(RoadcondError):
    """Two sections on the same route share a reference marker."""


class ShapeMismatch(RoadcondError):
    pass


class EmptyMask(RoadcondError):
    """Loss mask selects no node."""


class UndefinedLabel(RoadcondError):
    """A node under the loss mask has no label."""


class DegenerateMask(RoadcondError):
    """Training-mask sampling could not produce both hidden and visible labels."""


class NonFiniteLoss(RoadcondError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class InvalidConfig(RoadcondError):
    pass


class InsufficientLabeled(RoadcondError):
    """Not enough labeled nodes to build the requested mask plan."""


class MissingPrediction(RoadcondError):
    """A hidden node has no prediction to score."""


class NoEdges(RoadcondError):
    """Graph has no edges; adjacency statistics undefined."""

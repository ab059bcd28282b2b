"""Exception types raised across the toolkit."""
from __future__ import annotations


class Ki67KitError(Exception):
    """Base class for all toolkit errors."""


# annotation / manifest ingestion
class MalformedDocumentError(Ki67KitError):
    pass


class UnknownLabelError(Ki67KitError):
    pass


class DegenerateBoxError(Ki67KitError):
    pass


class OutOfBoundsBoxError(Ki67KitError):
    pass


class MalformedLineError(Ki67KitError):
    pass


class OutOfRangeError(Ki67KitError):
    pass


class UnknownClassIdError(Ki67KitError):
    pass


class CountMismatchError(Ki67KitError):
    pass


class SplitExistsError(Ki67KitError):
    pass


# augmentation
class EmptyResultError(Ki67KitError):
    pass


class TargetTooLargeError(Ki67KitError):
    pass


class DuplicateIdError(Ki67KitError):
    pass


# evaluation
class NoGroundTruthError(Ki67KitError):
    pass


class EmptySubsetError(Ki67KitError):
    pass


# scoring
class NoCellsError(Ki67KitError):
    pass


class EmptyCaseError(Ki67KitError):
    pass


# review service
class VersionConflictError(Ki67KitError):
    def __init__(self, message: str, expected: int, got: int):
        super().__init__(message)
        self.expected = expected
        self.got = got


class IndexOutOfRangeError(Ki67KitError):
    pass


class InvalidBoxError(Ki67KitError):
    pass


class UnknownCaseError(Ki67KitError):
    pass


class UnknownImageError(Ki67KitError):
    pass

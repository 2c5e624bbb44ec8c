"""Exception types shared across the evaluation pipeline."""


class ScoreEvalError(Exception):
    """Base class for every error raised by this package."""


class MalformedInput(ScoreEvalError):
    """Input bytes or JSON structure does not match the expected schema."""


class NoTableFound(ScoreEvalError):
    """An HTML fragment contained no table markup at all."""


class MultipleTablesFound(ScoreEvalError):
    """An HTML fragment contained more than one top-level table."""


class OverlappingCells(ScoreEvalError):
    """Two table cells cover the same grid position."""


class EmptyDataset(ScoreEvalError):
    """No ground-truth/prediction page pairs could be formed."""


class InvalidThreshold(ScoreEvalError):
    """A threshold or weight lies outside its documented range."""


class EmptyReference(ScoreEvalError):
    """The reference text is empty where a normalizing denominator is needed."""

"""Exception hierarchy for the eforest package."""


class EForestError(Exception):
    """Base class for all eforest errors."""


class FormatError(EForestError):
    """A file's container format is malformed (bad magic, truncation, bad header)."""


class ShapeError(EForestError):
    """Dimensions or counts disagree (image/label counts, row widths, channel splits)."""


class ParseError(EForestError):
    """A cell could not be parsed; carries the offending row and column."""

    def __init__(self, message: str, row: int, col: int):
        super().__init__(f"{message} (row {row}, col {col})")
        self.row = row
        self.col = col


class UnknownCategoryError(EForestError):
    """A categorical cell holds a value outside the declared value list."""


class ContradictionError(EForestError):
    """A conjunction of constraints is unsatisfiable; genuine decision paths never produce this."""


class EmptyMCRError(EForestError):
    """Rule intersection is empty; only possible with rules not taken from one instance's encoding."""


class LeafIndexError(EForestError):
    """A leaf ordinal is out of range for its tree."""


class SchemaMismatchError(EForestError):
    """Dataset schema is incompatible with the model schema."""


class ModelMismatchError(EForestError):
    """An encoding matrix was produced by a different model than the one decoding it."""


class MissingLabelsError(EForestError):
    """Supervised training requested on a dataset without labels."""


class EmptyDataError(EForestError):
    """Training requested on an empty dataset."""


class MetricDomainError(EForestError):
    """A metric was applied to data outside its domain (e.g. categorical attributes)."""


class ConfigError(EForestError):
    """Invalid configuration value (tree counts, fractions, masks)."""


class CorruptModelError(EForestError):
    """Model file content does not match its embedded hash."""


class VersionError(EForestError):
    """Model file version is not supported."""


class InvalidModelError(EForestError):
    """Model file parsed but violates structural invariants."""

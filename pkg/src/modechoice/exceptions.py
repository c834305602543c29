"""Exception and warning classes raised across the package."""


class ModeChoiceError(Exception):
    """Base class for all errors raised by modechoice."""


# data ingestion / schema

class MissingColumnError(ModeChoiceError, KeyError):
    def __init__(self, column):
        self.column = column
        super().__init__(column)

    def __str__(self):
        return f"missing column {self.column!r}"


class BadLabelError(ModeChoiceError, ValueError):
    """A mode code outside 1..8."""


class NonNumericFieldError(ModeChoiceError, ValueError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}, column {column!r}: non-numeric value {value!r}")


class NegativeTimeError(ModeChoiceError, ValueError):
    """Travel time must be strictly positive."""


class NegativeValueError(ModeChoiceError, ValueError):
    """A cost, age, income or density was negative."""


class DuplicateIdError(ModeChoiceError, ValueError):
    pass


class EmptyDatasetError(ModeChoiceError, ValueError):
    pass


class KTooLargeError(ModeChoiceError, ValueError):
    pass


class SchemaMismatchError(ModeChoiceError, ValueError):
    pass


class DimensionMismatchError(ModeChoiceError, ValueError):
    pass


# mnl / econ

class AllUnavailableError(ModeChoiceError, ValueError):
    """Every alternative of a choice set is unavailable."""


class NonFiniteLikelihoodError(ModeChoiceError, FloatingPointError):
    pass


class ZeroCostCoefficientError(ModeChoiceError, ZeroDivisionError):
    pass


class UnknownSelectorError(ModeChoiceError, KeyError):
    def __str__(self):
        return f"unknown selector {self.args[0]!r}"


class ScenarioError(ModeChoiceError, ValueError):
    pass


# ml models

class EmptyNodeError(ModeChoiceError, ValueError):
    pass


class SingleClassDataError(ModeChoiceError, ValueError):
    pass


class NonLinearKernelError(ModeChoiceError, TypeError):
    pass


# evaluation / interpretation

class LengthMismatchError(ModeChoiceError, ValueError):
    pass


class EmptyMatrixError(ModeChoiceError, ValueError):
    pass


class RowNotNormalizedError(ModeChoiceError, ValueError):
    pass


class GridMismatchError(ModeChoiceError, ValueError):
    pass


class ConstantFeatureError(ModeChoiceError, ValueError):
    pass


class IncompatibleMethodError(ModeChoiceError, TypeError):
    pass


class MissingEvalDataError(ModeChoiceError, ValueError):
    pass


class TrainerFailureError(ModeChoiceError, RuntimeError):
    """Every combination of a hyperparameter search failed to train."""


# persistence / cli

class SchemaVersionMismatchError(ModeChoiceError, ValueError):
    pass


class CorruptArtifactError(ModeChoiceError, ValueError):
    pass


class ConfigError(ModeChoiceError, ValueError):
    pass


# warnings

class ConvergenceWarning(UserWarning):
    """The optimizer stopped before the gradient tolerance was met."""


class SingularHessianWarning(UserWarning):
    pass


class QuasiSeparationWarning(UserWarning):
    pass


class EmptySegmentWarning(UserWarning):
    pass

"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/usage problems -> 1,
data problems -> 2, numeric failures -> 3.
"""


class FiglangError(Exception):
    """Base class for all package errors."""


class ShapeError(FiglangError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(FiglangError):
    """An API precondition was violated (e.g. non-scalar loss to backward)."""


class ConfigError(FiglangError):
    """Invalid model or run configuration."""


class DataError(FiglangError):
    """Malformed or out-of-contract input data."""


class VocabError(DataError):
    """Token id unknown to the tokenizer vocabulary."""


class MaskingError(FiglangError):
    """A sequence offers no maskable position for the MLM objective."""


class EmptyPoolError(FiglangError):
    """Max-over-time pooling received a fully masked sequence."""


class NumericError(FiglangError):
    """NaN/Inf encountered, or a numeric check failed."""


class UndefinedMetricError(DataError):
    """Metric has no defined value on this input (single-class AUC, zero-norm cosine)."""

"""Exception types shared across the package.

ValidationError subclasses map to CLI exit code 2 (bad inputs/config);
everything else under DcvdnError maps to exit code 1 (runtime failure).
"""


class DcvdnError(Exception):
    pass


class ValidationError(DcvdnError):
    pass


class ParseError(ValidationError):
    """Malformed input file; message carries the offending line number."""


class SchemaError(ValidationError):
    """Structurally valid file whose content violates a declared schema."""


class InvalidInput(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class AlignmentError(ValidationError):
    """Textual and visual views disagree on which videos/clusters exist."""


class OovError(ValidationError):
    """Token not present in a trained vocabulary."""


class BatchTooSmall(ValidationError):
    """Correlation objectives need strictly more samples than projected dims."""


class SingularCovariance(DcvdnError):
    """Covariance not positive definite even after ridge regularization."""

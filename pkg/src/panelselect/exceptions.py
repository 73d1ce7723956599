"""Exception hierarchy shared across the package."""


class PanelSelectError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PanelSelectError):
    """Array shapes are inconsistent; the message names the offending axis."""


class ValidationError(PanelSelectError):
    """Invalid inputs: unbalanced panels, bad configs, malformed files."""


class RankDeficiencyError(PanelSelectError):
    """A design matrix is (numerically) rank deficient.

    Carries the condition number and the columns implicated by the
    smallest singular directions so the caller can name the culprits.
    """

    def __init__(self, message, condition_number=None, columns=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.columns = list(columns) if columns is not None else []


class DegenerateFitError(PanelSelectError):
    """A fit produced a degenerate likelihood (perfect fit, sigma2 == 0)."""


class GenerationError(PanelSelectError):
    """Synthetic data generation produced a degenerate panel."""


class RegistryError(ValidationError):
    """Malformed model registry file; the message carries a line number."""

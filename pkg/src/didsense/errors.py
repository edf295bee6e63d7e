"""Exception and warning types shared across the package."""


class DidsenseError(Exception):
    """Base class for all errors raised by didsense."""


class PanelDataError(DidsenseError):
    """Panel ingestion or validation failure (bad file, bad cell structure)."""


class InsufficientDataError(DidsenseError):
    """Too few pre-treatment periods or lag pairs for the requested operation."""


class CollinearityError(DidsenseError):
    """Singular lag-regression design in the empirical-Bayes estimator."""


class IdentifiabilityError(DidsenseError):
    """Rank-deficient regression design or singular posterior precision."""


class NonstationaryError(DidsenseError):
    """|rho| >= 1 where a stationary process is required."""


class DegenerateDensityError(DidsenseError):
    """Zero innovation scale makes the transition density degenerate."""


class SamplingError(DidsenseError):
    """Posterior sampling failed; carries diagnostics when available.

    Attributes
    ----------
    details : dict
        Whatever the sampler knew at the point of failure (chain index,
        divergence counts, parameter values).
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = dict(details or {})


class RegimeError(DidsenseError):
    """Malformed prior regime, or an EB regime used without an estimate."""


class MismatchError(DidsenseError):
    """Posterior draws, panel, or trajectory shapes do not belong together."""


class NonstationaryRhoWarning(UserWarning):
    """Emitted whenever a deviation path is simulated with |rho| >= 1."""

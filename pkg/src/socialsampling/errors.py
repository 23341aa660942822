"""Exception hierarchy for the socialsampling package."""


class SocialSamplingError(Exception):
    """Base class for all package errors."""


# --- simplex ---------------------------------------------------------------

class NegativeMass(SocialSamplingError):
    """A probability weight is below the negativity tolerance."""


class BadSum(SocialSamplingError):
    """Weights do not sum to 1 within tolerance."""


class IndexOutOfRange(SocialSamplingError, IndexError):
    """Opinion index outside [1, M]."""


class EmptySample(SocialSamplingError):
    """Histogram requested for an empty opinion sample."""


# --- topology --------------------------------------------------------------

class BadParameters(SocialSamplingError):
    """Invalid topology parameters."""


class DisconnectedAfterRetries(SocialSamplingError):
    """Random graph generation never produced a connected graph."""


class NotSymmetric(SocialSamplingError):
    """Spectrum requested for a non-symmetric matrix."""


# --- protocol --------------------------------------------------------------

class InvalidRow(SocialSamplingError):
    """A sampling row that must be a distribution is not one."""


class Condition1Violation(SocialSamplingError):
    """Realized weights break the per-node mixing identity."""


class SimplexViolation(SocialSamplingError):
    """An estimate row left the simplex under a simplex-preserving variant."""


# --- analysis --------------------------------------------------------------

class ReconstructionMismatch(SocialSamplingError):
    """Step decomposition does not reproduce the realized update."""


class TooLargeToEnumerate(SocialSamplingError):
    """Joint message outcome space exceeds the enumeration cap."""


class DimensionMismatch(SocialSamplingError, ValueError):
    """Matrix/vector shapes do not agree."""


class DegenerateWindow(SocialSamplingError):
    """Rate-fit window has too few usable points."""


# --- harness ---------------------------------------------------------------

class ConfigError(SocialSamplingError):
    """Bad experiment configuration (carries a field/line diagnostic)."""


class IoFailure(SocialSamplingError):
    """Result emission failed."""


class TrialFailure(SocialSamplingError):
    """A trial aborted; carries the failing trial index and the cause."""

    def __init__(self, trial_index: int, cause: BaseException):
        super().__init__(f"trial {trial_index} failed: {cause}")
        self.trial_index = trial_index

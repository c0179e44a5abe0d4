"""Exception hierarchy shared across the package."""


class AsyncMotionError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AsyncMotionError):
    """Non-finite or otherwise malformed input values."""


class DegenerateTrackError(AsyncMotionError):
    """A track cannot support the per-track linear blocks (too short or rank-deficient)."""


class UnderconstrainedError(AsyncMotionError):
    """Observation counting shows fewer independent constraints than unknowns."""


class NoSolutionError(AsyncMotionError):
    """No usable tracks / hypotheses remain, nothing can be estimated."""


class AmbiguousSignError(AsyncMotionError):
    """Cheirality vote is an exact tie; the +-v ambiguity cannot be resolved."""


class ScaleUnobservableError(AsyncMotionError):
    """Known-acceleration solve requested with zero acceleration; scale is unobservable."""


class InsufficientDataError(AsyncMotionError):
    """Fewer eligible tracks than a sampling step requires."""


class OracleTooLargeError(AsyncMotionError):
    """Dense reference solve would exceed the allowed matrix size."""


class GenerationError(AsyncMotionError):
    """Synthetic scene generation failed to place visible points."""


class ExperimentError(AsyncMotionError):
    """A batch experiment produced too many failed trials to be meaningful."""

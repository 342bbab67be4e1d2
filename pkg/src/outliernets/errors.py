"""Exception hierarchy for the outliernets package.

Every error raised deliberately by this package derives from
:class:`OutlierNetsError`, so callers can catch one type at the CLI boundary.
"""


class OutlierNetsError(Exception):
    """Base class for all errors raised by this package."""


class AudioFormatError(OutlierNetsError):
    """A WAV/RIFF container is malformed (bad magic, truncated or missing chunk)."""


class UnsupportedEncodingError(AudioFormatError):
    """A WAV file uses an encoding other than 16-bit PCM or 32-bit IEEE float."""


class DatasetError(OutlierNetsError):
    """A dataset directory is missing, ambiguous, or contains no usable audio."""


class FeatureError(OutlierNetsError):
    """Feature extraction cannot proceed (invalid config, clip too short, ...)."""


class ShapeError(OutlierNetsError):
    """A tensor passed to a layer has the wrong dimensions."""


class ArchError(OutlierNetsError):
    """An architecture description is invalid or does not map input back to itself."""


class BundleFormatError(OutlierNetsError):
    """A serialized model bundle is malformed or inconsistent."""


class TrainingDivergedError(OutlierNetsError):
    """Training loss became non-finite.

    Attributes:
        epoch: zero-based epoch index at which divergence was detected.
    """

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training loss became non-finite at epoch {epoch}")


class SingleClassError(OutlierNetsError):
    """AUC was requested for a score list containing only one label class."""


class SearchExhaustedError(OutlierNetsError):
    """No feasible candidate exists in the search space.

    Attributes:
        best_infeasible: the best candidate found despite violating constraints,
            or None when nothing was evaluated at all.
    """

    def __init__(self, message: str, best_infeasible=None):
        self.best_infeasible = best_infeasible
        super().__init__(message)

class TrainerError(Exception):
    """Base class for trainer failures."""


class DivergedLoss(TrainerError):
    """Raised when a training or validation loss becomes non-finite."""


class ExportFailure(TrainerError):
    """Raised when the model could not be exported as an external scorer."""


class UnresolvableEntryWarning(UserWarning):
    """A manifest entry could not be matched to a dataset and was skipped."""

"""Exception hierarchy shared by every fdilab module."""


class FdiLabError(Exception):
    """Base class for all errors raised by fdilab."""


class ContractError(FdiLabError, ValueError):
    """An argument violated a precondition (shape, range, membership)."""


class CaseDataError(FdiLabError):
    """The bundled or user-supplied case file could not be parsed."""


class ObservabilityError(FdiLabError):
    """The measurement configuration does not determine every free angle."""

    def __init__(self, message, deficiency):
        super().__init__(message)
        self.deficiency = deficiency


class SingularSystemError(FdiLabError):
    """The weighted normal equations have no unique solution."""


class TrainingError(FdiLabError):
    """Non-finite loss or gradient encountered during optimisation."""


class CalibrationError(FdiLabError):
    """Threshold calibration impossible on the supplied labels."""


class StageError(FdiLabError):
    """Wraps an error raised inside an experiment pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

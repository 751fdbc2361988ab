"""Exception hierarchy shared by all dronerf modules."""


class DroneRFError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 4


class InvalidInputError(DroneRFError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 3


class DegenerateInputError(InvalidInputError):
    """Input has no usable energy or variance (would divide by zero)."""


class ConfigurationError(DroneRFError, ValueError):
    """A configuration cannot be realised (e.g. burst longer than a frame)."""

    exit_code = 3


class DatasetFormatError(DroneRFError):
    """A dataset directory could not be decoded."""

    exit_code = 3


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


class CheckpointError(DroneRFError):
    """A checkpoint directory is inconsistent with its own description."""

    exit_code = 3


class SampleRateMismatchError(DroneRFError):
    exit_code = 3


class TrainingDivergedError(DroneRFError):
    def __init__(self, epoch, batch_index, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index
        self.loss = loss

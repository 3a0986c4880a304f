"""Exception hierarchy shared across the toolkit."""


class Therm2VisError(Exception):
    """Base class for all toolkit errors."""


class PairingError(Therm2VisError):
    """A visible/thermal counterpart is missing or records do not match."""


class IngestionError(Therm2VisError):
    """An image file could not be read or decoded."""


class ConfigurationError(Therm2VisError):
    """A configuration value violates its contract."""


class ContractError(Therm2VisError):
    """An argument violates an operation precondition."""


class WeightsError(Therm2VisError):
    """Perceptual network weights failed shape or digest validation."""


class CheckpointError(Therm2VisError):
    """A checkpoint is unreadable or incompatible with the requested config."""


class TrainingDivergedError(Therm2VisError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at optimization step {step}")
        self.step = step
        self.value = value

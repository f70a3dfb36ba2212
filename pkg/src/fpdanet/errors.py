"""Exception types shared across the package."""


class FpdanetError(Exception):
    """Base class for all package errors."""


class ConfigError(FpdanetError, ValueError):
    """A configuration is internally inconsistent or out of range."""


class InputError(FpdanetError, ValueError):
    """A runtime input violates a precondition (size, range, format)."""


class ShapeError(FpdanetError, ValueError):
    """Tensor shapes are incompatible between connected layers."""


class CheckpointError(FpdanetError, ValueError):
    """A checkpoint archive is malformed, incomplete, or mismatched."""


class TrainingDivergedError(FpdanetError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch: int, lr: float):
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
        super().__init__(
            f"non-finite loss at epoch={epoch} batch={batch} lr={lr:g}"
        )

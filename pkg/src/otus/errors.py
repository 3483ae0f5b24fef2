"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Shape, range or configuration error in the arguments of an operation."""


class DegenerateVarianceError(InvalidArgumentError):
    """A normalization or ratio would divide by a zero variance."""


class BudgetExceededError(InvalidArgumentError):
    """An exact solver was asked for an instance above its size budget."""


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite during training."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class CheckpointMismatchError(RuntimeError):
    """A checkpoint does not belong to the network spec it is loaded into."""

"""Exception types shared across the package."""


class CapacityError(ValueError):
    """The hijacking task has more labels than the original task can absorb.

    A flat label mapping cannot be built in this case; the hierarchical
    attack variant exists specifically to work around this limit.
    """


class WeightsUnavailableError(RuntimeError):
    """Requested backbone weights were not found in the weights directory.

    Raised instead of silently falling back to random weights.
    """


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss_value: float):
        self.epoch = epoch
        self.loss_value = loss_value
        super().__init__(f"non-finite loss {loss_value!r} at epoch {epoch}")


class ConfigError(ValueError):
    """Experiment config failed schema validation.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class StageError(RuntimeError):
    """A named pipeline stage failed; earlier artifacts are kept."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")

class MechSearchError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(MechSearchError):
    """Bad or missing configuration, including missing checkpoints."""


class SceneGenerationError(MechSearchError):
    """Rejection sampling could not place an object (config too dense)."""


class BudgetExhaustedError(MechSearchError):
    """An action was executed after the motion budget ran out."""


class ScoresInconsistentError(MechSearchError):
    """GraspScores claim an eligible occluder but name none."""


class TrainingDivergenceError(MechSearchError):
    """Non-finite network output or loss during training."""

    def __init__(self, message: str, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class IntegrityError(MechSearchError):
    """A replayed episode or config does not match what was recorded."""

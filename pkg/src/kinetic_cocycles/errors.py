"""Exception hierarchy shared by all modules."""


class CocycleError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CocycleError, ValueError):
    """Invalid user-supplied configuration (bad ranges, overlapping boxes, ...)."""


class NumericalError(CocycleError, ArithmeticError):
    """A numerical routine failed (non-finite state, root finder failure)."""


class PropagationError(NumericalError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time!r})")
        self.time = time


class AlignmentError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (angular residual = {residual:.3e})")
        self.residual = residual


class LookbackError(NumericalError):
    """No crossing of the reference face was found within the lookback horizon."""


class BudgetError(CocycleError):
    """A perturbation stage exceeds its share of the distance budget."""

    def __init__(self, stage: str, r: float, r_required: float):
        super().__init__(
            f"stage {stage}: base measure r = {r:.6g} exceeds budget; "
            f"need r < {r_required:.6g}"
        )
        self.stage = stage
        self.r = r
        self.r_required = r_required


class PipelineError(CocycleError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause

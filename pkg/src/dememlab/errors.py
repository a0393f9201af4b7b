"""Exception types shared across the package."""


class DememlabError(Exception):
    """Base class for all package errors."""


class ShapeError(DememlabError, ValueError):
    """Array shapes or parameter layouts are incompatible."""


class DomainError(DememlabError, ValueError):
    """A numeric argument is outside its valid domain."""


class CapabilityError(DememlabError, TypeError):
    """The requested operation is not supported for these inputs."""


class ConfigError(DememlabError, ValueError):
    """An experiment or run configuration is invalid."""


class SplitError(DememlabError, ValueError):
    """A split plan does not cover the dataset it is applied to."""


class CoverageError(DememlabError, KeyError):
    """A perturbation set is missing an entry for an example or class."""


class SampleSizeError(DememlabError, ValueError):
    """Too few samples or runs for the requested statistical guarantee."""


class NumericError(DememlabError, ArithmeticError):
    """A numeric procedure failed (e.g. a Hessian stayed singular after damping)."""


class StageError(DememlabError, RuntimeError):
    """A pipeline stage failed. Carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class DependencyError(DememlabError, RuntimeError):
    """A required upstream artifact is missing. Names the producing stage."""

    def __init__(self, artifact: str, producing_stage: str):
        super().__init__(
            f"missing artifact '{artifact}'; run the '{producing_stage}' stage first"
        )
        self.artifact = artifact
        self.producing_stage = producing_stage

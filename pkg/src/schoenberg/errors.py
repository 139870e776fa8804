"""Exception hierarchy. Each error carries the name of the module that raised it."""


class SchoenbergError(Exception):
    module = "schoenberg"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module


class DimensionError(SchoenbergError, ValueError):
    """Shapes or particle counts that should agree do not."""


class InvalidDatasetError(SchoenbergError, ValueError):
    """Dataset violates its invariants (labels, size, finiteness)."""


class StalePlanError(SchoenbergError, ValueError):
    """A transport plan is unconverged or belongs to different ensembles."""


class InfeasibleRadiusError(SchoenbergError, RuntimeError):
    """Multiplier doubling exceeded its cap without meeting the radius."""


class StabilityError(SchoenbergError, ValueError):
    """Explicit time step above the scheme's stability bound."""


class ConfigError(SchoenbergError, ValueError):
    """Configuration failed validation."""


class ConvergenceError(SchoenbergError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

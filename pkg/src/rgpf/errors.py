"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class RGPFError(Exception):
    exit_code = 1


class ConfigError(RGPFError, ValueError):
    exit_code = 2


class InputShapeError(ConfigError):
    pass


class HyperparameterDomainError(ConfigError):
    pass


class DegreesOfFreedomError(ConfigError):
    pass


class BreakdownExceededError(ConfigError):
    pass


class CaseError(ConfigError):
    """Invalid network case file (cycle, disconnected bus, bad impedance...)."""


class SimulationError(RGPFError):
    exit_code = 3


class PowerFlowDivergence(SimulationError):
    def __init__(self, message, worst_bus=None, iterations=None):
        super().__init__(message)
        self.worst_bus = worst_bus
        self.iterations = iterations


class TrainingError(RGPFError):
    exit_code = 4


class RankDeficiencyError(TrainingError, ValueError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class IllConditionedKernelError(TrainingError):
    pass


class OptimizationFailure(TrainingError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class DegenerateCloudError(TrainingError, ValueError):
    pass


class ArtifactIOError(RGPFError, OSError):
    exit_code = 5

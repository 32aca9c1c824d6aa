"""Exception types shared across the package."""


class SeismdaError(Exception):
    """Base class; ``stage`` names the pipeline stage for CLI messages."""

    stage = "seismda"

    def __init__(self, *args, stage=None):
        super().__init__(*args)
        if stage is not None:
            self.stage = stage


class DimensionError(SeismdaError, ValueError):
    stage = "shape"


class ArgumentError(SeismdaError, ValueError):
    stage = "argument"


class ArchitectureError(SeismdaError, ValueError):
    stage = "model"


class TrainingError(SeismdaError, RuntimeError):
    stage = "train"


class SimulationError(SeismdaError, RuntimeError):
    stage = "simulate"


class PipelineError(SeismdaError, RuntimeError):
    stage = "preprocess"


class ConfigurationError(SeismdaError, ValueError):
    stage = "config"

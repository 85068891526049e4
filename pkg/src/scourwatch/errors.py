"""Exception hierarchy. Every error carries a short machine-parsable code
that the CLI prints on its first output line before exiting nonzero."""


class ScourwatchError(Exception):
    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class InputError(ScourwatchError):
    """Malformed input data (CSV rows, timestamps, duplicate readings)."""

    code = "bad-input"


class ParameterError(ScourwatchError):
    """Invalid parameter or configuration value."""

    code = "bad-parameter"


class ConfigError(ScourwatchError):
    """Config file problems: unknown keys, unparseable values."""

    code = "bad-config"


class GapError(ScourwatchError):
    """A gap too long to impute; the series must be split first."""

    code = "gap-too-long"


class TrainingDiverged(ScourwatchError):
    """Non-finite loss or gradient during training."""

    code = "diverged"

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class MissingArtifactError(ScourwatchError):
    """A pipeline stage was invoked before its upstream stage."""

    code = "missing-artifact"

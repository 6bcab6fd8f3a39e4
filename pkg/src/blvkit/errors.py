"""Exception hierarchy. The CLI maps each class to a stable exit code."""


class BlvError(Exception):
    exit_code = 1


class ConfigError(BlvError, ValueError):
    exit_code = 2


class DataError(BlvError, ValueError):
    exit_code = 3


class VizError(BlvError, ValueError):
    exit_code = 4


class ExperimentError(BlvError, RuntimeError):
    exit_code = 5

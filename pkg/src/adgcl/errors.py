"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes, so each class carries its own.
"""


class ADGCLError(Exception):
    exit_code = 1


class InputError(ADGCLError, ValueError):
    """Malformed user input (bad node ids, shape mismatches)."""

    exit_code = 2


class ParameterError(ADGCLError, ValueError):
    exit_code = 2


class ConfigError(ADGCLError, ValueError):
    exit_code = 2


class ContractError(ADGCLError, ValueError):
    """A caller violated an operation's precondition."""

    exit_code = 2


class ParseError(ADGCLError, ValueError):
    exit_code = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConsistencyError(ADGCLError, ValueError):
    """Files that parse individually but disagree with each other."""

    exit_code = 2


class CheckpointError(ADGCLError, IOError):
    exit_code = 3


class TrainingError(ADGCLError, ArithmeticError):
    exit_code = 4


class MetricError(ADGCLError, ValueError):
    """A metric is undefined for the given labels (e.g. single class)."""

    exit_code = 2

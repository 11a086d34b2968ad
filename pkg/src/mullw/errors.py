"""Exception types raised by the engine.

``exit_code`` on the session-level errors is what the CLI returns for them.
"""


class MullwError(Exception):
    exit_code = 1


class ModuleFileNotFound(MullwError, FileNotFoundError):
    exit_code = 4

    def __init__(self, path):
        super().__init__(f"module file not found: {path}")
        self.path = path


class InvalidModule(MullwError):
    exit_code = 4

    def __init__(self, path, reason):
        super().__init__(f"invalid module {path}: {reason}")
        self.path = path
        self.reason = reason


class InstrumentationFailure(MullwError):
    pass


class MalformedEventStream(MullwError):
    pass


class DuplicateTestName(MullwError):
    exit_code = 3

    def __init__(self, name):
        super().__init__(f"duplicate test name: {name}")
        self.name = name


class UnknownTestFunction(MullwError):
    exit_code = 2

    def __init__(self, name):
        super().__init__(f"no exported function named {name!r}")
        self.name = name


class NoTestsFound(MullwError):
    exit_code = 3

    def __init__(self, message="no tests found"):
        super().__init__(message)


class AnalysisFailure(MullwError):
    pass


class RewriteFailure(MullwError):
    pass


class InstantiationFailure(MullwError):
    pass


class EmptySession(MullwError):
    def __init__(self, message="session has no mutation points"):
        super().__init__(message)


class ConfigError(MullwError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, line, reason):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")
        self.line = line
        self.reason = reason


class ValidationError(ConfigError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class PersistError(MullwError):
    exit_code = 5

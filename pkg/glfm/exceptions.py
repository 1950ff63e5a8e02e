from typing import Optional

# Exit codes used by the command line entry point.
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class GLFMError(Exception):
    """Base error. Carries a user facing detail message and the exit code the CLI reports."""

    exit_code = EXIT_RUNTIME

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class SpecError(GLFMError):
    exit_code = EXIT_USAGE


class DataError(GLFMError):
    exit_code = EXIT_USAGE


class ConfigError(GLFMError):
    exit_code = EXIT_USAGE


class ModelError(GLFMError):
    exit_code = EXIT_RUNTIME


class StateError(GLFMError):
    exit_code = EXIT_RUNTIME

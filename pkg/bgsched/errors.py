from __future__ import annotations

from typing import Optional


class BgschedError(Exception):
    exit_code = 1


class ConfigError(BgschedError):
    exit_code = 2


class ParameterError(ConfigError, ValueError):
    pass


class DataError(BgschedError):
    exit_code = 3


class TraceFormatError(DataError):
    def __init__(self, message: str, *, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"{message} (first offending line: {line})"
        super().__init__(message)
        self.line = line


class InsufficientHistoryError(DataError):
    pass


class SeriesLengthError(DataError, ValueError):
    pass


class InvariantError(BgschedError):
    exit_code = 4

    def __init__(self, message: str, *, bin_index: Optional[int] = None) -> None:
        if bin_index is not None:
            message = f"bin {bin_index}: {message}"
        super().__init__(message)
        self.bin_index = bin_index

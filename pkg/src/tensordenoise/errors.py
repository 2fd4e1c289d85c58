from __future__ import annotations


class TensorDenoiseError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code: int = 1


class ConfigError(TensorDenoiseError):
    exit_code = 2


class ArgumentError(ConfigError, ValueError):
    exit_code = 2


class ShapeError(TensorDenoiseError, ValueError):
    exit_code = 2


class FormatError(TensorDenoiseError):
    exit_code = 3

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(TensorDenoiseError):
    exit_code = 4


# exits 4: a config that leaves a pixel uncovered fails at reconstruction time
class CoverageError(NumericError):
    def __init__(self, pixel: tuple[int, int], uncovered: int) -> None:
        super().__init__(
            f"pixel (w={pixel[0]}, h={pixel[1]}) is covered by no patch "
            f"({uncovered} uncovered pixels in total)"
        )
        self.pixel = pixel
        self.uncovered = uncovered


class EvaluatorError(TensorDenoiseError):
    exit_code = 4

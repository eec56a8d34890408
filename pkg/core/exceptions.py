"""
MOTS Exceptions - Error hierarchy shared by every pipeline module
"""

from typing import Optional


class MOTSError(Exception):
    """Base class for all pipeline errors"""


class ContractViolation(MOTSError, ValueError):
    """A precondition of an operation was not met by the caller"""


class PaddingRequiredError(ContractViolation):
    """Input dimensions are not divisible by the encoder stride"""

    def __init__(self, height: int, width: int, stride: int):
        self.height = height
        self.width = width
        self.stride = stride
        super().__init__(
            f"Input of size {height}x{width} must be padded to a multiple of the encoder stride {stride}"
        )


class EvaluationRefusal(ContractViolation):
    """Hypothesis masks overlap, so MOTS evaluation is undefined"""

    def __init__(self, message: str, frame_index: Optional[int] = None, overlapping: Optional[tuple] = None):
        self.frame_index = frame_index
        self.overlapping = overlapping
        super().__init__(message)


class ConfigurationError(MOTSError, ValueError):
    """Invalid configuration value or combination"""


class DataFormatError(MOTSError):
    """Input data does not follow the expected format"""


class AnnotationParseError(DataFormatError):
    """A KITTI-MOTS annotation line could not be parsed"""

    def __init__(self, message: str, line_number: int, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = f"{path}:{line_number}" if path else f"line {line_number}"
        super().__init__(f"{location}: {message}")

from typing import List, Optional


class SurvivalSVMError(Exception):
    """Base class for every error raised by the survival SVM package"""


class SchemaError(SurvivalSVMError):
    """Missing columns or a feature layout that does not match"""


class DataValidationError(SurvivalSVMError):
    def __init__(self, message: str, rows: Optional[List[int]] = None):
        self.rows = list(rows or [])
        if self.rows:
            shown = ', '.join(str(r) for r in self.rows[:20])
            more = f' (+{len(self.rows) - 20} more)' if len(self.rows) > 20 else ''
            message = f"{message} (rows: {shown}{more})"
        super().__init__(message)


class TrainingError(SurvivalSVMError):
    """Training cannot start or cannot proceed"""


class NumericalError(SurvivalSVMError):
    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} at Newton iteration {iteration}"
        super().__init__(message)


class ModelFormatError(SurvivalSVMError):
    """Model file is malformed, truncated or from another schema version"""


class RegenerationSignal(SurvivalSVMError):
    """A synthetic sample produced a non-finite risk and must be redrawn"""

"""Exception hierarchy shared by the library and the command line."""
from typing import List, Optional


class SdflowError(Exception):
    """Base class for all sdflow errors; ``exit_code`` is what the CLI returns."""

    exit_code = 1


class ConfigError(SdflowError):
    """
    Invalid simulation configuration.

    Args:
        errors (List[str]): Every violation found, as ``path: message`` entries
    """

    exit_code = 2

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


class InvalidMaterialError(SdflowError):
    exit_code = 2


class DegenerateGeometryError(SdflowError):
    """The normal graph folds over: 1 + h k_G <= 0 at some node."""

    exit_code = 3


class InadmissibleHeightError(SdflowError):
    exit_code = 3


class StepRejectedError(SdflowError):
    exit_code = 3


class GeometricBreakdownError(SdflowError):
    """
    A flow could not be continued.

    Args:
        message (str): What broke down
        result (Optional[object]): Partial ``RunResult`` when available
    """

    exit_code = 3

    def __init__(self, message: str, result: Optional[object] = None):
        super().__init__(message)
        self.result = result


class NonContractionError(SdflowError):
    exit_code = 4

    def __init__(self, message: str, ratios: Optional[List[float]] = None):
        super().__init__(message)
        self.ratios = list(ratios or [])


class ValidationFailure(SdflowError):
    exit_code = 5


class EllipticityError(SdflowError):
    pass


class MeshQualityError(SdflowError):
    pass


class SingularSystemError(SdflowError):
    pass


class DegenerateFitError(SdflowError):
    pass

import logging
from typing import Dict, Any, Optional

from pydantic import ValidationError as PydanticValidationError

# Exit codes are a stable contract of the command line surface.
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3
EXIT_OPTIMIZATION = 4

logger = logging.getLogger("artigen")


class ArtigenError(Exception):
    """Base exception class for the articulated demonstration generator."""
    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_ESTIMATION,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.details = details
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for JSON reports."""
        error_dict = {
            "error": self.message,
            "kind": type(self).__name__,
            "exit_code": self.exit_code
        }
        if self.details:
            error_dict["details"] = self.details
        return error_dict


# Input errors (exit 2)
class InputError(ArtigenError):
    """Malformed or inconsistent input."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_INPUT, details=details)
        logger.warning(f"Input error ({type(self).__name__}): {message}")

class ValidationError(InputError):
    """Configuration or payload validation errors."""

class MissingInput(InputError):
    """A referenced file or directory does not exist."""

class DimensionMismatch(InputError):
    """Masks or arrays with incompatible shapes."""

class BadFilterConfig(InputError):
    """Savitzky-Golay window/order or series length out of range."""

class BadConfig(InputError):
    """Invalid scene or pipeline configuration."""

class BadSplit(InputError):
    """Keyframes do not split the trajectory into three stages."""

class FrameMismatch(InputError):
    """Estimated and reference frame ranges do not line up."""

class JointLimit(InputError):
    """Joint values outside the kinematic chain limits."""


# Detection / estimation failures (exit 3)
class EstimationError(ArtigenError):
    """An estimator could not produce a result from the observations."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_ESTIMATION, details=details)
        logger.warning(f"Estimation failure ({type(self).__name__}): {message}")

class DegenerateCloud(EstimationError):
    """Too few points, or points collinear/coplanar within tolerance."""

class EmptyMask(EstimationError):
    """Processed mask has no pixels (full occlusion)."""

class NoMotionDetected(EstimationError):
    """No smoothed motion score exceeds the dynamic threshold."""

class NoContact(EstimationError):
    """Robot and movable part are farther apart than the contact radius."""

class DegeneratePart(EstimationError):
    """Part bounding box is flat along at least one axis."""

class InsufficientPairs(EstimationError):
    """Fewer than K point pairs near the selected edges."""

class NoIntersection(EstimationError):
    """Face plane never meets the contact trajectory."""


# Optimization failures (exit 4)
class OptimizationError(ArtigenError):
    """A numerical solver failed to reach an acceptable optimum."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_OPTIMIZATION, details=details)
        logger.error(f"Optimization failure ({type(self).__name__}): {message}")

class OptimizationDiverged(OptimizationError):
    """Fitting objective stayed above the divergence bound."""

class IkNoConvergence(OptimizationError):
    """Inverse kinematics did not reach the target; best iterate in details."""


# Utility functions
def handle_exception(func_name: str, e: Exception) -> ArtigenError:
    """Convert standard exceptions to ArtigenError with logging."""
    if isinstance(e, ArtigenError):
        return e
    elif isinstance(e, PydanticValidationError):
        return ValidationError(f"Invalid payload in {func_name}: {e.error_count()} error(s)",
                               details={"errors": [err["msg"] for err in e.errors()]})
    elif isinstance(e, (FileNotFoundError, NotADirectoryError)):
        return MissingInput(f"Missing input in {func_name}: {e}")
    elif isinstance(e, (ValueError, OSError)):
        return InputError(f"Bad input in {func_name}: {e}")
    else:
        message = f"Unexpected error in {func_name}: {str(e)}"
        logger.error(message, exc_info=True)
        return ArtigenError(message)

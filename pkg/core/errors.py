"""
errors.py - Exception hierarchy shared by the analysis modules.
"""

from typing import Optional


class DsqError(Exception):
    """Base exception for curve and distance-squared analysis errors."""
    pass


class CurveSpecError(DsqError):
    """Raised when a curve document or expression cannot be parsed."""
    pass


class ImmersionError(DsqError):
    """Raised when the first derivative of a curve vanishes."""
    def __init__(self, component: int, t: float, speed: float):
        self.component = component
        self.t = t
        self.speed = speed
        super().__init__(
            f"Curve is not an immersion at component {component}, t={t:.6g} "
            f"(|gamma'| = {speed:.3e})"
        )


class DomainError(DsqError):
    """Raised when a curve location lies outside its component's domain."""
    def __init__(self, component: int, t: float, lo: float, hi: float,
                 message: Optional[str] = None):
        self.component = component
        self.t = t
        super().__init__(
            message or f"Parameter t={t:.6g} outside domain [{lo:.6g}, {hi:.6g}] "
            f"of component {component}"
        )


class CatalogError(DsqError):
    """Raised for unknown builtin curves or invalid catalog parameters."""
    pass


class CollinearityError(DsqError):
    """Raised when anchor pairs expected on one line are not collinear."""
    def __init__(self, residual: float, tolerance: float):
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(
            f"Anchors are not collinear: distance to line {residual:.3e} "
            f"exceeds {tolerance:.3e}"
        )


class DegeneratePairError(DsqError):
    """Raised when an anchor pair has coincident anchors where distinct ones are required."""
    pass


class SearchError(DsqError):
    """Raised when the constructive anchor search fails; names the failing stage."""
    def __init__(self, stage: str, message: str, attempts: int = 0,
                 diagnostic: Optional[str] = None):
        self.stage = stage
        self.message = message
        self.attempts = attempts
        self.diagnostic = diagnostic
        text = f"[{stage}] {message}"
        if diagnostic:
            text += f" ({diagnostic})"
        super().__init__(text)

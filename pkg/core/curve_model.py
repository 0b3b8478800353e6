"""
curve_model.py - Piecewise parametric plane curves with exact derivatives.

A curve is an ordered list of components, each a pair of symbolic
expressions x(t), y(t) on a parameter interval. Expressions are parsed with
sympy from a small grammar (constants, t, + - * /, sin, cos, integer powers),
differentiated symbolically and compiled to numpy with lambdify.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .errors import CatalogError, CurveSpecError, DomainError, ImmersionError

logger = logging.getLogger(__name__)

T = sp.Symbol("t", real=True)

DEFAULT_MARGIN = 1e-4
IMMERSION_SAMPLES = 512
IMMERSION_THRESHOLD = 1e-9

_ALLOWED_FUNCTIONS = (sp.sin, sp.cos)
_LOCAL_NAMES = {"t": T, "sin": sp.sin, "cos": sp.cos, "pi": sp.pi}
_GLOBAL_NAMES = {
    "__builtins__": {},
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
    "Function": sp.Function,
}


# Value types


class Interval(BaseModel):
    """Parameter interval; open intervals are worked on margin-shrunk closed ones."""

    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    closed_margin: float = DEFAULT_MARGIN

    @model_validator(mode="after")
    def _check_bounds(self) -> "Interval":
        if not self.lo < self.hi:
            raise ValueError(f"Interval requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.closed_margin < 0 or self.closed_margin >= (self.hi - self.lo) / 2:
            raise ValueError(
                f"closed_margin {self.closed_margin} must lie in [0, (hi - lo)/2)"
            )
        return self

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def work_lo(self) -> float:
        return self.lo + self.closed_margin

    @property
    def work_hi(self) -> float:
        return self.hi - self.closed_margin


class CurveLoc(BaseModel):
    """A point of N addressed as (component index, parameter)."""

    model_config = ConfigDict(frozen=True)

    component: int = 0
    t: float


class Arc(BaseModel):
    """An open parameter sub-interval (lo, hi) of one component."""

    model_config = ConfigDict(frozen=True)

    component: int = 0
    lo: float
    hi: float

    @model_validator(mode="after")
    def _check_bounds(self) -> "Arc":
        if not self.lo < self.hi:
            raise ValueError(f"Arc requires lo < hi, got ({self.lo}, {self.hi})")
        return self

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, t: float) -> bool:
        return self.lo < t < self.hi


class ComponentDocument(BaseModel):
    """One component of the curve JSON document."""

    x: str = Field(description="Expression for the x coordinate in t")
    y: str = Field(description="Expression for the y coordinate in t")
    domain: Tuple[float, float] = Field(description="Parameter interval [lo, hi]")
    closed: bool = Field(default=False, description="Endpoints are identified (periodic component)")
    margin: float = Field(default=DEFAULT_MARGIN, description="Shrink applied to the open domain")


class CurveDocument(BaseModel):
    """The curve JSON document."""

    components: List[ComponentDocument] = Field(min_length=1)
    injective: bool = Field(default=True, description="Caller asserts the curve is injective")
    name: Optional[str] = None


# Expressions


def parse_expression(text: str) -> sp.Expr:
    """
    Parse an expression string in t.

    Raises:
        CurveSpecError: If the text does not parse or leaves the grammar
    """
    try:
        expr = parse_expr(
            text,
            local_dict=dict(_LOCAL_NAMES),
            global_dict=dict(_GLOBAL_NAMES),
            transformations=standard_transformations + (convert_xor,),
        )
    except Exception as e:
        raise CurveSpecError(f"Cannot parse expression {text!r}: {str(e)[:100]}")

    if not isinstance(expr, sp.Expr):
        raise CurveSpecError(f"Expression {text!r} is not a scalar expression")

    stray = expr.free_symbols - {T}
    if stray:
        names = ", ".join(sorted(str(s) for s in stray))
        raise CurveSpecError(f"Expression {text!r} uses unknown names: {names}")

    for call in expr.atoms(sp.Function):
        if call.func not in _ALLOWED_FUNCTIONS:
            raise CurveSpecError(f"Expression {text!r} uses unsupported function {call.func}")

    for power in expr.atoms(sp.Pow):
        if not power.exp.is_Integer:
            raise CurveSpecError(f"Expression {text!r} uses non-integer power {power}")

    return expr


def _compile(expr: sp.Expr) -> Callable[[Any], np.ndarray]:
    func = sp.lambdify(T, expr, modules="numpy")

    def evaluate(t: Any) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(func(t), dtype=float) + np.zeros_like(t)

    return evaluate


# Curves


@dataclass(frozen=True)
class CurveComponent:
    """One parametric piece t -> (x(t), y(t)) with compiled derivatives up to order 2."""

    domain: Interval
    x_expr: sp.Expr
    y_expr: sp.Expr
    periodic: bool = False
    _funcs: Tuple[Tuple[Callable, Callable], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        funcs = []
        x_expr, y_expr = self.x_expr, self.y_expr
        for _ in range(3):
            funcs.append((_compile(x_expr), _compile(y_expr)))
            x_expr, y_expr = sp.diff(x_expr, T), sp.diff(y_expr, T)
        object.__setattr__(self, "_funcs", tuple(funcs))

    @property
    def bounds(self) -> Tuple[float, float]:
        """Working bounds: full period for closed components, margin-shrunk otherwise."""
        if self.periodic:
            return self.domain.lo, self.domain.hi
        return self.domain.work_lo, self.domain.work_hi

    @property
    def period(self) -> float:
        return self.domain.length

    def normalize(self, t: Any) -> Any:
        """Wrap parameters of a closed component into [lo, hi)."""
        if not self.periodic:
            return t
        lo = self.domain.lo
        return lo + np.mod(np.asarray(t, dtype=float) - lo, self.period)

    def contains(self, t: float) -> bool:
        if self.periodic:
            return math.isfinite(t)
        lo, hi = self.bounds
        return lo <= t <= hi

    def evaluate(self, t: Any, order: int = 0) -> np.ndarray:
        """Vectorized evaluation of the order-th derivative; returns shape (..., 2)."""
        fx, fy = self._funcs[order]
        return np.stack([fx(t), fy(t)], axis=-1)

    def separation(self, t1: Any, t2: Any) -> Any:
        """Parameter distance, measured around the circle for closed components."""
        gap = np.abs(np.asarray(t2, dtype=float) - np.asarray(t1, dtype=float))
        if self.periodic:
            gap = np.mod(gap, self.period)
            gap = np.minimum(gap, self.period - gap)
        return gap


@dataclass(frozen=True)
class Curve:
    """Piecewise plane curve gamma: N -> R^2."""

    components: Tuple[CurveComponent, ...]
    injectivity_hint: bool = True
    name: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.components:
            raise CurveSpecError("A curve needs at least one component")

    def component(self, index: int) -> CurveComponent:
        if not 0 <= index < len(self.components):
            raise DomainError(index, float("nan"), 0, len(self.components) - 1,
                              message=f"Curve has no component {index}")
        return self.components[index]

    def check_loc(self, loc: CurveLoc) -> float:
        """
        Validate a location and return its (wrapped) parameter.

        Raises:
            DomainError: If the component index or parameter is out of range
        """
        comp = self.component(loc.component)
        if not comp.contains(loc.t):
            lo, hi = comp.bounds
            raise DomainError(loc.component, loc.t, lo, hi)
        return float(comp.normalize(loc.t))

    def to_document(self) -> CurveDocument:
        return CurveDocument(
            components=[
                ComponentDocument(
                    x=str(c.x_expr),
                    y=str(c.y_expr),
                    domain=(c.domain.lo, c.domain.hi),
                    closed=c.periodic,
                    margin=c.domain.closed_margin,
                )
                for c in self.components
            ],
            injective=self.injectivity_hint,
            name=self.name,
        )

    def digest(self) -> str:
        """SHA-256 of the canonical curve document."""
        payload = self.to_document().model_dump_json()
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def curve_eval(curve: Curve, loc: CurveLoc) -> np.ndarray:
    """Evaluate gamma at a location."""
    t = curve.check_loc(loc)
    return curve.components[loc.component].evaluate(t)


def curve_derivative(curve: Curve, loc: CurveLoc, order: int = 1) -> np.ndarray:
    """
    Exact first or second derivative of gamma at a location.

    Raises:
        DomainError: If the location is out of range
        ValueError: If order is not 1 or 2
    """
    if order not in (1, 2):
        raise ValueError(f"Unsupported derivative order: {order} (expected 1 or 2)")
    t = curve.check_loc(loc)
    return curve.components[loc.component].evaluate(t, order)


def verify_immersion(curve: Curve, samples: int = IMMERSION_SAMPLES,
                     threshold: float = IMMERSION_THRESHOLD) -> None:
    """
    Check that |gamma'| stays above threshold on a dense sample.

    Raises:
        ImmersionError: At the first sample where the speed drops below threshold
    """
    for index, comp in enumerate(curve.components):
        lo, hi = comp.bounds
        ts = np.linspace(lo, hi, samples)
        speed = np.hypot(*comp.evaluate(ts, 1).T)
        bad = np.flatnonzero(speed < threshold)
        if bad.size:
            k = int(bad[0])
            raise ImmersionError(index, float(ts[k]), float(speed[k]))


def injectivity_violations(curve: Curve, samples: int = 256,
                           tol: float = 1e-9) -> List[Tuple[CurveLoc, CurveLoc]]:
    """Spot-check injectivity by pairwise sampling; returns coincident location pairs."""
    locs: List[CurveLoc] = []
    points = []
    for index, comp in enumerate(curve.components):
        lo, hi = comp.bounds
        ts = np.linspace(lo, hi, samples, endpoint=not comp.periodic)
        locs.extend(CurveLoc(component=index, t=float(t)) for t in ts)
        points.append(comp.evaluate(ts))
    pts = np.concatenate(points)
    gaps = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    found = []
    for i, j in zip(*np.nonzero(np.triu(gaps < tol, k=1))):
        a, b = locs[int(i)], locs[int(j)]
        if a.component == b.component:
            comp = curve.components[a.component]
            if comp.separation(a.t, b.t) < 2 * (comp.bounds[1] - comp.bounds[0]) / samples:
                continue
        found.append((a, b))
    return found


def build_curve(document: CurveDocument, check_injectivity: bool = False) -> Curve:
    """
    Build a Curve from a validated document.

    Raises:
        CurveSpecError: If an expression or domain is invalid
        ImmersionError: If the immersion sampling check fails
    """
    components = []
    for index, entry in enumerate(document.components):
        try:
            margin = 0.0 if entry.closed else entry.margin
            domain = Interval(lo=entry.domain[0], hi=entry.domain[1], closed_margin=margin)
        except ValidationError as e:
            raise CurveSpecError(f"Component {index}: invalid domain: {e.errors()[0]['msg']}")
        components.append(
            CurveComponent(
                domain=domain,
                x_expr=parse_expression(entry.x),
                y_expr=parse_expression(entry.y),
                periodic=entry.closed,
            )
        )
    curve = Curve(tuple(components), injectivity_hint=document.injective, name=document.name)
    verify_immersion(curve)
    if check_injectivity:
        clashes = injectivity_violations(curve)
        if clashes:
            logger.warning("Curve declared injective but %d sampled pairs coincide", len(clashes))
    return curve


def load_curve(document: Union[str, bytes, Mapping[str, Any]],
               check_injectivity: bool = False) -> Curve:
    """
    Load a curve from curve JSON text (or an already decoded mapping).

    Raises:
        CurveSpecError: If the document is malformed
        ImmersionError: If gamma' vanishes somewhere on the sampled domain
    """
    try:
        if isinstance(document, (str, bytes)):
            doc = CurveDocument.model_validate_json(document)
        else:
            doc = CurveDocument.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first.get("loc", ()))
        raise CurveSpecError(f"Malformed curve document at '{where}': {first['msg']}")
    return build_curve(doc, check_injectivity=check_injectivity)


def load_curve_file(path: Union[str, Path]) -> Curve:
    """Read and load a curve JSON file."""
    file_path = Path(path)
    if not file_path.exists():
        raise CurveSpecError(f"Curve file not found: {path}")
    return load_curve(file_path.read_text(encoding="utf-8"))


# Builtin catalog


def _piece(x: sp.Expr, y: sp.Expr, lo: float, hi: float, periodic: bool = False) -> CurveComponent:
    margin = 0.0 if periodic else DEFAULT_MARGIN
    return CurveComponent(
        domain=Interval(lo=lo, hi=hi, closed_margin=margin),
        x_expr=sp.sympify(x),
        y_expr=sp.sympify(y),
        periodic=periodic,
    )


def _params(name: str, params: Sequence[float], defaults: Sequence[float]) -> List[float]:
    if not params:
        return [float(v) for v in defaults]
    if len(params) != len(defaults):
        raise CatalogError(
            f"Curve '{name}' takes {len(defaults)} parameters, got {len(params)}"
        )
    values = [float(v) for v in params]
    if not all(math.isfinite(v) for v in values):
        raise CatalogError(f"Curve '{name}' parameters must be finite: {values}")
    return values


def _window(name: str, params: Sequence[float], default: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = _params(name, params, default)
    if not lo < hi:
        raise CatalogError(f"Curve '{name}' needs lo < hi, got [{lo}, {hi}]")
    return lo, hi


def _line(params: Sequence[float]) -> List[CurveComponent]:
    lo, hi = _window("line", params, (-1.0, 2.0))
    return [_piece(T, sp.Integer(0), lo, hi)]


def _circle(params: Sequence[float]) -> List[CurveComponent]:
    (r,) = _params("circle", params, (1.0,))
    if r <= 0:
        raise CatalogError(f"Circle radius must be positive, got {r}")
    return [_piece(r * sp.cos(T), r * sp.sin(T), 0.0, 2 * math.pi, periodic=True)]


def _ellipse(params: Sequence[float]) -> List[CurveComponent]:
    a, b = _params("ellipse", params, (2.0, 1.0))
    if a <= 0 or b <= 0:
        raise CatalogError(f"Ellipse semi-axes must be positive, got {a}, {b}")
    return [_piece(a * sp.cos(T), b * sp.sin(T), 0.0, 2 * math.pi, periodic=True)]


def _parabola_arc(params: Sequence[float]) -> List[CurveComponent]:
    lo, hi = _window("parabola_arc", params, (-2.0, 2.0))
    return [_piece(T, T**2, lo, hi)]


def _example2_segments(params: Sequence[float]) -> List[CurveComponent]:
    _params("example2_segments", params, ())
    return [
        _piece(T, sp.Integer(-1), 0.0, 1.0),
        _piece(T - 1, sp.Integer(0), 1.0, 2.0),
        _piece(T - 2, sp.Integer(1), 2.0, 3.0),
    ]


def _stadium(params: Sequence[float]) -> List[CurveComponent]:
    (half,) = _params("stadium", params, (1.0,))
    if half <= 0:
        raise CatalogError(f"Stadium half-length must be positive, got {half}")
    return [
        _piece(T, sp.Integer(-1), -half, half),
        _piece(half + sp.sin(T), -sp.cos(T), 0.0, math.pi),
        _piece(-T, sp.Integer(1), -half, half),
        _piece(-half - sp.sin(T), sp.cos(T), 0.0, math.pi),
    ]


def _flat_ring(params: Sequence[float]) -> List[CurveComponent]:
    (radius,) = _params("flat_ring", params, (2.0,))
    if radius <= 1:
        raise CatalogError(f"flat_ring radius must exceed 1 to clear the segment, got {radius}")
    return [
        _piece(T, sp.Integer(0), -1.0, 1.0),
        _piece(radius * sp.cos(T), radius * sp.sin(T), 0.0, 2 * math.pi, periodic=True),
    ]


CATALOG: Dict[str, Callable[[Sequence[float]], List[CurveComponent]]] = {
    "line": _line,
    "circle": _circle,
    "ellipse": _ellipse,
    "parabola_arc": _parabola_arc,
    "example2_segments": _example2_segments,
    "stadium": _stadium,
    "flat_ring": _flat_ring,
}


def builtin_curve(name: str, params: Sequence[float] = ()) -> Curve:
    """
    Build a catalog curve.

    Raises:
        CatalogError: Unknown name, wrong parameter count or degenerate parameters
    """
    builder = CATALOG.get(name)
    if builder is None:
        raise CatalogError(
            f"Unknown builtin curve: {name}. Available: {', '.join(sorted(CATALOG))}"
        )
    curve = Curve(tuple(builder(params)), injectivity_hint=True, name=name)
    verify_immersion(curve)
    return curve


def curve_document_text(curve: Curve) -> str:
    """Pretty JSON text of a curve's document."""
    return json.dumps(curve.to_document().model_dump(), indent=2)

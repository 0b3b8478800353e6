"""
dsq_core.py - Distance-squared functions and mappings composed with a curve.

For an anchor pair p = (p1, p2) the distance-squared mapping is
D_p(x) = (|x - p1|^2, |x - p2|^2). Along a curve gamma,

    d(D_p o gamma)/dt = 2 (<gamma - p1, gamma'>, <gamma - p2, gamma'>),

so a parameter is singular exactly when both dot products g1, g2 vanish.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import brentq, minimize_scalar

from .curve_model import Arc, Curve, CurveComponent, CurveLoc
from .settings import Tolerances

logger = logging.getLogger(__name__)


class Anchor(BaseModel):
    """A plane point p_i = (p_i1, p_i2)."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float

    @classmethod
    def of(cls, point: Sequence[float]) -> "Anchor":
        return cls(x=float(point[0]), y=float(point[1]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y])


class AnchorPair(BaseModel):
    """Ordered anchor pair p = (p1, p2) defining D_p."""

    model_config = ConfigDict(frozen=True)

    p1: Anchor
    p2: Anchor

    @classmethod
    def of(cls, p1: Sequence[float], p2: Sequence[float]) -> "AnchorPair":
        return cls(p1=Anchor.of(p1), p2=Anchor.of(p2))

    @property
    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.p1.array, self.p2.array

    @property
    def gap(self) -> float:
        """|p2 - p1|."""
        return float(np.hypot(self.p2.x - self.p1.x, self.p2.y - self.p1.y))

    def is_degenerate(self, tol: float = 0.0) -> bool:
        return self.gap <= tol

    def swapped(self) -> "AnchorPair":
        return AnchorPair(p1=self.p2, p2=self.p1)


class SingularPoint(BaseModel):
    """A parameter where D_p o gamma fails to be an immersion."""

    model_config = ConfigDict(frozen=True)

    loc: CurveLoc
    residuals: Tuple[float, float]
    refined: bool = True
    # set when g1 and g2 vanish on the whole arc; loc is then its midpoint
    arc: Optional[Arc] = None


@dataclass(frozen=True)
class Composition:
    """D_p o gamma, evaluated componentwise and vectorized over parameters."""

    curve: Curve
    pair: AnchorPair

    def values(self, index: int, ts: np.ndarray) -> np.ndarray:
        """F(t), shape (..., 2)."""
        p1, p2 = self.pair.arrays
        gamma = self.curve.components[index].evaluate(ts)
        return np.stack([
            np.sum((gamma - p1) ** 2, axis=-1),
            np.sum((gamma - p2) ** 2, axis=-1),
        ], axis=-1)

    def dots(self, index: int, ts: np.ndarray) -> np.ndarray:
        """(g1, g2) = (<gamma - p1, gamma'>, <gamma - p2, gamma'>), shape (..., 2)."""
        p1, p2 = self.pair.arrays
        piece = self.curve.components[index]
        gamma = piece.evaluate(ts)
        velocity = piece.evaluate(ts, 1)
        return np.stack([
            np.sum((gamma - p1) * velocity, axis=-1),
            np.sum((gamma - p2) * velocity, axis=-1),
        ], axis=-1)

    def dot_slopes(self, index: int, ts: np.ndarray) -> np.ndarray:
        """d/dt of (g1, g2): |gamma'|^2 + <gamma - p_k, gamma''>."""
        p1, p2 = self.pair.arrays
        piece = self.curve.components[index]
        gamma = piece.evaluate(ts)
        velocity = piece.evaluate(ts, 1)
        accel = piece.evaluate(ts, 2)
        speed_sq = np.sum(velocity * velocity, axis=-1)
        return np.stack([
            speed_sq + np.sum((gamma - p1) * accel, axis=-1),
            speed_sq + np.sum((gamma - p2) * accel, axis=-1),
        ], axis=-1)

    def derivatives(self, index: int, ts: np.ndarray) -> np.ndarray:
        """dF/dt = 2 (g1, g2)."""
        return 2.0 * self.dots(index, ts)

    def second_derivatives(self, index: int, ts: np.ndarray) -> np.ndarray:
        return 2.0 * self.dot_slopes(index, ts)


def dsq_eval(anchor: Anchor, x: Sequence[float]) -> float:
    """Distance-squared function d_p(x) = (x1 - p1)^2 + (x2 - p2)^2."""
    return (float(x[0]) - anchor.x) ** 2 + (float(x[1]) - anchor.y) ** 2


def dsq_map_eval(pair: AnchorPair, x: Sequence[float]) -> np.ndarray:
    """Distance-squared mapping D_p(x) = (d_p1(x), d_p2(x))."""
    return np.array([dsq_eval(pair.p1, x), dsq_eval(pair.p2, x)])


def dsq_map_jacobian(pair: AnchorPair, x: Sequence[float]) -> np.ndarray:
    point = np.asarray(x, dtype=float)
    p1, p2 = pair.arrays
    return 2.0 * np.vstack([point - p1, point - p2])


def dsq_map_rank(pair: AnchorPair, x: Sequence[float], tol: float = 1e-9) -> int:
    """Numerical rank of the Jacobian of D_p at x (rank < 2 exactly on the line p1p2)."""
    return int(np.linalg.matrix_rank(dsq_map_jacobian(pair, x), tol=tol))


def reflect_across_anchor_line(pair: AnchorPair, x: Sequence[float]) -> np.ndarray:
    """
    Mirror image of x in the line through p1 and p2.

    For p1 != p2, D_p(x) = D_p(y) exactly when y = x or y is this mirror image.
    """
    p1, p2 = pair.arrays
    direction = p2 - p1
    norm_sq = float(direction @ direction)
    if norm_sq == 0.0:
        raise ValueError("Anchor line is undefined for coincident anchors")
    point = np.asarray(x, dtype=float)
    foot = p1 + direction * float((point - p1) @ direction) / norm_sq
    return 2.0 * foot - point


def composition_derivative(comp: Composition, loc: CurveLoc) -> np.ndarray:
    """d(D_p o gamma)/dt at loc = 2 (<gamma - p1, gamma'>, <gamma - p2, gamma'>)."""
    t = comp.curve.check_loc(loc)
    return comp.derivatives(loc.component, np.asarray(t))


# Singular points


def _polish(f, df, t0: float, lo: float, hi: float, tol: float, max_iter: int) -> float:
    t = t0
    for _ in range(max_iter):
        value = f(t)
        if abs(value) < tol:
            break
        slope = df(t)
        if slope == 0.0 or not math.isfinite(slope):
            break
        t = min(max(t - value / slope, lo), hi)
    return t


def _component_roots(comp: Composition, index: int, which: int, ts: np.ndarray,
                     g: np.ndarray, tols: Tolerances, root_tol: float) -> List[float]:
    """Roots of g_which on one component: sign-change brackets plus minima of |g|."""
    piece = comp.curve.components[index]
    lo, hi = piece.bounds

    def f(t: float) -> float:
        return float(comp.dots(index, np.asarray(t))[which])

    def df(t: float) -> float:
        return float(comp.dot_slopes(index, np.asarray(t))[which])

    values = g[:, which]
    grid = ts
    if piece.periodic:
        grid = np.append(ts, ts[0] + piece.period)
        values = np.append(values, values[0])

    roots: List[float] = []
    magnitude = np.abs(values)
    scale = float(np.max(magnitude))
    if scale < root_tol:
        # g vanishes identically on this component; the companion scan decides
        return roots

    def window(a: float, b: float) -> Tuple[float, float]:
        return (a, b) if piece.periodic else (max(a, lo), min(b, hi))

    for k in np.flatnonzero(values[:-1] == 0.0):
        roots.append(float(grid[k]))
    for k in np.flatnonzero(values[:-1] * values[1:] < 0.0):
        t = brentq(f, float(grid[k]), float(grid[k + 1]), xtol=1e-15, maxiter=200)
        roots.append(_polish(f, df, t, *window(grid[k], grid[k + 1]),
                             tol=root_tol, max_iter=tols.newton_max_iter))

    # even-order zeros do not change sign: seed from local minima of |g|
    threshold = max(math.sqrt(root_tol), 1e-3) * scale
    inner = magnitude[1:-1]
    minima = (
        (inner <= magnitude[:-2]) & (inner <= magnitude[2:])
        & (inner > 0.0) & (inner < threshold)
        & (values[:-2] * values[2:] >= 0.0)
    )
    for k in np.flatnonzero(minima) + 1:
        a, b = window(grid[k - 1], grid[k + 1])
        best = minimize_scalar(lambda s: abs(f(s)), bounds=(a, b), method="bounded",
                               options={"xatol": 1e-14})
        roots.append(_polish(f, df, float(best.x), a, b, root_tol, tols.newton_max_iter))

    return [float(piece.normalize(t)) for t in roots if abs(f(t)) < root_tol]


def _merge_roots(piece: CurveComponent, roots: List[float], merge_tol: float) -> List[float]:
    merged: List[float] = []
    for t in sorted(roots):
        if merged and piece.separation(merged[-1], t) < merge_tol:
            continue
        merged.append(t)
    if piece.periodic and len(merged) > 1 and piece.separation(merged[0], merged[-1]) < merge_tol:
        merged.pop()
    return merged


def find_singular_points(comp: Composition, tol: Optional[float] = None,
                         tolerances: Optional[Tolerances] = None) -> List[SingularPoint]:
    """
    All parameters where g1 and g2 vanish together.

    Roots of g1 are located from sign changes and near-zero minima on a dense
    grid, refined by bisection then Newton, and accepted when |g2| is below the
    companion tolerance; the same scan is seeded from g2. An empty list is the
    immersion verdict at this resolution.
    """
    tols = tolerances or Tolerances()
    root_tol = tol if tol is not None else tols.root_tol
    found: List[SingularPoint] = []

    for index, piece in enumerate(comp.curve.components):
        lo, hi = piece.bounds
        ts = np.linspace(lo, hi, tols.grid_samples, endpoint=not piece.periodic)
        g = comp.dots(index, ts)
        if float(np.max(np.abs(g))) < root_tol:
            # D_p o gamma is constant here: every parameter is singular
            logger.warning("Component %d maps to a single point under D_p", index)
            found.append(SingularPoint(
                loc=CurveLoc(component=index, t=0.5 * (lo + hi)),
                residuals=(float(np.max(np.abs(g[:, 0]))), float(np.max(np.abs(g[:, 1])))),
                refined=False,
                arc=Arc(component=index, lo=lo, hi=hi),
            ))
            continue

        accepted: List[float] = []
        for which in (0, 1):
            for t in _component_roots(comp, index, which, ts, g, tols, root_tol):
                other = float(comp.dots(index, np.asarray(t))[1 - which])
                if abs(other) < tols.companion_tol:
                    accepted.append(t)

        for t in _merge_roots(piece, accepted, tols.merge_tol):
            g1, g2 = comp.dots(index, np.asarray(t))
            found.append(SingularPoint(
                loc=CurveLoc(component=index, t=t),
                residuals=(float(g1), float(g2)),
                refined=True,
            ))

    found.sort(key=lambda s: (s.loc.component, s.loc.t))
    logger.debug("Found %d singular points", len(found))
    return found

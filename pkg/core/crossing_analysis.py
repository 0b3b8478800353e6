"""
crossing_analysis.py - Normal-crossings verdict for D_p o gamma.

A composition F = D_p o gamma has normal crossings when every image point has
at most two preimages and the two differentials at each double point span the
plane. Double points are the zeros of

    G(q1, q2) = F(q1) - F(q2)

on the space of location pairs with q1 before q2. They are located by
subdividing parameter boxes, discarding boxes whose Lipschitz bound keeps G
away from zero, and refining the surviving clusters with Gauss-Newton.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .curve_model import CurveLoc
from .dsq_core import AnchorPair, Composition, SingularPoint, find_singular_points
from .settings import Tolerances

logger = logging.getLogger(__name__)

Classification = Literal["transverse", "tangential", "singular"]

ZERO_DIFFERENTIAL = 1e-8
FAMILY_SPREAD = 8.0
FAMILY_MIN_SOLUTIONS = 4
FAMILY_SEEDS = 64
CLUSTER_SEEDS = 5
EXTRA_LEVELS = 6
LIPSCHITZ_SAFETY = 1.5

REASON_SINGULAR = "singular points"
REASON_TANGENTIAL = "tangential double points"
REASON_SINGULAR_CROSSING = "double points at singular points"
REASON_FAMILY = "non-isolated coincidences"
REASON_MULTIPLICITY = "points of multiplicity >= 3"
REASON_UNRESOLVED = "unresolved"
REASON_DEGENERATE = "degenerate anchor pair"
REASON_COLLAPSED = "component collapsed to a point"


class DoublePoint(BaseModel):
    """Two distinct locations with the same image under D_p o gamma."""

    model_config = ConfigDict(frozen=True)

    q1: CurveLoc
    q2: CurveLoc
    image: Tuple[float, float]
    differentials: Tuple[Tuple[float, float], Tuple[float, float]]
    span_det: float
    residual: float
    classification: Classification = "transverse"
    isolated: bool = True


class CoincidenceFamily(BaseModel):
    """A continuum of coincidences F(q1) = F(q2) found along a surviving region."""

    model_config = ConfigDict(frozen=True)

    components: Tuple[int, int]
    t1_range: Tuple[float, float]
    t2_range: Tuple[float, float]
    representatives: List[DoublePoint]
    classification: Classification
    budget_exceeded: bool = False


class UnresolvedCell(BaseModel):
    """A surviving region where no Newton seed converged, or the box budget ran out first."""

    model_config = ConfigDict(frozen=True)

    components: Tuple[int, int]
    t1_range: Tuple[float, float]
    t2_range: Tuple[float, float]
    best_residual: Optional[float] = None


class CrossingScan(BaseModel):
    """Everything the subdivision search found."""

    model_config = ConfigDict(frozen=True)

    double_points: List[DoublePoint]
    families: List[CoincidenceFamily]
    unresolved: List[UnresolvedCell]


class CompositionReport(BaseModel):
    """Immersion and normal-crossings verdict for one anchor pair."""

    model_config = ConfigDict(frozen=True)

    pair: AnchorPair
    is_immersion: bool
    singular_points: List[SingularPoint]
    double_points: List[DoublePoint]
    families: List[CoincidenceFamily]
    unresolved: List[UnresolvedCell]
    max_multiplicity: int
    has_normal_crossings: bool
    passes: bool
    reasons: List[str]
    degenerate_pair: bool
    tolerances: Tolerances


# Per component-pair geometry


@dataclass
class _PairSpace:
    """Parameter box [lo1, hi1] x [lo2, hi2] for components (i, j)."""

    comp: Composition
    i: int
    j: int
    tols: Tolerances
    lo1: float = field(init=False)
    hi1: float = field(init=False)
    lo2: float = field(init=False)
    hi2: float = field(init=False)
    radius: float = field(init=False)
    leaf: float = field(init=False)

    def __post_init__(self) -> None:
        pieces = self.comp.curve.components
        self.lo1, self.hi1 = pieces[self.i].bounds
        self.lo2, self.hi2 = pieces[self.j].bounds
        length = min(self.hi1 - self.lo1, self.hi2 - self.lo2)
        self.radius = self.tols.cluster_fraction * length
        self.leaf = self.radius / self.tols.leaf_divisor

    @property
    def same(self) -> bool:
        return self.i == self.j

    @property
    def periodic(self) -> bool:
        return self.comp.curve.components[self.i].periodic and self.same

    def g(self, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
        return self.comp.values(self.i, t1) - self.comp.values(self.j, t2)

    def jacobian(self, t1: float, t2: float) -> np.ndarray:
        d1 = self.comp.derivatives(self.i, np.asarray(t1))
        d2 = self.comp.derivatives(self.j, np.asarray(t2))
        return np.column_stack([d1, -d2])

    def excluded(self, boxes: np.ndarray) -> np.ndarray:
        """Boxes lying wholly below the ordering diagonal or inside the cluster radius."""
        if not self.same:
            return np.zeros(len(boxes), dtype=bool)
        dmin = boxes[:, 2] - boxes[:, 1]
        dmax = boxes[:, 3] - boxes[:, 0]
        mask = dmax < self.radius
        if self.periodic:
            period = self.hi1 - self.lo1
            mask |= dmin > period - self.radius
        return mask

    def _slope_bound(self, index: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        width = hi - lo
        knots = np.stack([lo, 0.5 * (lo + hi), hi], axis=-1)
        first = np.abs(self.comp.derivatives(index, knots)).max(axis=-2)
        second = np.abs(self.comp.second_derivatives(index, knots)).max(axis=-2)
        return LIPSCHITZ_SAFETY * first + second * (0.5 * width)[:, None]

    def discard(self, boxes: np.ndarray) -> np.ndarray:
        """Boxes where |G_k(center)| exceeds the Lipschitz bound for some k."""
        c1 = 0.5 * (boxes[:, 0] + boxes[:, 1])
        c2 = 0.5 * (boxes[:, 2] + boxes[:, 3])
        centre = np.abs(self.g(c1, c2))
        bound = (
            self._slope_bound(self.i, boxes[:, 0], boxes[:, 1]) * (0.5 * (boxes[:, 1] - boxes[:, 0]))[:, None]
            + self._slope_bound(self.j, boxes[:, 2], boxes[:, 3]) * (0.5 * (boxes[:, 3] - boxes[:, 2]))[:, None]
        )
        return np.any(centre > bound, axis=-1) | self.excluded(boxes)

    def in_bounds(self, t1: float, t2: float, slack: float = 0.0) -> bool:
        pieces = self.comp.curve.components
        ok1 = pieces[self.i].periodic or self.lo1 - slack <= t1 <= self.hi1 + slack
        ok2 = pieces[self.j].periodic or self.lo2 - slack <= t2 <= self.hi2 + slack
        return ok1 and ok2

    def canonical(self, t1: float, t2: float) -> Tuple[float, float]:
        pieces = self.comp.curve.components
        t1 = float(pieces[self.i].normalize(t1))
        t2 = float(pieces[self.j].normalize(t2))
        if self.same and t2 < t1:
            t1, t2 = t2, t1
        return t1, t2

    def distinct(self, t1: float, t2: float) -> bool:
        if not self.same:
            return True
        return float(self.comp.curve.components[self.i].separation(t1, t2)) > self.radius


@dataclass
class _Newton:
    status: Literal["converged", "escaped", "stalled"]
    t1: float
    t2: float
    residual: float


def _gauss_newton(space: _PairSpace, t1: float, t2: float, tol: float) -> _Newton:
    x = np.array([t1, t2], dtype=float)
    residual = float("inf")
    for _ in range(space.tols.newton_max_iter):
        value = space.g(np.asarray(x[0]), np.asarray(x[1]))
        residual = float(np.linalg.norm(value))
        if residual < tol:
            break
        step, *_ = np.linalg.lstsq(space.jacobian(x[0], x[1]), -value, rcond=None)
        if not np.all(np.isfinite(step)):
            return _Newton("stalled", float(x[0]), float(x[1]), residual)
        x = x + step
        if not space.in_bounds(x[0], x[1], slack=2.0 * space.leaf):
            return _Newton("escaped", float(x[0]), float(x[1]), residual)
    else:
        value = space.g(np.asarray(x[0]), np.asarray(x[1]))
        residual = float(np.linalg.norm(value))

    if residual >= tol:
        return _Newton("stalled", float(x[0]), float(x[1]), residual)
    if not space.in_bounds(x[0], x[1]):
        return _Newton("escaped", float(x[0]), float(x[1]), residual)
    return _Newton("converged", float(x[0]), float(x[1]), residual)


# Subdivision


def _split(boxes: np.ndarray, leaf: float) -> np.ndarray:
    """Halve every box along each axis still wider than the leaf size."""
    out = boxes
    for axis in (0, 2):
        width = out[:, axis + 1] - out[:, axis]
        if not np.any(width > leaf):
            continue
        mid = 0.5 * (out[:, axis] + out[:, axis + 1])
        left, right = out.copy(), out.copy()
        left[:, axis + 1] = mid
        right[:, axis] = mid
        out = np.concatenate([left, right])
    return out


def _initial_boxes(space: _PairSpace) -> np.ndarray:
    n = space.tols.initial_boxes
    e1 = np.linspace(space.lo1, space.hi1, n + 1)
    e2 = np.linspace(space.lo2, space.hi2, n + 1)
    a1, a2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a1, a2 = a1.ravel(), a2.ravel()
    return np.column_stack([e1[a1], e1[a1 + 1], e2[a2], e2[a2 + 1]])


def _subdivide(space: _PairSpace, boxes: np.ndarray, leaf: float) -> Tuple[np.ndarray, bool]:
    """Refine until every box is at most leaf wide; returns survivors and budget flag."""
    boxes = boxes[~space.discard(boxes)]
    while boxes.size:
        widths = np.maximum(boxes[:, 1] - boxes[:, 0], boxes[:, 3] - boxes[:, 2])
        if np.all(widths <= leaf):
            break
        boxes = _split(boxes, leaf)
        boxes = boxes[~space.discard(boxes)]
        if len(boxes) > space.tols.max_boxes:
            logger.warning(
                "Components (%d, %d): %d surviving boxes exceed the budget of %d",
                space.i, space.j, len(boxes), space.tols.max_boxes,
            )
            return boxes, True
        logger.debug("Components (%d, %d): %d boxes survive", space.i, space.j, len(boxes))
    return boxes, False


def _clusters(boxes: np.ndarray) -> List[np.ndarray]:
    """Group equal-size leaf boxes into 8-connected clusters."""
    if not boxes.size:
        return []
    h1 = float(np.min(boxes[:, 1] - boxes[:, 0]))
    h2 = float(np.min(boxes[:, 3] - boxes[:, 2]))
    a = np.round(boxes[:, 0] / h1).astype(np.int64)
    b = np.round(boxes[:, 2] / h2).astype(np.int64)
    # row-major cell ids; one spare column each side keeps b +- 1 from wrapping
    width = int(b.max() - b.min()) + 3
    ids = (a - a.min()) * width + (b - b.min() + 1)

    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    rows, cols = [], []
    for da, db in ((0, 1), (1, -1), (1, 0), (1, 1)):
        target = ids + da * width + db
        pos = np.minimum(np.searchsorted(sorted_ids, target), len(ids) - 1)
        hit = sorted_ids[pos] == target
        rows.append(np.flatnonzero(hit))
        cols.append(order[pos[hit]])
    rows_all, cols_all = np.concatenate(rows), np.concatenate(cols)
    graph = coo_matrix((np.ones(len(rows_all)), (rows_all, cols_all)), shape=(len(ids), len(ids)))
    _, labels = connected_components(graph, directed=False)

    perm = np.lexsort((ids, labels))
    groups = np.split(perm, np.flatnonzero(np.diff(labels[perm])) + 1)
    groups.sort(key=lambda g: int(ids[g[0]]))
    return [boxes[g] for g in groups]


def _hull(boxes: np.ndarray) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    return (
        (float(boxes[:, 0].min()), float(boxes[:, 1].max())),
        (float(boxes[:, 2].min()), float(boxes[:, 3].max())),
    )


def _seed(space: _PairSpace, cells: np.ndarray, count: int, tol: float) -> List[_Newton]:
    picks = np.unique(np.linspace(0, len(cells) - 1, min(count, len(cells))).astype(int))
    outcomes = []
    for k in picks:
        box = cells[k]
        outcomes.append(_gauss_newton(
            space, 0.5 * (box[0] + box[1]), 0.5 * (box[2] + box[3]), tol,
        ))
    return outcomes


def _accepted(space: _PairSpace, outcomes: List[_Newton]) -> Tuple[List[Tuple[float, float]], List[_Newton]]:
    """Valid converged solutions (canonical order, distinct locations) and the stalled seeds."""
    solutions = []
    stalled = []
    for out in outcomes:
        if out.status == "stalled":
            stalled.append(out)
        elif out.status == "converged":
            t1, t2 = space.canonical(out.t1, out.t2)
            if space.distinct(t1, t2):
                solutions.append((t1, t2))
    return solutions, stalled


def _dedup(solutions: List[Tuple[float, float]], gap: float) -> List[Tuple[float, float]]:
    unique: List[Tuple[float, float]] = []
    for s in sorted(solutions):
        if all(max(abs(s[0] - u[0]), abs(s[1] - u[1])) > gap for u in unique):
            unique.append(s)
    return unique


def _make_double_point(space: _PairSpace, t1: float, t2: float, isolated: bool = True) -> DoublePoint:
    comp = space.comp
    d1 = comp.derivatives(space.i, np.asarray(t1))
    d2 = comp.derivatives(space.j, np.asarray(t2))
    image = comp.values(space.i, np.asarray(t1))
    residual = float(np.linalg.norm(space.g(np.asarray(t1), np.asarray(t2))))
    dp = DoublePoint(
        q1=CurveLoc(component=space.i, t=t1),
        q2=CurveLoc(component=space.j, t=t2),
        image=(float(image[0]), float(image[1])),
        differentials=((float(d1[0]), float(d1[1])), (float(d2[0]), float(d2[1]))),
        span_det=float(d1[0] * d2[1] - d1[1] * d2[0]),
        residual=residual,
        isolated=isolated,
    )
    return classify_double_point(dp, space.tols.transversality_tol)


def _family(space: _PairSpace, cells: np.ndarray, tol: float,
            solutions: List[Tuple[float, float]], budget_exceeded: bool = False) -> CoincidenceFamily:
    t1_range, t2_range = _hull(cells)
    points = [_make_double_point(space, t1, t2, isolated=False) for t1, t2 in solutions]
    kinds = {p.classification for p in points}
    if "singular" in kinds:
        kind: Classification = "singular"
    elif "tangential" in kinds:
        kind = "tangential"
    else:
        kind = "transverse"
    return CoincidenceFamily(
        components=(space.i, space.j),
        t1_range=t1_range,
        t2_range=t2_range,
        representatives=points,
        classification=kind,
        budget_exceeded=budget_exceeded,
    )


@dataclass
class _PairResult:
    double_points: List[DoublePoint] = field(default_factory=list)
    families: List[CoincidenceFamily] = field(default_factory=list)
    unresolved: List[UnresolvedCell] = field(default_factory=list)


def _resolve_cluster(space: _PairSpace, cells: np.ndarray, tol: float, result: _PairResult) -> None:
    solutions, stalled = _accepted(space, _seed(space, cells, CLUSTER_SEEDS, tol))

    if not solutions and stalled:
        finer, _ = _subdivide(space, cells, space.leaf / 2**EXTRA_LEVELS)
        if not finer.size:
            return
        solutions, stalled = _accepted(space, _seed(space, finer, CLUSTER_SEEDS, tol))
        if not solutions and stalled:
            t1_range, t2_range = _hull(cells)
            result.unresolved.append(UnresolvedCell(
                components=(space.i, space.j),
                t1_range=t1_range,
                t2_range=t2_range,
                best_residual=min(s.residual for s in stalled),
            ))
            return

    if not solutions:
        return

    spread = max(
        max(abs(a[0] - b[0]), abs(a[1] - b[1]))
        for a in solutions for b in solutions
    )
    if spread > FAMILY_SPREAD * space.leaf:
        extra, _ = _accepted(space, _seed(space, cells, FAMILY_SEEDS, tol))
        distinct = _dedup(solutions + extra, 2.0 * space.leaf)
        if len(distinct) >= FAMILY_MIN_SOLUTIONS:
            result.families.append(_family(space, cells, tol, distinct))
            return
        solutions = distinct

    for t1, t2 in _dedup(solutions, 2.0 * space.leaf):
        result.double_points.append(_make_double_point(space, t1, t2))


def _scan_pair(space: _PairSpace, tol: float) -> _PairResult:
    result = _PairResult()
    survivors, over_budget = _subdivide(space, _initial_boxes(space), space.leaf)
    if over_budget:
        outcomes = _seed(space, survivors, FAMILY_SEEDS, tol)
        seeds, _ = _accepted(space, outcomes)
        if seeds:
            result.families.append(_family(space, survivors, tol, _dedup(seeds, 2.0 * space.leaf),
                                           budget_exceeded=True))
        else:
            # nothing converged, so the surviving region stays undecided
            t1_range, t2_range = _hull(survivors)
            finite = [o.residual for o in outcomes if np.isfinite(o.residual)]
            result.unresolved.append(UnresolvedCell(
                components=(space.i, space.j),
                t1_range=t1_range,
                t2_range=t2_range,
                best_residual=min(finite, default=None),
            ))
        return result

    for cells in _clusters(survivors):
        _resolve_cluster(space, cells, tol, result)

    merged = []
    for dp in sorted(result.double_points, key=lambda d: (d.q1.t, d.q2.t)):
        if merged and abs(merged[-1].q1.t - dp.q1.t) <= 2.0 * space.leaf \
                and abs(merged[-1].q2.t - dp.q2.t) <= 2.0 * space.leaf:
            continue
        merged.append(dp)
    result.double_points = merged
    return result


def scan_crossings(comp: Composition, tol: Optional[float] = None,
                   tolerances: Optional[Tolerances] = None) -> CrossingScan:
    """
    Subdivision search for double points over every ordered component pair.

    Returns isolated double points, non-isolated coincidence families and the
    regions where refinement failed to converge.
    """
    tols = tolerances or Tolerances()
    image_tol = tol if tol is not None else tols.image_tol
    if image_tol <= 0:
        raise ValueError(f"Image tolerance must be positive, got {image_tol}")

    total = _PairResult()
    count = len(comp.curve.components)
    for i, j in combinations_with_replacement(range(count), 2):
        part = _scan_pair(_PairSpace(comp, i, j, tols), image_tol)
        total.double_points.extend(part.double_points)
        total.families.extend(part.families)
        total.unresolved.extend(part.unresolved)

    def order(dp: DoublePoint) -> Tuple[int, float, int, float]:
        return (dp.q1.component, dp.q1.t, dp.q2.component, dp.q2.t)

    scan = CrossingScan(
        double_points=sorted(total.double_points, key=order),
        families=total.families,
        unresolved=total.unresolved,
    )
    logger.info(
        "Crossing scan: %d double points, %d families, %d unresolved cells",
        len(scan.double_points), len(scan.families), len(scan.unresolved),
    )
    return scan


def find_double_points(comp: Composition, tol: Optional[float] = None,
                       tolerances: Optional[Tolerances] = None) -> List[DoublePoint]:
    """
    Classified double points of D_p o gamma.

    Points sampled from non-isolated coincidence families are included with
    isolated=False.
    """
    scan = scan_crossings(comp, tol, tolerances)
    points = list(scan.double_points)
    for family in scan.families:
        points.extend(family.representatives)
    return points


def classify_double_point(dp: DoublePoint, tol: float,
                          zero_tol: float = ZERO_DIFFERENTIAL) -> DoublePoint:
    """
    Transverse iff |span_det| > tol * |dF(q1)| * |dF(q2)|.

    A vanishing differential makes the point singular: the immersion verdict
    covers it, not the crossing verdict.
    """
    n1 = float(np.hypot(*dp.differentials[0]))
    n2 = float(np.hypot(*dp.differentials[1]))
    if n1 < zero_tol or n2 < zero_tol:
        kind: Classification = "singular"
    elif abs(dp.span_det) > tol * n1 * n2:
        kind = "transverse"
    else:
        kind = "tangential"
    return dp.model_copy(update={"classification": kind})


def max_multiplicity(points: List[DoublePoint], image_tol: float,
                     location_gap: float) -> int:
    """Largest number of distinct locations sharing one image (1 when injective)."""
    if not points:
        return 1
    parent = list(range(len(points)))

    def find(k: int) -> int:
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    images = np.array([p.image for p in points])
    for a in range(len(points)):
        close = np.flatnonzero(np.linalg.norm(images[a + 1:] - images[a], axis=-1) < image_tol)
        for b in close + a + 1:
            parent[find(int(b))] = find(a)

    groups: Dict[int, List[CurveLoc]] = {}
    for k, p in enumerate(points):
        groups.setdefault(find(k), []).extend([p.q1, p.q2])

    best = 2
    for locs in groups.values():
        distinct: List[CurveLoc] = []
        for loc in locs:
            if not any(o.component == loc.component and abs(o.t - loc.t) <= location_gap
                       for o in distinct):
                distinct.append(loc)
        best = max(best, len(distinct))
    return best


def analyze(comp: Composition, tolerances: Optional[Tolerances] = None) -> CompositionReport:
    """Immersion and normal-crossings verdict for D_p o gamma."""
    tols = tolerances or Tolerances()
    singular = find_singular_points(comp, tolerances=tols)
    scan = scan_crossings(comp, tolerances=tols)

    isolated = scan.double_points
    location_gap = tols.cluster_fraction * min(
        c.bounds[1] - c.bounds[0] for c in comp.curve.components
    )
    multiplicity = max_multiplicity(isolated, tols.multiplicity_tol, location_gap)
    degenerate = comp.pair.is_degenerate()

    reasons: List[str] = []
    if degenerate:
        reasons.append(REASON_DEGENERATE)
    if singular:
        reasons.append(REASON_SINGULAR)
    if any(s.arc is not None for s in singular):
        reasons.append(REASON_COLLAPSED)
    all_points = list(isolated) + [p for f in scan.families for p in f.representatives]
    if any(p.classification == "tangential" for p in all_points):
        reasons.append(REASON_TANGENTIAL)
    if any(p.classification == "singular" for p in all_points):
        reasons.append(REASON_SINGULAR_CROSSING)
    if scan.families:
        reasons.append(REASON_FAMILY)
    if multiplicity > 2:
        reasons.append(REASON_MULTIPLICITY)
    if scan.unresolved:
        reasons.append(REASON_UNRESOLVED)

    is_immersion = not singular
    has_normal_crossings = (
        not scan.families
        and multiplicity <= 2
        and all(p.classification == "transverse" for p in isolated)
    )
    passes = is_immersion and has_normal_crossings and not scan.unresolved and not degenerate

    report = CompositionReport(
        pair=comp.pair,
        is_immersion=is_immersion,
        singular_points=singular,
        double_points=isolated,
        families=scan.families,
        unresolved=scan.unresolved,
        max_multiplicity=multiplicity,
        has_normal_crossings=has_normal_crossings,
        passes=passes,
        reasons=reasons,
        degenerate_pair=degenerate,
        tolerances=tols,
    )
    logger.info("Composition %s: %s", "passes" if passes else "fails",
                ", ".join(reasons) or "immersion with normal crossings")
    return report

"""
generic_search.py - Constructive search for curve-anchored generic pairs.

The chord map

    Phi(t1, t2, s1, s2) = (gamma(t1) + s1 c, gamma(t1) + s2 c),  c = gamma(t2) - gamma(t1)

sends two curve parameters and two line parameters to an anchor pair on the
chord line. At (s1, s2) = (0, 1) its Jacobian determinant is +-phi1 * phi2 with

    phi1 = det[gamma'(t1) | c],   phi2 = det[gamma'(t2) | c],

so once both are non-zero Phi is a local diffeomorphism. A small generic
perturbation p' of Phi(t1, t2, 0, 1) is pulled back by Newton inversion, and
the curve points gamma(t1'), gamma(t2') on the same line become anchors whose
composition is affinely conjugate to D_p' o gamma.

The pipeline itself (nondegenerate pair -> base state -> perturbation) runs as
a LangGraph workflow in graph.py; this module holds the stages.
"""

import logging
from collections import Counter
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from .affine_normalizer import AffineMap2, LineParam, build_conjugator
from .crossing_analysis import CompositionReport, analyze
from .curve_model import Arc, Curve, CurveComponent, CurveLoc
from .diffgeo import StarVerdict, satisfies_star
from .dsq_core import AnchorPair, Composition
from .errors import DomainError, SearchError
from .settings import Tolerances

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 2000
DEFAULT_ATTEMPTS = 20
S1_RANGE = (-0.5, 0.5)
S2_RANGE = (0.5, 1.5)
MAX_SHRINK_STEPS = 40

STAGE_NONDEGENERATE_1 = "nondegenerate_stage1"
STAGE_NONDEGENERATE_2 = "nondegenerate_stage2"
STAGE_BASE_STATE = "base_state"
STAGE_INVERSION = "inversion"
STAGE_SIGMA = "sigma_saturation"


class PhiPoint(BaseModel):
    """A state of the chord map with its value and Jacobian."""

    model_config = ConfigDict(frozen=True)

    t1: CurveLoc
    t2: CurveLoc
    s1: float
    s2: float
    value: Tuple[float, float, float, float]
    jacobian: List[List[float]]


class NondegeneratePair(BaseModel):
    """Parameters whose chord is transverse to both endpoint tangents."""

    model_config = ConfigDict(frozen=True)

    t1: CurveLoc
    t2: CurveLoc
    varphi1: float
    varphi2: float
    samples: int = 0


class SearchResult(BaseModel):
    """Every intermediate of a successful constructive search."""

    model_config = ConfigDict(frozen=True)

    nondegenerate: NondegeneratePair
    base_det: float
    p_prime: AnchorPair
    inverted: PhiPoint
    line: LineParam
    p_tilde: AnchorPair
    conjugator: AffineMap2
    perturbed_report: CompositionReport
    certificate: CompositionReport
    attempts: int
    rejections: Dict[str, int]
    star_satisfied: bool


class CandidateRejected(Exception):
    """One perturbation attempt failed; `reason` names why."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


# Chord map


def _check_arc(curve: Curve, arc: Arc) -> CurveComponent:
    piece = curve.component(arc.component)
    lo, hi = piece.bounds
    if piece.periodic:
        if arc.length > piece.period:
            raise DomainError(arc.component, arc.hi, lo, hi,
                              message=f"Arc [{arc.lo}, {arc.hi}] is longer than the period")
    elif arc.lo < lo or arc.hi > hi:
        raise DomainError(arc.component, arc.lo if arc.lo < lo else arc.hi, lo, hi)
    return piece


def _phi(piece1: CurveComponent, piece2: CurveComponent,
         t1, t2, s1, s2) -> np.ndarray:
    a = piece1.evaluate(t1)
    chord = piece2.evaluate(t2) - a
    return np.concatenate([
        a + np.asarray(s1)[..., None] * chord,
        a + np.asarray(s2)[..., None] * chord,
    ], axis=-1)


def _phi_jacobian(piece1: CurveComponent, piece2: CurveComponent,
                  t1: float, t2: float, s1: float, s2: float) -> np.ndarray:
    v1 = piece1.evaluate(t1, 1)
    v2 = piece2.evaluate(t2, 1)
    chord = piece2.evaluate(t2) - piece1.evaluate(t1)
    zero = np.zeros(2)
    return np.column_stack([
        np.concatenate([(1.0 - s1) * v1, (1.0 - s2) * v1]),
        np.concatenate([s1 * v2, s2 * v2]),
        np.concatenate([chord, zero]),
        np.concatenate([zero, chord]),
    ])


def _varphi(piece1: CurveComponent, piece2: CurveComponent,
            t1, t2) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """phi1, phi2 and the normalizers |gamma'(t_k)| * |c| (vectorized)."""
    v1 = piece1.evaluate(t1, 1)
    v2 = piece2.evaluate(t2, 1)
    chord = piece2.evaluate(t2) - piece1.evaluate(t1)
    phi1 = v1[..., 0] * chord[..., 1] - v1[..., 1] * chord[..., 0]
    phi2 = v2[..., 0] * chord[..., 1] - v2[..., 1] * chord[..., 0]
    length = np.linalg.norm(chord, axis=-1)
    return phi1, phi2, np.linalg.norm(v1, axis=-1) * length, np.linalg.norm(v2, axis=-1) * length


def phi_eval(curve: Curve, t1: CurveLoc, t2: CurveLoc, s1: float, s2: float) -> np.ndarray:
    """Phi(t1, t2, s1, s2) as a 4-vector."""
    a, b = curve.check_loc(t1), curve.check_loc(t2)
    return _phi(curve.components[t1.component], curve.components[t2.component], a, b, s1, s2)


def phi_jacobian(curve: Curve, t1: CurveLoc, t2: CurveLoc, s1: float, s2: float) -> np.ndarray:
    """4x4 Jacobian with columns d/dt1, d/dt2, d/ds1, d/ds2."""
    a, b = curve.check_loc(t1), curve.check_loc(t2)
    return _phi_jacobian(curve.components[t1.component], curve.components[t2.component],
                         a, b, s1, s2)


def phi_point(curve: Curve, t1: CurveLoc, t2: CurveLoc, s1: float, s2: float) -> PhiPoint:
    value = phi_eval(curve, t1, t2, s1, s2)
    jac = phi_jacobian(curve, t1, t2, s1, s2)
    return PhiPoint(
        t1=t1, t2=t2, s1=s1, s2=s2,
        value=tuple(float(v) for v in value),
        jacobian=jac.tolist(),
    )


def varphi_dets(curve: Curve, t1: CurveLoc, t2: CurveLoc) -> Tuple[float, float]:
    """(phi1, phi2) = (det[gamma'(t1) | c], det[gamma'(t2) | c])."""
    a, b = curve.check_loc(t1), curve.check_loc(t2)
    phi1, phi2, _, _ = _varphi(curve.components[t1.component], curve.components[t2.component], a, b)
    return float(phi1), float(phi2)


# Stage 1: nondegenerate pair


def _sample(rng: np.random.Generator, arc: Tuple[float, float], n: int) -> np.ndarray:
    return rng.uniform(arc[0], arc[1], size=n)


def find_nondegenerate_pair(curve: Curve, U1: Arc, U2: Arc, budget: int = DEFAULT_BUDGET,
                            rng: Optional[np.random.Generator] = None,
                            tolerances: Optional[Tolerances] = None) -> NondegeneratePair:
    """
    Find (t1, t2) in U1 x U2 with phi1 and phi2 both away from zero.

    Stage 1 samples until |phi1| clears the threshold, then shrinks a box
    around the witness until |phi1| stays above half the threshold at its
    corners and centre. Stage 2 samples that box for |phi2|. Thresholds are
    relative: |phi_k| > theta * |gamma'(t_k)| * |c|.

    Raises:
        SearchError: Naming the stage whose sampling budget ran out
    """
    tols = tolerances or Tolerances()
    rng = rng if rng is not None else np.random.default_rng(0)
    piece1, piece2 = _check_arc(curve, U1), _check_arc(curve, U2)
    theta = tols.nondegeneracy_theta

    t1s = _sample(rng, (U1.lo, U1.hi), budget)
    t2s = _sample(rng, (U2.lo, U2.hi), budget)
    phi1, _, norm1, _ = _varphi(piece1, piece2, t1s, t2s)
    ok = (np.abs(phi1) > theta * norm1) & (norm1 > tols.diagonal_tol)
    hits = np.flatnonzero(ok)
    if not hits.size:
        raise SearchError(
            STAGE_NONDEGENERATE_1,
            f"No sample in {budget} has |phi1| above the threshold",
            attempts=budget,
            diagnostic="the arcs may violate condition (*)",
        )
    k = int(hits[0])
    a, b = float(t1s[k]), float(t2s[k])
    logger.debug("Stage 1 witness after %d samples: t1=%.6g t2=%.6g phi1=%.3e",
                 k + 1, a, b, phi1[k])

    half = 0.25 * min(U1.length, U2.length)
    box = None
    for _ in range(MAX_SHRINK_STEPS):
        lo1, hi1 = max(U1.lo, a - half), min(U1.hi, a + half)
        lo2, hi2 = max(U2.lo, b - half), min(U2.hi, b + half)
        c1 = np.array([lo1, lo1, hi1, hi1, a])
        c2 = np.array([lo2, hi2, lo2, hi2, b])
        p1, _, n1, _ = _varphi(piece1, piece2, c1, c2)
        if np.all(np.abs(p1) > 0.5 * theta * n1):
            box = (lo1, hi1, lo2, hi2)
            break
        half *= 0.5
    if box is None:
        raise SearchError(
            STAGE_NONDEGENERATE_2,
            "Could not isolate a box where |phi1| stays above half the threshold",
            attempts=k + 1,
        )

    s1 = _sample(rng, (box[0], box[1]), budget)
    s2 = _sample(rng, (box[2], box[3]), budget)
    phi1, phi2, n1, n2 = _varphi(piece1, piece2, s1, s2)
    ok = (np.abs(phi2) > theta * n2) & (np.abs(phi1) > 0.5 * theta * n1) & (n1 > tols.diagonal_tol)
    hits = np.flatnonzero(ok)
    if not hits.size:
        raise SearchError(
            STAGE_NONDEGENERATE_2,
            f"No sample in {budget} has |phi2| above the threshold",
            attempts=k + 1 + budget,
            diagnostic=f"sub-box t1 in [{box[0]:.6g}, {box[1]:.6g}], t2 in [{box[2]:.6g}, {box[3]:.6g}]",
        )
    j = int(hits[0])
    pair = NondegeneratePair(
        t1=CurveLoc(component=U1.component, t=float(s1[j])),
        t2=CurveLoc(component=U2.component, t=float(s2[j])),
        varphi1=float(phi1[j]),
        varphi2=float(phi2[j]),
        samples=k + 1 + j + 1,
    )
    logger.info("Nondegenerate pair t1=%.6g t2=%.6g (phi1=%.3e, phi2=%.3e)",
                pair.t1.t, pair.t2.t, pair.varphi1, pair.varphi2)
    return pair


# Stage 2: base state


def confirm_base_state(curve: Curve, pair: NondegeneratePair,
                       tolerances: Optional[Tolerances] = None) -> float:
    """
    |det J Phi| at (t1, t2, 0, 1).

    Raises:
        SearchError: If the determinant is below det_theta
    """
    tols = tolerances or Tolerances()
    det = float(np.linalg.det(phi_jacobian(curve, pair.t1, pair.t2, 0.0, 1.0)))
    if abs(det) <= tols.det_theta:
        raise SearchError(
            STAGE_BASE_STATE,
            f"|det J Phi| = {abs(det):.3e} does not exceed {tols.det_theta:.1e}",
        )
    return det


# Stage 3: perturbation and certification


def invert_phi(curve: Curve, target: np.ndarray, seed_state: Tuple[float, float, float, float],
               U1: Arc, U2: Arc, tolerances: Optional[Tolerances] = None) -> Optional[np.ndarray]:
    """
    Newton inversion of Phi from a seed; None when it diverges or leaves the box.

    The box is U1 x U2 x S1_RANGE x S2_RANGE.
    """
    tols = tolerances or Tolerances()
    piece1, piece2 = curve.components[U1.component], curve.components[U2.component]
    x = np.array(seed_state, dtype=float)
    for _ in range(tols.newton_max_iter):
        residual = _phi(piece1, piece2, x[0], x[1], x[2], x[3]) - target
        if np.linalg.norm(residual) < tols.inversion_tol:
            return x
        jac = _phi_jacobian(piece1, piece2, x[0], x[1], x[2], x[3])
        try:
            x = x - np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError:
            return None
        inside = (
            U1.contains(x[0]) and U2.contains(x[1])
            and S1_RANGE[0] < x[2] < S1_RANGE[1]
            and S2_RANGE[0] < x[3] < S2_RANGE[1]
        )
        if not inside:
            return None
    residual = _phi(piece1, piece2, x[0], x[1], x[2], x[3]) - target
    return x if np.linalg.norm(residual) < tols.inversion_tol else None


def _ball_sample(rng: np.random.Generator, radius: float, dim: int = 4) -> np.ndarray:
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return radius * rng.uniform() ** (1.0 / dim) * direction


def _pair_of(points: np.ndarray) -> AnchorPair:
    return AnchorPair.of(points[:2], points[2:])


def attempt_candidate(curve: Curve, pair: NondegeneratePair, U1: Arc, U2: Arc,
                      seed: int, attempt: int,
                      tolerances: Optional[Tolerances] = None) -> SearchResult:
    """
    One perturbation attempt; deterministic in (seed, attempt).

    Raises:
        CandidateRejected: With reason "diagonal", "inversion", "sigma" or "certificate"
    """
    tols = tolerances or Tolerances()
    rng = np.random.default_rng([seed, attempt])
    base = (pair.t1.t, pair.t2.t, 0.0, 1.0)
    piece1, piece2 = curve.components[U1.component], curve.components[U2.component]
    centre = _phi(piece1, piece2, *base)
    chord = float(np.linalg.norm(centre[2:] - centre[:2]))

    target = centre + _ball_sample(rng, tols.perturbation_fraction * chord)
    p_prime = _pair_of(target)
    if p_prime.is_degenerate(tols.diagonal_tol):
        raise CandidateRejected("diagonal", f"|p1' - p2'| = {p_prime.gap:.3e}")

    state = invert_phi(curve, target, base, U1, U2, tols)
    if state is None:
        raise CandidateRejected("inversion", "Newton did not converge inside the box")

    perturbed = analyze(Composition(curve, p_prime), tols)
    if not perturbed.passes:
        raise CandidateRejected("sigma", ", ".join(perturbed.reasons))

    t1 = CurveLoc(component=U1.component, t=float(piece1.normalize(state[0])))
    t2 = CurveLoc(component=U2.component, t=float(piece2.normalize(state[1])))
    g1, g2 = piece1.evaluate(t1.t), piece2.evaluate(t2.t)
    p_tilde = AnchorPair.of(g1, g2)
    conjugator = build_conjugator(p_prime, p_tilde, tols)

    certificate = analyze(Composition(curve, p_tilde), tols)
    if not certificate.passes:
        raise CandidateRejected("certificate", ", ".join(certificate.reasons))

    return SearchResult(
        nondegenerate=pair,
        base_det=0.0,
        p_prime=p_prime,
        inverted=phi_point(curve, t1, t2, float(state[2]), float(state[3])),
        line=LineParam.of(p_prime),
        p_tilde=p_tilde,
        conjugator=conjugator,
        perturbed_report=perturbed,
        certificate=certificate,
        attempts=attempt,
        rejections={},
        star_satisfied=True,
    )


def perturb_until_generic(curve: Curve, pair: NondegeneratePair, U1: Arc, U2: Arc,
                          seed: int, attempts: int = DEFAULT_ATTEMPTS,
                          tolerances: Optional[Tolerances] = None) -> SearchResult:
    """
    Retry perturbation attempts until one certifies, up to `attempts`.

    Raises:
        SearchError: "inversion" when no attempt inverted, otherwise "sigma_saturation"
    """
    rejections: Counter = Counter()
    retrying = Retrying(
        stop=stop_after_attempt(attempts),
        retry=retry_if_exception_type(CandidateRejected),
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                number = attempt.retry_state.attempt_number
                try:
                    result = attempt_candidate(curve, pair, U1, U2, seed, number, tolerances)
                except CandidateRejected as e:
                    rejections[e.reason] += 1
                    logger.debug("Attempt %d rejected: %s", number, e)
                    raise
    except CandidateRejected:
        counts = ", ".join(f"{k}={v}" for k, v in sorted(rejections.items()))
        stage = STAGE_INVERSION if rejections["inversion"] == attempts else STAGE_SIGMA
        raise SearchError(
            stage,
            f"No certified anchor pair after {attempts} attempts",
            attempts=attempts,
            diagnostic=f"rejections: {counts}; exhaustion is inconclusive about density",
        )
    return result.model_copy(update={"rejections": dict(rejections)})


def check_star_on_arcs(curve: Curve, arcs: List[Arc],
                       tolerances: Optional[Tolerances] = None) -> StarVerdict:
    tols = tolerances or Tolerances()
    verdict = satisfies_star(
        curve,
        delta=tols.star_window_fraction * min(a.length for a in arcs),
        kappa_min=tols.kappa_min,
        samples_per_window=tols.star_samples,
        arcs=arcs,
    )
    if not verdict.satisfied:
        logger.warning("Arcs violate condition (*) on %d windows; the search may starve",
                       len(verdict.failing))
    return verdict


def find_generic_anchors(curve: Curve, O1: Arc, O2: Arc, rng_seed: int = 0,
                         budget: int = DEFAULT_ATTEMPTS,
                         tolerances: Optional[Tolerances] = None,
                         sample_budget: int = DEFAULT_BUDGET) -> SearchResult:
    """
    Curve-anchored pair on O1 x O2 whose composition passes, with its certificate.

    Raises:
        SearchError: Naming the failing stage
        ValueError: If budget is not positive
    """
    if budget <= 0:
        raise ValueError(f"Search budget must be positive, got {budget}")
    from .graph import run_search_pipeline

    return run_search_pipeline(curve, O1, O2, rng_seed, budget,
                               tolerances or Tolerances(), sample_budget)

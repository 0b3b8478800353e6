"""
diffgeo.py - Curvature of immersed plane curves and the flat-arc condition (*).

The condition (*) asks that every non-empty open subarc contains a point of
non-zero curvature. `satisfies_star` checks a finite family of overlapping
windows, so a "not satisfied" verdict on an analytic curve whose curvature
vanishes on a whole window is exact, while "satisfied" is evidence only.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .curve_model import IMMERSION_THRESHOLD, Arc, Curve, CurveComponent, CurveLoc
from .errors import ImmersionError

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_FRACTION = 1e-2
DEFAULT_KAPPA_MIN = 1e-6
DEFAULT_SAMPLES_PER_WINDOW = 64


class StarWindow(BaseModel):
    """One checked window and its curvature witness, if any."""

    model_config = ConfigDict(frozen=True)

    component: int
    lo: float
    hi: float
    witness: Optional[CurveLoc] = None
    kappa: Optional[float] = None


class StarVerdict(BaseModel):
    """Finite-resolution verdict for condition (*)."""

    model_config = ConfigDict(frozen=True)

    satisfied: bool
    # the common window length; None only when regions used different lengths
    window: Optional[float] = None
    region_windows: List[float] = []
    window_fraction: Optional[float] = None
    samples_per_window: int = DEFAULT_SAMPLES_PER_WINDOW
    threshold: float
    witnesses: List[StarWindow]
    failing: List[StarWindow]


def curvature_values(comp: CurveComponent, ts: np.ndarray) -> np.ndarray:
    """Vectorized kappa = det[[y', -x'], [y'', -x'']] / |gamma'|^3."""
    d1 = comp.evaluate(ts, 1)
    d2 = comp.evaluate(ts, 2)
    det = d1[..., 1] * (-d2[..., 0]) + d1[..., 0] * d2[..., 1]
    speed_sq = np.sum(d1 * d1, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return det / speed_sq**1.5


def curvature(curve: Curve, loc: CurveLoc) -> float:
    """
    Signed curvature at a location.

    Raises:
        ImmersionError: If gamma' vanishes at loc
        DomainError: If loc is out of range
    """
    t = curve.check_loc(loc)
    comp = curve.components[loc.component]
    speed = float(np.hypot(*comp.evaluate(t, 1)))
    if speed < IMMERSION_THRESHOLD:
        raise ImmersionError(loc.component, t, speed)
    return float(curvature_values(comp, np.asarray(t)))


def _window_starts(lo: float, hi: float, delta: float) -> np.ndarray:
    starts = np.arange(lo, hi - delta, delta / 2)
    if starts.size == 0 or starts[-1] + delta < hi:
        starts = np.append(starts, hi - delta)
    return starts


def satisfies_star(curve: Curve, delta: Optional[float] = None,
                   kappa_min: float = DEFAULT_KAPPA_MIN,
                   samples_per_window: int = DEFAULT_SAMPLES_PER_WINDOW,
                   arcs: Optional[Sequence[Arc]] = None,
                   window_fraction: float = DEFAULT_WINDOW_FRACTION) -> StarVerdict:
    """
    Check condition (*) on overlapping windows of length delta.

    Args:
        curve: The curve to check
        delta: Window length; defaults to window_fraction of each checked region's length
        kappa_min: A window is witnessed by a sample with |kappa| > kappa_min
        samples_per_window: Samples per window
        arcs: Restrict the check to these arcs (default: every component)
        window_fraction: Window length as a fraction of the region when delta is None

    Raises:
        ValueError: If delta is not smaller than a checked region, or kappa_min <= 0
    """
    if kappa_min <= 0:
        raise ValueError(f"kappa_min must be positive, got {kappa_min}")

    if arcs is None:
        regions = [(i, *c.bounds) for i, c in enumerate(curve.components)]
    else:
        regions = [(a.component, a.lo, a.hi) for a in arcs]

    witnesses: List[StarWindow] = []
    failing: List[StarWindow] = []
    used: List[float] = []

    for index, lo, hi in regions:
        comp = curve.component(index)
        length = hi - lo
        window = delta if delta is not None else window_fraction * length
        if not 0 < window < length:
            raise ValueError(
                f"Window length {window} must be positive and smaller than "
                f"component {index} region length {length}"
            )
        used.append(float(window))

        starts = _window_starts(lo, hi, window)
        offsets = np.linspace(0.0, window, samples_per_window)
        ts = starts[:, None] + offsets[None, :]
        kappa = np.abs(curvature_values(comp, ts))
        hits = np.nan_to_num(kappa, nan=0.0) > kappa_min

        for row, start in enumerate(starts):
            found = np.flatnonzero(hits[row])
            if found.size:
                k = int(found[0])
                witnesses.append(StarWindow(
                    component=index, lo=float(start), hi=float(start + window),
                    witness=CurveLoc(component=index, t=float(ts[row, k])),
                    kappa=float(kappa[row, k]),
                ))
            else:
                failing.append(StarWindow(component=index, lo=float(start), hi=float(start + window)))

    verdict = StarVerdict(
        satisfied=not failing,
        window=delta if delta is not None else (used[0] if len(set(used)) == 1 else None),
        region_windows=used,
        window_fraction=None if delta is not None else window_fraction,
        samples_per_window=samples_per_window,
        threshold=kappa_min,
        witnesses=witnesses,
        failing=failing,
    )
    logger.info("Condition (*) %s: %d windows witnessed, %d failing",
                "satisfied" if verdict.satisfied else "violated",
                len(witnesses), len(failing))
    return verdict

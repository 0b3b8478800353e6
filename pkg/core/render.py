"""
render.py - Static SVG renders of RunReports.

The source panel shows the curve with anchors and singular points; analyze
reports add the image curve D_p o gamma with its double points, density
reports add the verdict heat map, ambient reports mark the failing pairs.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import matplotlib
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.axes import Axes

from .curve_model import Curve, build_curve
from .dsq_core import AnchorPair, Composition, SingularPoint
from .reports import RunReport

matplotlib.use("Agg")

logger = logging.getLogger(__name__)

CURVE_SAMPLES = 400
SVG_SALT = "dsq-report"


def _sample(curve: Curve, index: int, n: int = CURVE_SAMPLES) -> np.ndarray:
    lo, hi = curve.components[index].bounds
    return np.linspace(lo, hi, n)


def _draw_curve(ax: Axes, curve: Curve) -> None:
    for index, piece in enumerate(curve.components):
        pts = piece.evaluate(_sample(curve, index))
        ax.plot(pts[:, 0], pts[:, 1], color="tab:blue", linewidth=1.2)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title("curve")


def _draw_anchors(ax: Axes, pair: AnchorPair, color: str = "tab:red", label: str = "anchors") -> None:
    ax.plot([pair.p1.x, pair.p2.x], [pair.p1.y, pair.p2.y], "o", color=color, label=label)


def _draw_singular(ax: Axes, curve: Curve, points: List[SingularPoint]) -> None:
    if not points:
        return
    pts = np.array([curve.components[s.loc.component].evaluate(s.loc.t) for s in points])
    ax.plot(pts[:, 0], pts[:, 1], "x", color="black", markersize=8, label="singular")


def _draw_image(ax: Axes, curve: Curve, pair: AnchorPair,
                images: List[Tuple[float, float]]) -> None:
    comp = Composition(curve, pair)
    for index in range(len(curve.components)):
        vals = comp.values(index, _sample(curve, index))
        ax.plot(vals[:, 0], vals[:, 1], color="tab:green", linewidth=1.0)
    if images:
        arr = np.array(images)
        ax.plot(arr[:, 0], arr[:, 1], "s", color="tab:orange", markersize=5, label="double points")
    ax.set_title("image of D_p o gamma")


def _draw_density(ax: Axes, verdicts: List[List[bool]]) -> None:
    ax.imshow(np.array(verdicts, dtype=float), origin="lower", cmap="RdYlGn", vmin=0.0, vmax=1.0,
              interpolation="nearest")
    ax.set_xlabel("arc2 node")
    ax.set_ylabel("arc1 node")
    ax.set_title("analyze verdicts")


def _report_curve(report: RunReport) -> Optional[Curve]:
    if report.curve is None:
        return None
    return build_curve(report.curve)


def render_svg(report: RunReport, path: Union[str, Path]) -> Path:
    """
    Write an SVG render of a curve-bearing report.

    Raises:
        ValueError: If the report carries no curve
        OSError: If the path cannot be written
    """
    curve = _report_curve(report)
    if curve is None:
        raise ValueError(f"Report of kind '{report.kind}' carries no curve to render")

    second = report.composition is not None or report.density is not None
    fig, axes = plt.subplots(1, 2 if second else 1, figsize=(10 if second else 5, 5), squeeze=False)
    source = axes[0, 0]
    _draw_curve(source, curve)

    if report.composition is not None:
        c = report.composition
        _draw_anchors(source, c.pair)
        _draw_singular(source, curve, c.singular_points)
        images = [dp.image for dp in c.double_points]
        images += [dp.image for f in c.families for dp in f.representatives]
        _draw_image(axes[0, 1], curve, c.pair, images)
    elif report.search is not None:
        s = report.search
        _draw_anchors(source, s.p_prime, color="tab:gray", label="p'")
        _draw_anchors(source, s.p_tilde, label="p~")
        _draw_singular(source, curve, s.certificate.singular_points)
    elif report.density is not None:
        d = report.density
        for arc in (d.arc1, d.arc2):
            piece = curve.components[arc.component]
            pts = piece.evaluate(np.linspace(arc.lo, arc.hi, CURVE_SAMPLES // 4))
            source.plot(pts[:, 0], pts[:, 1], color="tab:purple", linewidth=3.0)
        _draw_density(axes[0, 1], d.verdicts)
    elif report.ambient is not None:
        for k, failure in enumerate(report.ambient.failures):
            _draw_anchors(source, failure.pair, label="failing pairs" if k == 0 else "_nolegend_")
        xmin, xmax, ymin, ymax = report.ambient.box
        source.plot([xmin, xmax, xmax, xmin, xmin], [ymin, ymin, ymax, ymax, ymin],
                    color="tab:gray", linestyle="--", linewidth=0.8)
    elif report.case is not None and report.case.evidence:
        first = report.case.evidence[0]
        _draw_anchors(source, first.pair)
        _draw_singular(source, curve, first.singular_points)
    elif report.star is not None:
        for window in report.star.failing:
            piece = curve.components[window.component]
            pts = piece.evaluate(np.linspace(window.lo, window.hi, 16))
            source.plot(pts[:, 0], pts[:, 1], color="tab:red", linewidth=3.0)

    if source.get_legend_handles_labels()[0]:
        source.legend(loc="best", fontsize="small")
    fig.tight_layout()

    out = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("SVG written to %s", out)
    return out

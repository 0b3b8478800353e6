"""
reports.py - The RunReport document written by every CLI subcommand.

One JSON document per run, schema "dsq-report/1". Exactly one payload field
is set, matching `kind`.
"""

import logging
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Union, get_args

from pydantic import BaseModel, ConfigDict, model_validator

from . import __version__
from .affine_normalizer import AffineMap2
from .crossing_analysis import CompositionReport
from .curve_model import Curve, CurveDocument
from .density_lab import AmbientDensityResult, CaseStudyResult, DensityGrid
from .diffgeo import StarVerdict
from .dsq_core import AnchorPair
from .errors import SearchError
from .generic_search import SearchResult
from .settings import Tolerances

logger = logging.getLogger(__name__)

SCHEMA = "dsq-report/1"

ReportKind = Literal["composition", "search", "search_failure", "density", "ambient", "case", "star", "affine"]


class SearchFailureRecord(BaseModel):
    """A failed constructive search, by stage."""

    model_config = ConfigDict(frozen=True)

    stage: str
    message: str
    attempts: int
    diagnostic: Optional[str] = None

    @classmethod
    def from_error(cls, error: SearchError) -> "SearchFailureRecord":
        return cls(stage=error.stage, message=error.message,
                   attempts=error.attempts, diagnostic=error.diagnostic)


class AffineCheckResult(BaseModel):
    """Conjugator for two collinear anchor pairs with both verifications."""

    model_config = ConfigDict(frozen=True)

    p: AnchorPair
    p_tilde: AnchorPair
    conjugator: AffineMap2
    residual: float
    oracle: AffineMap2
    oracle_gap: float
    passes: bool


class RunReport(BaseModel):
    """Top-level report document."""

    model_config = ConfigDict(frozen=True)

    schema_version: str = SCHEMA
    tool_version: str = __version__
    command: List[str]
    curve_digest: Optional[str] = None
    curve: Optional[CurveDocument] = None
    tolerances: Tolerances
    kind: ReportKind
    composition: Optional[CompositionReport] = None
    search: Optional[SearchResult] = None
    search_failure: Optional[SearchFailureRecord] = None
    density: Optional[DensityGrid] = None
    ambient: Optional[AmbientDensityResult] = None
    case: Optional[CaseStudyResult] = None
    star: Optional[StarVerdict] = None
    affine: Optional[AffineCheckResult] = None
    wall_time: Optional[float] = None

    @model_validator(mode="after")
    def _one_payload(self) -> "RunReport":
        present = [name for name in get_args(ReportKind) if getattr(self, name) is not None]
        if present != [self.kind]:
            raise ValueError(f"Report of kind '{self.kind}' must carry exactly that payload, found {present}")
        return self

    @property
    def payload(self) -> BaseModel:
        return getattr(self, self.kind)

    @property
    def passed(self) -> bool:
        """The analytical verdict that decides the exit code."""
        if self.composition is not None:
            return self.composition.passes
        if self.search is not None:
            return self.search.certificate.passes
        if self.density is not None:
            return self.density.pass_fraction > 0
        if self.ambient is not None:
            return self.ambient.pass_fraction > 0
        if self.case is not None:
            return self.case.matches
        if self.star is not None:
            return self.star.satisfied
        if self.affine is not None:
            return self.affine.passes
        return False


Payload = Union[CompositionReport, SearchResult, SearchFailureRecord, DensityGrid,
                AmbientDensityResult, CaseStudyResult, StarVerdict, AffineCheckResult]

_KIND_OF = {
    CompositionReport: "composition",
    SearchResult: "search",
    SearchFailureRecord: "search_failure",
    DensityGrid: "density",
    AmbientDensityResult: "ambient",
    CaseStudyResult: "case",
    StarVerdict: "star",
    AffineCheckResult: "affine",
}


def build_report(command: Sequence[str], payload: Payload, tolerances: Tolerances,
                 curve: Optional[Curve] = None, wall_time: Optional[float] = None) -> RunReport:
    kind = _KIND_OF[type(payload)]
    return RunReport(
        command=list(command),
        curve_digest=curve.digest() if curve is not None else None,
        curve=curve.to_document() if curve is not None else None,
        tolerances=tolerances,
        kind=kind,
        wall_time=wall_time,
        **{kind: payload},
    )


def dump_report(report: RunReport) -> str:
    return report.model_dump_json(indent=2)


def load_report(text: Union[str, bytes]) -> RunReport:
    return RunReport.model_validate_json(text)


def read_report(path: Union[str, Path]) -> RunReport:
    return load_report(Path(path).read_text(encoding="utf-8"))


def write_report(report: RunReport, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.write_text(dump_report(report) + "\n", encoding="utf-8")
    logger.debug("Report written to %s", out)
    return out


def summary_lines(report: RunReport) -> List[str]:
    """Short human-readable summary of a report."""
    lines = ["=" * 60, f"DSQ REPORT ({report.kind})", "=" * 60]
    if report.curve is not None:
        lines.append(f"  Curve:        {report.curve.name or 'custom'} ({report.curve_digest[:12] if report.curve_digest else '-'})")

    if report.composition is not None:
        c = report.composition
        lines.append(f"  Verdict:      {'PASS' if c.passes else 'FAIL'}")
        lines.append(f"  Singular:     {len(c.singular_points)}")
        lines.append(f"  Double pts:   {len(c.double_points)} (families: {len(c.families)}, unresolved: {len(c.unresolved)})")
        lines.append(f"  Multiplicity: {c.max_multiplicity}")
        if c.reasons:
            lines.append(f"  Reasons:      {', '.join(c.reasons)}")
    elif report.search is not None:
        s = report.search
        lines.append(f"  Verdict:      {'PASS' if s.certificate.passes else 'FAIL'} after {s.attempts} attempt(s)")
        lines.append(f"  p~1:          ({s.p_tilde.p1.x:.9g}, {s.p_tilde.p1.y:.9g})")
        lines.append(f"  p~2:          ({s.p_tilde.p2.x:.9g}, {s.p_tilde.p2.y:.9g})")
    elif report.search_failure is not None:
        f = report.search_failure
        lines.append(f"  Verdict:      FAIL at stage {f.stage}")
        lines.append(f"  Message:      {f.message}")
        if f.diagnostic:
            lines.append(f"  Diagnostic:   {f.diagnostic}")
    elif report.density is not None:
        d = report.density
        lines.append(f"  Grid:         {d.resolution} x {d.resolution}")
        lines.append(f"  Pass frac.:   {d.pass_fraction:.4f}")
    elif report.ambient is not None:
        m = report.ambient
        lines.append(f"  Box:          [{m.box[0]:g}, {m.box[1]:g}] x [{m.box[2]:g}, {m.box[3]:g}]")
        lines.append(f"  Pass frac.:   {m.pass_fraction:.4f} ({m.passed} of {m.samples})")
    elif report.case is not None:
        k = report.case
        lines.append(f"  Case:         {k.case_id} on {k.curve}")
        lines.append(f"  Expected:     {k.expected}")
        lines.append(f"  Observed:     {k.observed}")
        lines.append(f"  Verdict:      {'MATCH' if k.matches else 'MISMATCH'}")
    elif report.star is not None:
        v = report.star
        lines.append(f"  Condition (*): {'satisfied' if v.satisfied else 'violated'}")
        lines.append(f"  Windows:      {len(v.witnesses)} witnessed, {len(v.failing)} failing")
    elif report.affine is not None:
        a = report.affine
        lines.append(f"  Residual:     {a.residual:.3e}")
        lines.append(f"  Oracle gap:   {a.oracle_gap:.3e}")
        lines.append(f"  Verdict:      {'PASS' if a.passes else 'FAIL'}")

    if report.wall_time is not None:
        lines.append(f"  Wall time:    {report.wall_time:.2f} s")
    lines.append("=" * 60)
    return lines

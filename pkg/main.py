#!/usr/bin/env python3
"""
main.py - Distance-squared mapping toolkit CLI
Usage: python main.py analyze --builtin circle --p1 0.5,0 --p2 0,0.5
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

from pydantic import ValidationError

from core.affine_normalizer import build_conjugator, verify_conjugation, verify_pointwise_oracle
from core.crossing_analysis import analyze
from core.curve_model import CATALOG, Arc, Curve, builtin_curve, load_curve_file
from core.density_lab import (
    ambient_density_scan,
    density_scan,
    example2_case,
    remark_line_case,
    stadium_case,
    write_density_csv,
)
from core.diffgeo import satisfies_star
from core.dsq_core import AnchorPair, Composition
from core.errors import DsqError, SearchError
from core.generic_search import DEFAULT_ATTEMPTS, DEFAULT_BUDGET, find_generic_anchors
from core.render import render_svg
from core.reports import (
    AffineCheckResult,
    Payload,
    RunReport,
    SearchFailureRecord,
    build_report,
    dump_report,
    read_report,
    summary_lines,
    write_report,
)
from core.settings import Tolerances, output_path

logger = logging.getLogger("dsq")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

AFFINE_TOLERANCE = 1e-8
CASES = ("remark_line", "example2", "stadium")
CASE_CURVES = {"remark_line": ("line", ()), "example2": ("example2_segments", ()), "stadium": ("flat_ring", ())}


class UsageError(Exception):
    """Raised for argument combinations argparse cannot check."""
    pass


def parse_point(text: str) -> Tuple[float, float]:
    """Parse 'x,y'."""
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected a point 'x,y', got '{text}'")
    return x, y


def parse_arc(text: str) -> Arc:
    """Parse 'lo,hi[:component]'."""
    body, _, component = text.partition(":")
    try:
        lo, hi = (float(v) for v in body.split(","))
        index = int(component) if component else 0
        return Arc(component=index, lo=lo, hi=hi)
    except (ValueError, ValidationError):
        raise argparse.ArgumentTypeError(f"Expected an arc 'lo,hi[:component]' with lo < hi, got '{text}'")


def parse_box(text: str) -> Tuple[float, float, float, float]:
    """Parse 'xmin,xmax,ymin,ymax'."""
    try:
        xmin, xmax, ymin, ymax = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected a box 'xmin,xmax,ymin,ymax', got '{text}'")
    return xmin, xmax, ymin, ymax


def parse_params(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got '{text}'")


def _common_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--out", "-o", type=str, help="Write the JSON report here instead of stdout")
    parent.add_argument("--svg", type=str, help="Also render the report as SVG")
    parent.add_argument("--timing", action="store_true", help="Record wall time in the report")
    parent.add_argument("--verbose", "-v", action="store_true", help="Debug logging on stderr")

    tol_group = parent.add_argument_group("tolerance overrides")
    for name, field in Tolerances.model_fields.items():
        tol_group.add_argument(
            f"--tol-{name.replace('_', '-')}",
            dest=f"tol_{name}",
            type=field.annotation,
            help=field.description,
        )
    return parent


def _curve_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    source = parent.add_mutually_exclusive_group(required=True)
    source.add_argument("--curve", type=str, help="Path to a curve JSON document")
    source.add_argument("--builtin", type=str, choices=sorted(CATALOG), help="Builtin catalog curve")
    parent.add_argument("--params", type=parse_params, default=(), help="Catalog parameters 'a,b,...'")
    return parent


def build_parser() -> argparse.ArgumentParser:
    """Parser for every subcommand."""
    common, curve = _common_parent(), _curve_parent()
    parser = argparse.ArgumentParser(
        prog="dsq",
        description="Immersion and normal-crossings analysis of distance-squared mappings on plane curves",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Verdict for one anchor pair
  python main.py analyze --builtin circle --p1 0.5,0 --p2 0,0.5

  # Constructive search on two arcs
  python main.py search --builtin circle --arc1 0.1,0.6 --arc2 2.0,2.5 --seed 42

  # Density scan with an SVG heat map
  python main.py density --builtin circle --arc1 0,1.5708 --arc2 3.19,4.76 --grid 25 --svg scan.svg

  # Pass fraction for 200 anchor pairs drawn around the curve
  python main.py ambient --builtin ellipse --samples 200 --seed 1
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common, curve], help="Analyze D_p o gamma for one anchor pair")
    p.add_argument("--p1", type=parse_point, required=True)
    p.add_argument("--p2", type=parse_point, required=True)

    p = sub.add_parser("search", parents=[common, curve], help="Constructive search for a generic curve-anchored pair")
    p.add_argument("--arc1", type=parse_arc, required=True)
    p.add_argument("--arc2", type=parse_arc, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=DEFAULT_ATTEMPTS, help="Perturbation attempts")
    p.add_argument("--samples", type=int, default=DEFAULT_BUDGET, help="Samples per nondegeneracy stage")

    p = sub.add_parser("density", parents=[common, curve], help="Verdict grid over two arcs")
    p.add_argument("--arc1", type=parse_arc, required=True)
    p.add_argument("--arc2", type=parse_arc, required=True)
    p.add_argument("--grid", type=int, default=25)
    p.add_argument("--csv", type=str, help="Also write the verdict matrix as CSV")

    p = sub.add_parser("ambient", parents=[common, curve], help="Pass fraction for anchor pairs sampled in a box")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--box", type=parse_box, help="'xmin,xmax,ymin,ymax' (default: padded curve bounds)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("star", parents=[common, curve], help="Check condition (*)")
    p.add_argument("--arc1", type=parse_arc, help="Restrict the check to this arc")
    p.add_argument("--arc2", type=parse_arc, help="And to this arc")
    p.add_argument("--delta", type=float, help="Window length")

    p = sub.add_parser("affine-check", parents=[common], help="Conjugator between collinear anchor pairs")
    p.add_argument("--p1", type=parse_point, required=True)
    p.add_argument("--p2", type=parse_point, required=True)
    p.add_argument("--q1", type=parse_point, required=True, help="First target anchor p~1")
    p.add_argument("--q2", type=parse_point, required=True, help="Second target anchor p~2")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--box", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("case", parents=[common], help="Run a case study")
    p.add_argument("name", choices=CASES)
    p.add_argument("--grid", type=int, default=20, help="Grid size for remark_line")
    p.add_argument("--samples", type=int, default=20, help="Sampled pairs for example2 and stadium")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("render", help="Render a saved report as SVG")
    p.add_argument("--report", type=str, required=True)
    p.add_argument("--svg", type=str, required=True)
    p.add_argument("--verbose", "-v", action="store_true")

    return parser


def load_tolerances(args: argparse.Namespace) -> Tolerances:
    overrides = {
        name: getattr(args, f"tol_{name}", None)
        for name in Tolerances.model_fields
    }
    return Tolerances.from_env(overrides)


def load_input_curve(args: argparse.Namespace) -> Curve:
    if args.curve:
        path = Path(args.curve)
        if not path.exists():
            raise UsageError(f"Curve file not found: {args.curve}")
        return load_curve_file(path)
    return builtin_curve(args.builtin, args.params)


# Subcommands


def cmd_analyze(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    curve = load_input_curve(args)
    pair = AnchorPair.of(args.p1, args.p2)
    return analyze(Composition(curve, pair), tols), curve


def cmd_search(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    curve = load_input_curve(args)
    if args.budget <= 0 or args.samples <= 0:
        raise UsageError("--budget and --samples must be positive")
    try:
        result = find_generic_anchors(curve, args.arc1, args.arc2, rng_seed=args.seed,
                                      budget=args.budget, tolerances=tols,
                                      sample_budget=args.samples)
    except SearchError as e:
        return SearchFailureRecord.from_error(e), curve
    return result, curve


def cmd_density(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    curve = load_input_curve(args)
    grid = density_scan(curve, args.arc1, args.arc2, args.grid, tols)
    if args.csv:
        write_density_csv(grid, output_path(args.csv))
    return grid, curve


def cmd_ambient(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    curve = load_input_curve(args)
    return ambient_density_scan(curve, args.samples, args.seed, args.box, tols), curve


def cmd_star(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    curve = load_input_curve(args)
    arcs = [a for a in (args.arc1, args.arc2) if a is not None] or None
    verdict = satisfies_star(
        curve,
        delta=args.delta,
        kappa_min=tols.kappa_min,
        samples_per_window=tols.star_samples,
        arcs=arcs,
        window_fraction=tols.star_window_fraction,
    )
    return verdict, curve


def cmd_affine_check(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    p = AnchorPair.of(args.p1, args.p2)
    p_tilde = AnchorPair.of(args.q1, args.q2)
    H = build_conjugator(p, p_tilde, tols)
    residual = verify_conjugation(H, p, p_tilde, n_samples=args.samples, box=args.box, seed=args.seed)
    oracle = verify_pointwise_oracle(p, p_tilde, seed=args.seed)
    gap = max(
        max(abs(a - b) for a, b in zip(sum(H.linear, ()), sum(oracle.linear, ()))),
        max(abs(a - b) for a, b in zip(H.offset, oracle.offset)),
    )
    scale = 1.0 + max(abs(v) for v in sum(H.linear, ()) + H.offset)
    result = AffineCheckResult(
        p=p, p_tilde=p_tilde, conjugator=H, residual=residual,
        oracle=oracle, oracle_gap=gap,
        passes=residual < AFFINE_TOLERANCE * scale and gap < AFFINE_TOLERANCE * scale,
    )
    return result, None


def cmd_case(args: argparse.Namespace, tols: Tolerances) -> Tuple[Payload, Optional[Curve]]:
    name, params = CASE_CURVES[args.name]
    if args.name == "remark_line":
        result = remark_line_case(args.grid, tols)
    elif args.name == "example2":
        result = example2_case(args.samples, seed=args.seed, tolerances=tols)
    else:
        result = stadium_case(args.samples, seed=args.seed, tolerances=tols)
    return result, builtin_curve(name, params)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Tolerances], Tuple[Payload, Optional[Curve]]]] = {
    "analyze": cmd_analyze,
    "search": cmd_search,
    "density": cmd_density,
    "ambient": cmd_ambient,
    "star": cmd_star,
    "affine-check": cmd_affine_check,
    "case": cmd_case,
}


def display_summary(report: RunReport) -> None:
    """Print a human-readable summary to stderr; stdout carries only JSON."""
    print("\n".join(summary_lines(report)), file=sys.stderr)


def emit(report: RunReport, args: argparse.Namespace) -> None:
    if args.out:
        target = write_report(report, output_path(args.out))
        print(f"Report saved to: {target}", file=sys.stderr)
    else:
        print(dump_report(report))
    if args.svg:
        target = render_svg(report, output_path(args.svg))
        print(f"SVG saved to: {target}", file=sys.stderr)


def run_render(args: argparse.Namespace) -> int:
    path = Path(args.report)
    if not path.exists():
        print(f"Error: Report file not found: {args.report}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = read_report(path)
        target = render_svg(report, output_path(args.svg))
    except (ValidationError, ValueError, OSError) as e:
        print(f"Error rendering report: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(f"SVG saved to: {target}", file=sys.stderr)
    return EXIT_OK


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point for every subcommand.

    Returns:
        0 on analytical success, 1 on a failed verdict, 2 on usage or input errors
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )

    if args.command == "render":
        return run_render(args)

    try:
        tols = load_tolerances(args)
        start = time.perf_counter()
        payload, curve = COMMANDS[args.command](args, tols)
        elapsed = time.perf_counter() - start
        report = build_report(["dsq", *argv], payload, tols, curve=curve,
                              wall_time=elapsed if args.timing else None)
    except (UsageError, DsqError, ValidationError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    display_summary(report)
    try:
        emit(report, args)
    except OSError as e:
        print(f"Error writing output: {e}", file=sys.stderr)
        return EXIT_USAGE

    return EXIT_OK if report.passed else EXIT_FAIL


def main() -> int:
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

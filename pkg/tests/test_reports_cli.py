import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest import mock

from pydantic import ValidationError

from core.crossing_analysis import analyze
from core.curve_model import builtin_curve
from core.dsq_core import AnchorPair, Composition
from core.render import render_svg
from core.reports import SCHEMA, RunReport, build_report, dump_report, load_report, read_report
from core.settings import Tolerances, load_environment, output_path
from main import EXIT_FAIL, EXIT_OK, EXIT_USAGE, run_cli

PARABOLA = ["--builtin", "parabola_arc", "--p1", "1,0", "--p2", "0,1"]


def run(argv):
    """run_cli with stdout and stderr captured."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = run_cli(argv)
    return code, out.getvalue(), err.getvalue()


class TestReports(unittest.TestCase):
    def setUp(self):
        self.curve = builtin_curve("parabola_arc")
        self.composition = analyze(Composition(self.curve, AnchorPair.of((1.0, 0.0), (0.0, 1.0))))

    def test_round_trip(self):
        report = build_report(["dsq", "analyze"], self.composition, Tolerances(), curve=self.curve)
        self.assertEqual(report.kind, "composition")
        self.assertEqual(report.schema_version, SCHEMA)
        self.assertEqual(report.curve_digest, self.curve.digest())
        self.assertTrue(report.passed)

        again = load_report(dump_report(report))
        self.assertEqual(again, report)
        self.assertEqual(dump_report(again), dump_report(report))

    def test_payload_must_match_kind(self):
        with self.assertRaises(ValidationError):
            RunReport(command=["dsq"], tolerances=Tolerances(), kind="density",
                      composition=self.composition)
        with self.assertRaises(ValidationError):
            RunReport(command=["dsq"], tolerances=Tolerances(), kind="composition")

    def test_no_timestamps(self):
        report = build_report(["dsq", "analyze"], self.composition, Tolerances(), curve=self.curve)
        self.assertIsNone(json.loads(dump_report(report))["wall_time"])


class TestTolerances(unittest.TestCase):
    def test_environment_override(self):
        with mock.patch.dict(os.environ, {"DSQ_TOL_IMAGE_TOL": "1e-10"}):
            self.assertEqual(Tolerances.from_env().image_tol, 1e-10)
            # explicit overrides win
            self.assertEqual(Tolerances.from_env({"image_tol": 1e-8}).image_tol, 1e-8)
        self.assertEqual(Tolerances.from_env({"grid_samples": None}).grid_samples, 2048)

    def test_invalid(self):
        with mock.patch.dict(os.environ, {"DSQ_TOL_GRID_SAMPLES": "lots"}):
            with self.assertRaises(ValidationError):
                Tolerances.from_env()

    def test_env_file(self):
        load_environment.cache_clear()
        self.addCleanup(load_environment.cache_clear)
        with tempfile.TemporaryDirectory() as tmp:
            env_file = Path(tmp) / "settings.env"
            env_file.write_text("DSQ_TOL_IMAGE_TOL=1e-11\n", encoding="utf-8")
            with mock.patch.dict(os.environ, {"DSQ_ENV_FILE": str(env_file)}):
                os.environ.pop("DSQ_TOL_IMAGE_TOL", None)
                self.assertEqual(load_environment(), env_file)
                self.assertEqual(Tolerances.from_env().image_tol, 1e-11)

    def test_output_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            with mock.patch.dict(os.environ, {"DSQ_OUTPUT_DIR": tmp}):
                target = output_path(os.path.join("runs", "report.json"))
                self.assertEqual(target, Path(tmp) / "runs" / "report.json")
                self.assertTrue(target.parent.is_dir())

                absolute = Path(tmp) / "elsewhere.json"
                self.assertEqual(output_path(absolute), absolute)


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_analyze_pass(self):
        code, out, err = run(["analyze", *PARABOLA])
        self.assertEqual(code, EXIT_OK)
        report = load_report(out)
        self.assertEqual(report.kind, "composition")
        self.assertEqual(len(report.composition.double_points), 1)
        self.assertIn("PASS", err)

    def test_analyze_fail(self):
        code, out, _ = run(["analyze", "--builtin", "circle", "--p1", "1,0", "--p2=-1,0"])
        self.assertEqual(code, EXIT_FAIL)
        self.assertFalse(load_report(out).composition.is_immersion)

    def test_deterministic_output(self):
        target = self.path("report.json")
        self.assertEqual(run(["analyze", *PARABOLA, "--out", target])[0], EXIT_OK)
        with open(target, "rb") as f:
            first = f.read()
        self.assertEqual(run(["analyze", *PARABOLA, "--out", target])[0], EXIT_OK)
        with open(target, "rb") as f:
            self.assertEqual(f.read(), first)

    def test_timing_and_tolerance_flags(self):
        code, out, _ = run(["analyze", *PARABOLA, "--timing", "--tol-grid-samples", "1024"])
        self.assertEqual(code, EXIT_OK)
        report = load_report(out)
        self.assertIsNotNone(report.wall_time)
        self.assertEqual(report.tolerances.grid_samples, 1024)

    def test_usage_errors(self):
        self.assertEqual(run(["analyze", "--builtin", "spiral", "--p1", "0,0", "--p2", "1,0"])[0], EXIT_USAGE)
        self.assertEqual(run(["analyze", "--builtin", "circle", "--p1", "0", "--p2", "1,0"])[0], EXIT_USAGE)
        self.assertEqual(run(["analyze", "--curve", self.path("missing.json"), "--p1", "0,0", "--p2", "1,0"])[0],
                         EXIT_USAGE)
        self.assertEqual(run(["density", "--builtin", "circle", "--arc1", "1,0", "--arc2", "2,3"])[0], EXIT_USAGE)
        self.assertEqual(run(["analyze", "--builtin", "circle", "--params", "-1", "--p1", "0,0", "--p2", "1,0"])[0],
                         EXIT_USAGE)
        self.assertEqual(run([])[0], EXIT_USAGE)

    def test_curve_file(self):
        doc = self.path("curve.json")
        with open(doc, "w", encoding="utf-8") as f:
            json.dump({"components": [{"x": "t", "y": "t^2", "domain": [-2, 2]}]}, f)
        code, out, _ = run(["analyze", "--curve", doc, *PARABOLA[2:]])
        self.assertEqual(code, EXIT_OK)
        self.assertIsNone(load_report(out).curve.name)

        with open(doc, "w", encoding="utf-8") as f:
            json.dump({"components": [{"x": "t", "y": "t^2", "domain": [2, -2]}]}, f)
        self.assertEqual(run(["analyze", "--curve", doc, *PARABOLA[2:]])[0], EXIT_USAGE)

    def test_search_failure(self):
        code, out, err = run(["search", "--builtin", "line", "--arc1=-0.5,0", "--arc2", "1,1.5",
                              "--samples", "200"])
        self.assertEqual(code, EXIT_FAIL)
        report = load_report(out)
        self.assertEqual(report.kind, "search_failure")
        self.assertEqual(report.search_failure.stage, "nondegenerate_stage1")
        self.assertIn("nondegenerate_stage1", err)

    def test_search_success(self):
        code, out, _ = run(["search", "--builtin", "circle", "--arc1", "0.1,0.6", "--arc2", "2.0,2.5:0",
                            "--seed", "42"])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(load_report(out).search.certificate.passes)

    def test_affine_check(self):
        code, out, _ = run(["affine-check", "--p1", "0,0", "--p2", "1,0", "--q1", "2,0", "--q2", "5,0"])
        self.assertEqual(code, EXIT_OK)
        report = load_report(out)
        self.assertIsNone(report.curve)
        self.assertEqual(report.affine.conjugator.linear, ((-1.0, 2.0), (-4.0, 5.0)))
        self.assertEqual(report.affine.conjugator.offset, (2.0, 20.0))

        code, _, err = run(["affine-check", "--p1", "0,0", "--p2", "1,0", "--q1", "2,1", "--q2", "5,0"])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("not collinear", err)

    def test_star(self):
        self.assertEqual(run(["star", "--builtin", "circle"])[0], EXIT_OK)
        code, out, _ = run(["star", "--builtin", "example2_segments"])
        self.assertEqual(code, EXIT_FAIL)
        self.assertFalse(load_report(out).star.satisfied)

    def test_density_csv(self):
        csv_path = self.path("grid.csv")
        code, out, _ = run(["density", "--builtin", "line", "--arc1", "0,1", "--arc2", "0,1",
                            "--grid", "2", "--csv", csv_path])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(load_report(out).density.pass_fraction, 0.5)
        with open(csv_path, encoding="utf-8") as f:
            self.assertEqual(f.read(), "0,1\n1,0\n")

    def test_ambient(self):
        svg_path = self.path("ambient.svg")
        code, out, err = run(["ambient", "--builtin", "line", "--samples", "4", "--seed", "2",
                              "--box=-1,2,-1,1", "--svg", svg_path])
        self.assertEqual(code, EXIT_OK)
        report = load_report(out)
        self.assertEqual(report.kind, "ambient")
        self.assertEqual(report.ambient.samples, 4)
        self.assertEqual(report.ambient.box, (-1.0, 2.0, -1.0, 1.0))
        self.assertIn("Pass frac.", err)
        self.assertTrue(os.path.getsize(svg_path) > 0)

        self.assertEqual(run(["ambient", "--builtin", "line", "--box", "0,1,2"])[0], EXIT_USAGE)

    def test_case(self):
        code, out, _ = run(["case", "remark_line", "--grid", "2"])
        self.assertEqual(code, EXIT_OK)
        report = load_report(out)
        self.assertEqual(report.case.case_id, "remark_line")
        self.assertEqual(report.curve.name, "line")


class TestRender(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_render_composition(self):
        report_path = os.path.join(self.tmp.name, "report.json")
        svg_path = os.path.join(self.tmp.name, "report.svg")
        self.assertEqual(run(["analyze", *PARABOLA, "--out", report_path])[0], EXIT_OK)
        self.assertEqual(run(["render", "--report", report_path, "--svg", svg_path])[0], EXIT_OK)
        with open(svg_path, encoding="utf-8") as f:
            first = f.read()
        self.assertIn("<svg", first)

        # same report, same bytes
        render_svg(read_report(report_path), svg_path)
        with open(svg_path, encoding="utf-8") as f:
            self.assertEqual(f.read(), first)

    def test_render_density_inline(self):
        svg_path = os.path.join(self.tmp.name, "grid.svg")
        code, _, _ = run(["density", "--builtin", "circle", "--arc1", "0,1.5", "--arc2", "3.2,4.7",
                          "--grid", "2", "--svg", svg_path])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.getsize(svg_path) > 0)

    def test_render_without_curve(self):
        report_path = os.path.join(self.tmp.name, "affine.json")
        run(["affine-check", "--p1", "0,0", "--p2", "1,0", "--q1", "2,0", "--q2", "5,0", "--out", report_path])
        self.assertEqual(
            run(["render", "--report", report_path, "--svg", os.path.join(self.tmp.name, "x.svg")])[0],
            EXIT_USAGE,
        )
        self.assertEqual(
            run(["render", "--report", os.path.join(self.tmp.name, "none.json"), "--svg", "x.svg"])[0],
            EXIT_USAGE,
        )


if __name__ == '__main__':
    unittest.main()

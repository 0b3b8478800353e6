import math
import unittest

import numpy as np
from langgraph.graph import END

from core.affine_normalizer import verify_conjugation
from core.curve_model import Arc, CurveLoc, builtin_curve
from core.errors import DomainError, SearchError
from core.generic_search import (
    STAGE_NONDEGENERATE_1,
    check_star_on_arcs,
    confirm_base_state,
    find_generic_anchors,
    find_nondegenerate_pair,
    invert_phi,
    phi_eval,
    phi_jacobian,
    varphi_dets,
)
from core.graph import _continue_to, build_search_graph

ARC1 = Arc(lo=0.1, hi=0.6)
ARC2 = Arc(lo=2.0, hi=2.5)


class TestChordMap(unittest.TestCase):
    def setUp(self):
        self.circle = builtin_curve("circle")

    def test_varphi(self):
        phi1, phi2 = varphi_dets(self.circle, CurveLoc(t=0.0), CurveLoc(t=math.pi / 2))
        self.assertAlmostEqual(phi1, 1.0)
        self.assertAlmostEqual(phi2, -1.0)

    def test_base_state_endpoints(self):
        # s = (0, 1) puts the anchors on the curve itself
        t1, t2 = CurveLoc(t=0.3), CurveLoc(t=2.2)
        value = phi_eval(self.circle, t1, t2, 0.0, 1.0)
        np.testing.assert_allclose(value, [math.cos(0.3), math.sin(0.3), math.cos(2.2), math.sin(2.2)])

    def test_jacobian_finite_difference(self):
        ellipse = builtin_curve("ellipse")
        x = np.array([0.4, 2.1, 0.2, 0.9])
        jac = phi_jacobian(ellipse, CurveLoc(t=x[0]), CurveLoc(t=x[1]), x[2], x[3])
        h = 1e-6
        for k in range(4):
            step = np.zeros(4)
            step[k] = h
            hi = phi_eval(ellipse, CurveLoc(t=(x + step)[0]), CurveLoc(t=(x + step)[1]), *(x + step)[2:])
            lo = phi_eval(ellipse, CurveLoc(t=(x - step)[0]), CurveLoc(t=(x - step)[1]), *(x - step)[2:])
            np.testing.assert_allclose(jac[:, k], (hi - lo) / (2 * h), atol=1e-6)

    def test_invert(self):
        target = phi_eval(self.circle, CurveLoc(t=0.35), CurveLoc(t=2.25), 0.1, 0.9)
        state = invert_phi(self.circle, target, (0.34, 2.26, 0.0, 1.0), ARC1, ARC2)
        self.assertIsNotNone(state)
        np.testing.assert_allclose(state, [0.35, 2.25, 0.1, 0.9], atol=1e-8)


class TestNondegeneratePair(unittest.TestCase):
    def test_curved(self):
        for name in ("circle", "ellipse"):
            curve = builtin_curve(name)
            pair = find_nondegenerate_pair(curve, ARC1, ARC2, rng=np.random.default_rng(7))
            self.assertTrue(ARC1.contains(pair.t1.t))
            self.assertTrue(ARC2.contains(pair.t2.t))
            self.assertNotEqual(pair.varphi1, 0.0)
            self.assertNotEqual(pair.varphi2, 0.0)

            # det J Phi at the base state is phi1 * phi2 up to sign
            det = confirm_base_state(curve, pair)
            self.assertAlmostEqual(abs(det), abs(pair.varphi1 * pair.varphi2), places=10)

    def test_block_determinant(self):
        rng = np.random.default_rng(11)
        for name in ("circle", "ellipse", "parabola_arc"):
            curve = builtin_curve(name)
            lo, hi = curve.components[0].bounds
            for _ in range(10):
                t1, t2 = (CurveLoc(t=float(t)) for t in rng.uniform(lo, hi, size=2))
                det = np.linalg.det(phi_jacobian(curve, t1, t2, 0.0, 1.0))
                phi1, phi2 = varphi_dets(curve, t1, t2)
                self.assertAlmostEqual(abs(det), abs(phi1 * phi2), delta=1e-8 * (1.0 + abs(det)))

    def test_parabola(self):
        parabola = builtin_curve("parabola_arc")
        pair = find_nondegenerate_pair(parabola, Arc(lo=-1.5, hi=-0.5), Arc(lo=0.5, hi=1.5))
        self.assertGreater(abs(pair.varphi1), 0.0)

    def test_parabola_overlapping_tiny_arc(self):
        # curvature 2 at the vertex keeps nearby chords off the tangent
        arc = Arc(lo=-0.05, hi=0.05)
        pair = find_nondegenerate_pair(builtin_curve("parabola_arc"), arc, arc, rng=np.random.default_rng(4))
        self.assertTrue(arc.contains(pair.t1.t))
        self.assertTrue(arc.contains(pair.t2.t))
        self.assertNotEqual(pair.t1.t, pair.t2.t)

    def test_line_fails_first_stage(self):
        line = builtin_curve("line")
        with self.assertRaises(SearchError) as ctx:
            find_nondegenerate_pair(line, Arc(lo=-0.5, hi=0.0), Arc(lo=1.0, hi=1.5), budget=200)
        self.assertEqual(ctx.exception.stage, STAGE_NONDEGENERATE_1)
        self.assertEqual(ctx.exception.attempts, 200)

    def test_arc_outside_domain(self):
        with self.assertRaises(DomainError):
            find_nondegenerate_pair(builtin_curve("line"), Arc(lo=-3.0, hi=0.0), ARC2)


class TestGenericAnchors(unittest.TestCase):
    def test_circle(self):
        circle = builtin_curve("circle")
        result = find_generic_anchors(circle, ARC1, ARC2, rng_seed=42)
        self.assertTrue(result.certificate.passes)
        self.assertTrue(result.perturbed_report.passes)
        self.assertTrue(result.star_satisfied)
        self.assertNotEqual(result.base_det, 0.0)
        self.assertGreaterEqual(result.attempts, 1)

        # curve-anchored: both anchors sit on the circle inside their arcs
        self.assertTrue(ARC1.contains(result.inverted.t1.t))
        self.assertTrue(ARC2.contains(result.inverted.t2.t))
        for anchor in (result.p_tilde.p1, result.p_tilde.p2):
            self.assertAlmostEqual(math.hypot(anchor.x, anchor.y), 1.0, places=9)

        self.assertLess(verify_conjugation(result.conjugator, result.p_prime, result.p_tilde), 1e-8)

        # Phi at the inverted state reproduces p'
        inverted = result.inverted
        value = phi_eval(circle, inverted.t1, inverted.t2, inverted.s1, inverted.s2)
        p_prime = [result.p_prime.p1.x, result.p_prime.p1.y, result.p_prime.p2.x, result.p_prime.p2.y]
        np.testing.assert_allclose(value, p_prime, atol=1e-9)

    def test_several_seeds(self):
        circle = builtin_curve("circle")
        for seed in range(1, 21):
            result = find_generic_anchors(circle, ARC1, ARC2, rng_seed=seed)
            self.assertTrue(result.certificate.passes, seed)

    def test_reproducible(self):
        circle = builtin_curve("circle")
        first = find_generic_anchors(circle, ARC1, ARC2, rng_seed=3)
        second = find_generic_anchors(circle, ARC1, ARC2, rng_seed=3)
        self.assertEqual(first.p_tilde, second.p_tilde)
        self.assertEqual(first.attempts, second.attempts)

    def test_line_fails(self):
        line = builtin_curve("line")
        with self.assertRaises(SearchError) as ctx:
            find_generic_anchors(line, Arc(lo=-0.5, hi=0.0), Arc(lo=1.0, hi=1.5), sample_budget=200)
        self.assertEqual(ctx.exception.stage, STAGE_NONDEGENERATE_1)

    def test_example2_fails_first_stage(self):
        # the middle segment is straight: every chord lies along its tangent
        middle = Arc(component=1, lo=1.1, hi=1.9)
        with self.assertRaises(SearchError) as ctx:
            find_generic_anchors(builtin_curve("example2_segments"), middle, middle, sample_budget=200)
        self.assertEqual(ctx.exception.stage, STAGE_NONDEGENERATE_1)

    def test_budget(self):
        with self.assertRaises(ValueError):
            find_generic_anchors(builtin_curve("circle"), ARC1, ARC2, budget=0)

    def test_star_warning(self):
        line = builtin_curve("line")
        with self.assertLogs("core.generic_search", level="WARNING"):
            verdict = check_star_on_arcs(line, [Arc(lo=-0.5, hi=0.0), Arc(lo=1.0, hi=1.5)])
        self.assertFalse(verdict.satisfied)


class TestSearchGraph(unittest.TestCase):
    def test_nodes(self):
        graph = build_search_graph()
        nodes = set(graph.get_graph().nodes)
        self.assertTrue({"nondegenerate", "base_state", "perturbation"} <= nodes)

    def test_routing(self):
        route = _continue_to("base_state")
        self.assertEqual(route({"failure": None}), "base_state")
        failure = {"stage": "base_state", "message": "x", "attempts": 0, "diagnostic": None}
        self.assertEqual(route({"failure": failure}), END)


if __name__ == '__main__':
    unittest.main()

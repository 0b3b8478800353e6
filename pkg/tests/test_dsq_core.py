import math
import unittest

import numpy as np

from core.curve_model import CurveLoc, builtin_curve
from core.dsq_core import (
    AnchorPair,
    Composition,
    composition_derivative,
    dsq_map_eval,
    dsq_map_jacobian,
    dsq_map_rank,
    find_singular_points,
    reflect_across_anchor_line,
)
from core.settings import Tolerances


def angular_gap(a, b):
    gap = abs(a - b) % (2 * math.pi)
    return min(gap, 2 * math.pi - gap)


class TestDistanceSquaredMap(unittest.TestCase):
    def setUp(self):
        self.pair = AnchorPair.of((0.0, 0.0), (1.0, 0.0))

    def test_evaluate(self):
        np.testing.assert_allclose(dsq_map_eval(self.pair, (1.0, 1.0)), [2.0, 1.0])
        np.testing.assert_allclose(dsq_map_jacobian(self.pair, (1.0, 1.0)), [[2.0, 2.0], [0.0, 2.0]])

    def test_rank_drops_on_anchor_line(self):
        self.assertEqual(dsq_map_rank(self.pair, (0.3, 0.7)), 2)
        self.assertEqual(dsq_map_rank(self.pair, (2.0, 0.0)), 1)
        self.assertEqual(dsq_map_rank(self.pair, (-5.0, 0.0)), 1)

    def test_fold(self):
        # D_p cannot tell a point from its mirror image in the anchor line
        tilted = AnchorPair.of((1.0, 0.0), (0.0, 1.0))
        x = np.array([0.0, 0.0])
        mirror = reflect_across_anchor_line(tilted, x)
        np.testing.assert_allclose(mirror, [1.0, 1.0])
        np.testing.assert_allclose(dsq_map_eval(tilted, x), dsq_map_eval(tilted, mirror))

        with self.assertRaises(ValueError):
            reflect_across_anchor_line(AnchorPair.of((1.0, 1.0), (1.0, 1.0)), x)

    def test_pair(self):
        self.assertAlmostEqual(self.pair.gap, 1.0)
        self.assertFalse(self.pair.is_degenerate())
        self.assertTrue(AnchorPair.of((2.0, 3.0), (2.0, 3.0)).is_degenerate())
        self.assertEqual(self.pair.swapped().p1, self.pair.p2)


class TestComposition(unittest.TestCase):
    def test_derivative(self):
        # F(t) = (t^2, (t - 1)^2) on the x-axis
        comp = Composition(builtin_curve("line"), AnchorPair.of((0.0, 0.0), (1.0, 0.0)))
        np.testing.assert_allclose(comp.values(0, np.array(0.5)), [0.25, 0.25])
        np.testing.assert_allclose(composition_derivative(comp, CurveLoc(t=0.5)), [1.0, -1.0])
        np.testing.assert_allclose(comp.second_derivatives(0, np.array(0.5)), [2.0, 2.0])

    def test_finite_difference(self):
        comp = Composition(builtin_curve("ellipse"), AnchorPair.of((0.3, -0.2), (1.1, 0.4)))
        h = 1e-6
        for t in (0.2, 2.0, 5.0):
            numeric = (comp.values(0, np.array(t + h)) - comp.values(0, np.array(t - h))) / (2 * h)
            np.testing.assert_allclose(comp.derivatives(0, np.array(t)), numeric, rtol=1e-6, atol=1e-6)


class TestSingularPoints(unittest.TestCase):
    def test_circle_generic(self):
        comp = Composition(builtin_curve("circle"), AnchorPair.of((0.5, 0.0), (0.0, 0.5)))
        self.assertEqual(find_singular_points(comp), [])

    def test_circle_antipodal(self):
        # g1 = sin t, g2 = -sin t
        comp = Composition(builtin_curve("circle"), AnchorPair.of((1.0, 0.0), (-1.0, 0.0)))
        points = find_singular_points(comp)
        self.assertEqual(len(points), 2)
        ts = [p.loc.t for p in points]
        self.assertTrue(any(angular_gap(t, 0.0) < 1e-8 for t in ts))
        self.assertTrue(any(angular_gap(t, math.pi) < 1e-8 for t in ts))
        for p in points:
            self.assertLess(max(abs(r) for r in p.residuals), 1e-8)

    def test_line(self):
        line = builtin_curve("line")
        comp = Composition(line, AnchorPair.of((0.5, 0.0), (1.5, 0.0)))
        self.assertEqual(find_singular_points(comp), [])

        comp = Composition(line, AnchorPair.of((0.5, 0.0), (0.5, 0.0)))
        points = find_singular_points(comp)
        self.assertEqual(len(points), 1)
        self.assertAlmostEqual(points[0].loc.t, 0.5, places=8)

    def test_anchors_on_normal_line(self):
        # both anchors on the normal at t0: g1 and g2 vanish together there
        parabola = builtin_curve("parabola_arc")
        t0 = 0.2
        point = np.array([t0, t0**2])
        normal = np.array([-2 * t0, 1.0]) / math.hypot(2 * t0, 1.0)
        comp = Composition(parabola, AnchorPair.of(point + 0.5 * normal, point - 0.25 * normal))
        points = find_singular_points(comp)
        self.assertTrue(any(abs(p.loc.t - t0) < 1e-7 for p in points))

    def test_parabola_generic(self):
        comp = Composition(builtin_curve("parabola_arc"), AnchorPair.of((1.0, 0.0), (0.0, 1.0)))
        self.assertEqual(find_singular_points(comp), [])

    def test_collapsed_component(self):
        # both anchors at the centre: D_p o gamma is constant
        circle = builtin_curve("circle")
        points = find_singular_points(Composition(circle, AnchorPair.of((0.0, 0.0), (0.0, 0.0))))
        self.assertEqual(len(points), 1)
        arc = points[0].arc
        self.assertIsNotNone(arc)
        self.assertEqual((arc.lo, arc.hi), circle.components[0].bounds)
        self.assertFalse(points[0].refined)

    def test_tolerance_override(self):
        comp = Composition(builtin_curve("circle"), AnchorPair.of((1.0, 0.0), (-1.0, 0.0)))
        coarse = find_singular_points(comp, tolerances=Tolerances(grid_samples=256))
        self.assertEqual(len(coarse), 2)


if __name__ == '__main__':
    unittest.main()

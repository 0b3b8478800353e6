import unittest

import numpy as np

from core.affine_normalizer import (
    AffineMap2,
    LineParam,
    build_conjugator,
    lambda_coefficients,
    verify_conjugation,
    verify_pointwise_oracle,
)
from core.dsq_core import AnchorPair
from core.errors import CollinearityError, DegeneratePairError


class TestLambdaCoefficients(unittest.TestCase):
    def test_axis(self):
        p = AnchorPair.of((0.0, 0.0), (1.0, 0.0))
        p_tilde = AnchorPair.of((2.0, 0.0), (5.0, 0.0))
        self.assertEqual(lambda_coefficients(p, p_tilde), (2.0, 5.0))

    def test_tilted(self):
        # both pairs on y = 2x - 1
        p = AnchorPair.of((1.0, 1.0), (2.0, 3.0))
        p_tilde = AnchorPair.of((3.0, 5.0), (0.0, -1.0))
        lambda1, lambda2 = lambda_coefficients(p, p_tilde)
        self.assertAlmostEqual(lambda1, 2.0)
        self.assertAlmostEqual(lambda2, -1.0)

    def test_errors(self):
        p = AnchorPair.of((0.0, 0.0), (1.0, 0.0))
        with self.assertRaises(CollinearityError):
            lambda_coefficients(p, AnchorPair.of((2.0, 0.0), (5.0, 1e-3)))
        with self.assertRaises(DegeneratePairError):
            lambda_coefficients(AnchorPair.of((1.0, 1.0), (1.0, 1.0)), p)
        with self.assertRaises(DegeneratePairError):
            lambda_coefficients(p, AnchorPair.of((2.0, 0.0), (2.0, 0.0)))

    def test_line_param(self):
        line = LineParam.of(AnchorPair.of((0.0, 0.0), (2.0, 0.0)))
        self.assertAlmostEqual(line.coordinate((1.0, 3.0)), 0.5)
        self.assertAlmostEqual(line.distance((1.0, 3.0)), 3.0)


class TestConjugator(unittest.TestCase):
    def test_worked_example(self):
        p = AnchorPair.of((0.0, 0.0), (1.0, 0.0))
        p_tilde = AnchorPair.of((2.0, 0.0), (5.0, 0.0))
        H = build_conjugator(p, p_tilde)
        np.testing.assert_allclose(H.matrix, [[-1.0, 2.0], [-4.0, 5.0]])
        np.testing.assert_allclose(H.vector, [2.0, 20.0])

        factors = H.factors
        self.assertIsNotNone(factors)
        self.assertEqual(factors.c1, -1.0)
        self.assertEqual((factors.d1_prime, factors.d2_prime), (-4.0, -25.0))

        # D_p(0) = (0, 1) and D_p~(0) = (4, 25)
        np.testing.assert_allclose(H.apply(np.array([0.0, 1.0])), [4.0, 25.0])

    def test_conjugation_residual(self):
        cases = [
            (((0.0, 0.0), (1.0, 0.0)), ((2.0, 0.0), (5.0, 0.0))),
            (((1.0, 1.0), (2.0, 3.0)), ((3.0, 5.0), (0.0, -1.0))),
            (((-0.3, 0.4), (0.6, -0.8)), ((0.6, -0.8), (-0.3, 0.4))),
        ]
        for a, b in cases:
            p, p_tilde = AnchorPair.of(*a), AnchorPair.of(*b)
            H = build_conjugator(p, p_tilde)
            self.assertLess(verify_conjugation(H, p, p_tilde), 1e-9)

    def test_random_lines(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            base = rng.uniform(-3, 3, size=2)
            direction = rng.uniform(-1, 1, size=2)
            l1, l2, m1, m2 = rng.uniform(-2, 2, size=4)
            p = AnchorPair.of(base + l1 * direction, base + l2 * direction)
            p_tilde = AnchorPair.of(base + m1 * direction, base + m2 * direction)
            H = build_conjugator(p, p_tilde)
            self.assertLess(verify_conjugation(H, p, p_tilde), 1e-8)

    def test_oracle_agrees(self):
        p = AnchorPair.of((1.0, 1.0), (2.0, 3.0))
        p_tilde = AnchorPair.of((3.0, 5.0), (0.0, -1.0))
        H = build_conjugator(p, p_tilde)
        oracle = verify_pointwise_oracle(p, p_tilde)
        np.testing.assert_allclose(oracle.matrix, H.matrix, atol=1e-8)
        np.testing.assert_allclose(oracle.vector, H.vector, atol=1e-8)

    def test_group_coherence(self):
        # H(p~ -> p^) o H(p -> p~) = H(p -> p^), and H(p~ -> p) inverts H(p -> p~)
        p = AnchorPair.of((1.0, 1.0), (2.0, 3.0))
        p_tilde = AnchorPair.of((3.0, 5.0), (0.0, -1.0))
        p_hat = AnchorPair.of((-1.0, -3.0), (0.5, 0.0))
        first, second = build_conjugator(p, p_tilde), build_conjugator(p_tilde, p_hat)
        direct = build_conjugator(p, p_hat)
        chained = second.compose(first)
        np.testing.assert_allclose(chained.matrix, direct.matrix, atol=1e-9)
        np.testing.assert_allclose(chained.vector, direct.vector, atol=1e-9)

        back = build_conjugator(p_tilde, p)
        inverse = first.inverse()
        np.testing.assert_allclose(back.matrix, inverse.matrix, atol=1e-9)
        np.testing.assert_allclose(back.vector, inverse.vector, atol=1e-9)

    def test_identity_and_inverse(self):
        p = AnchorPair.of((0.0, 0.0), (1.0, 0.0))
        H = build_conjugator(p, p)
        np.testing.assert_allclose(H.matrix, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(H.vector, np.zeros(2), atol=1e-15)

        H = build_conjugator(p, AnchorPair.of((2.0, 0.0), (5.0, 0.0)))
        self.assertAlmostEqual(H.det, 3.0)
        composed = H.compose(H.inverse())
        np.testing.assert_allclose(composed.matrix, AffineMap2.identity().matrix, atol=1e-12)
        np.testing.assert_allclose(composed.vector, AffineMap2.identity().vector, atol=1e-12)

        with self.assertRaises(DegeneratePairError):
            AffineMap2(linear=((1.0, 1.0), (1.0, 1.0)), offset=(0.0, 0.0)).inverse()


if __name__ == '__main__':
    unittest.main()

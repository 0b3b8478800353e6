"""
affine_normalizer.py - Affine conjugation between distance-squared mappings.

For anchor pairs p and p~ on one straight line L there is an affine map H of
the target plane with H o D_p = D_p~. It is the composite of four steps:

    H1(X1, X2) = (X1, X1 - X2)             d_p1 - d_p2 becomes linear in x
    H2(X1, X2) = (X1, X2 - c1)             drop the constant |p1|^2 - |p2|^2
    H3(X1, X2) = (X1 - l1 X2, X1 - l2 X2)  slide the anchors along L
    H4(X1, X2) = (X1 - d1', X2 - d2')      complete the squares

with p~_i = p1 + l_i (p2 - p1), c1 = |p1|^2 - |p2|^2 and
d_i' = |p1|^2 - |p~_i|^2. Collected, the linear part is
[[1 - l1, l1], [1 - l2, l2]] (determinant l2 - l1) and the offset is
(l1 c1 - d1', l2 c1 - d2').
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .dsq_core import AnchorPair
from .errors import CollinearityError, DegeneratePairError
from .settings import Tolerances

logger = logging.getLogger(__name__)

Matrix2 = Tuple[Tuple[float, float], Tuple[float, float]]
Vector2 = Tuple[float, float]

ORACLE_POINTS = 6


class LineParam(BaseModel):
    """Line L through p1 with direction p2 - p1."""

    model_config = ConfigDict(frozen=True)

    base: Vector2
    dir: Vector2

    @classmethod
    def of(cls, pair: AnchorPair) -> "LineParam":
        """
        Raises:
            DegeneratePairError: If p1 == p2
        """
        if pair.is_degenerate():
            raise DegeneratePairError("Anchor line needs distinct anchors p1 != p2")
        return cls(
            base=(pair.p1.x, pair.p1.y),
            dir=(pair.p2.x - pair.p1.x, pair.p2.y - pair.p1.y),
        )

    def coordinate(self, point: Sequence[float]) -> float:
        """lambda with point = base + lambda * dir, for the orthogonal projection."""
        d = np.asarray(self.dir)
        return float((np.asarray(point, dtype=float) - self.base) @ d / (d @ d))

    def distance(self, point: Sequence[float]) -> float:
        """Euclidean distance from point to L."""
        offset = np.asarray(point, dtype=float) - self.base
        d = np.asarray(self.dir)
        return float(abs(d[0] * offset[1] - d[1] * offset[0]) / np.hypot(*d))


class ConjugatorFactors(BaseModel):
    """Constants of the four-step construction, kept for traceability."""

    model_config = ConfigDict(frozen=True)

    c1: float
    lambda1: float
    lambda2: float
    d1: float
    d2: float
    d1_prime: float
    d2_prime: float


class AffineMap2(BaseModel):
    """X -> linear @ X + offset on the plane."""

    model_config = ConfigDict(frozen=True)

    linear: Matrix2
    offset: Vector2
    factors: Optional[ConjugatorFactors] = None

    @classmethod
    def identity(cls) -> "AffineMap2":
        return cls(linear=((1.0, 0.0), (0.0, 1.0)), offset=(0.0, 0.0))

    @classmethod
    def from_arrays(cls, linear: np.ndarray, offset: np.ndarray,
                    factors: Optional[ConjugatorFactors] = None) -> "AffineMap2":
        return cls(
            linear=((float(linear[0, 0]), float(linear[0, 1])),
                    (float(linear[1, 0]), float(linear[1, 1]))),
            offset=(float(offset[0]), float(offset[1])),
            factors=factors,
        )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.linear, dtype=float)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.offset, dtype=float)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to points of shape (..., 2)."""
        return np.asarray(points, dtype=float) @ self.matrix.T + self.vector

    def compose(self, inner: "AffineMap2") -> "AffineMap2":
        """self o inner."""
        return AffineMap2.from_arrays(
            self.matrix @ inner.matrix,
            self.matrix @ inner.vector + self.vector,
        )

    def inverse(self) -> "AffineMap2":
        """
        Raises:
            DegeneratePairError: If the linear part is singular
        """
        if abs(self.det) < np.finfo(float).eps:
            raise DegeneratePairError(f"Affine map is not invertible (det = {self.det:.3e})")
        inv = np.linalg.inv(self.matrix)
        return AffineMap2.from_arrays(inv, -inv @ self.vector)


def _dsq_map(pair: AnchorPair, points: np.ndarray) -> np.ndarray:
    p1, p2 = pair.arrays
    return np.stack([
        np.sum((points - p1) ** 2, axis=-1),
        np.sum((points - p2) ** 2, axis=-1),
    ], axis=-1)


def lambda_coefficients(p: AnchorPair, p_tilde: AnchorPair,
                        tolerances: Optional[Tolerances] = None) -> Tuple[float, float]:
    """
    Positions of p~1, p~2 along the line through p1, p2 in units of p2 - p1.

    Raises:
        DegeneratePairError: If p1 == p2, p~1 == p~2 or |lambda1 - lambda2| is too small
        CollinearityError: If p~1 or p~2 is off the line through p1, p2
    """
    tols = tolerances or Tolerances()
    line = LineParam.of(p)
    if p_tilde.is_degenerate():
        raise DegeneratePairError("Target anchors must be distinct: p~1 == p~2")

    gate = tols.collinearity_tol * (1.0 + p.gap)
    for anchor in (p_tilde.p1, p_tilde.p2):
        residual = line.distance((anchor.x, anchor.y))
        if residual > gate:
            raise CollinearityError(residual, gate)

    lambda1 = line.coordinate((p_tilde.p1.x, p_tilde.p1.y))
    lambda2 = line.coordinate((p_tilde.p2.x, p_tilde.p2.y))
    if abs(lambda1 - lambda2) < tols.lambda_gap:
        raise DegeneratePairError(
            f"lambda1 and lambda2 coincide ({lambda1:.6g}, {lambda2:.6g})"
        )
    return lambda1, lambda2


def build_conjugator(p: AnchorPair, p_tilde: AnchorPair,
                     tolerances: Optional[Tolerances] = None) -> AffineMap2:
    """
    Affine H with H o D_p = D_p~ for collinear anchor pairs.

    Raises:
        DegeneratePairError, CollinearityError: As for lambda_coefficients
    """
    lambda1, lambda2 = lambda_coefficients(p, p_tilde, tolerances)
    p1, p2 = p.arrays
    q1, q2 = p_tilde.arrays

    c1 = float(p1 @ p1 - p2 @ p2)
    d = float(p1 @ p1)
    d1_prime = d - float(q1 @ q1)
    d2_prime = d - float(q2 @ q2)

    linear = np.array([[1.0 - lambda1, lambda1], [1.0 - lambda2, lambda2]])
    offset = np.array([lambda1 * c1 - d1_prime, lambda2 * c1 - d2_prime])
    factors = ConjugatorFactors(
        c1=c1, lambda1=lambda1, lambda2=lambda2,
        d1=d, d2=d, d1_prime=d1_prime, d2_prime=d2_prime,
    )
    logger.debug("Conjugator lambdas (%.6g, %.6g), c1=%.6g", lambda1, lambda2, c1)
    return AffineMap2.from_arrays(linear, offset, factors)


def verify_conjugation(H: AffineMap2, p: AnchorPair, p_tilde: AnchorPair,
                       n_samples: int = 1000, box: float = 10.0,
                       seed: int = 0) -> float:
    """Max of |H(D_p(x)) - D_p~(x)| over uniform samples x in [-box, box]^2."""
    rng = np.random.default_rng(seed)
    points = rng.uniform(-box, box, size=(n_samples, 2))
    residual = H.apply(_dsq_map(p, points)) - _dsq_map(p_tilde, points)
    return float(np.max(np.linalg.norm(residual, axis=-1)))


def verify_pointwise_oracle(p: AnchorPair, p_tilde: AnchorPair,
                            n_points: int = ORACLE_POINTS, box: float = 5.0,
                            seed: int = 0) -> AffineMap2:
    """
    Solve D_p~(x) = A D_p(x) + b by least squares at sample points.

    Independent of the closed form: agreement with build_conjugator checks
    its constants.
    """
    rng = np.random.default_rng(seed)
    points = rng.uniform(-box, box, size=(n_points, 2))
    design = np.column_stack([_dsq_map(p, points), np.ones(n_points)])
    solution, *_ = np.linalg.lstsq(design, _dsq_map(p_tilde, points), rcond=None)
    return AffineMap2.from_arrays(solution[:2].T, solution[2])

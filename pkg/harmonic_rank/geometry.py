"""
Closed-form distance oracles: hyperbolic space in the hyperboloid model,
Euclidean space and Riemannian products of those.

Points are numpy arrays whose last axis holds coordinates; every method
broadcasts over leading axes.
"""
import abc
import math
import typing

import numpy as np
from scipy.special import gamma

from harmonic_rank.exceptions import OracleUnavailable


class DistanceOracle(abc.ABC):
    #: intrinsic dimension
    dim: int
    #: length of the coordinate vector of a point
    ambient_dim: int

    @abc.abstractmethod
    def basepoint(self) -> np.ndarray:
        ...

    @abc.abstractmethod
    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def tangent_at_base(self, direction: np.ndarray) -> np.ndarray:
        """
        Ambient representation of a tangent vector at `basepoint`, given in
        model coordinates (``dim`` components).
        """

    @abc.abstractmethod
    def tangent_norm(self, p: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def geodesic_point(self, p: np.ndarray, tangent: np.ndarray, t: typing.Any) -> np.ndarray:
        """
        Point at time *t* on the unit speed geodesic leaving *p* with unit
        ambient tangent *tangent*.
        """

    @abc.abstractmethod
    def segment_points(self, p: np.ndarray, q: np.ndarray, fractions: np.ndarray) -> np.ndarray:
        """
        Points at the given fractions of the geodesic segment from *p* to *q*,
        shape ``(len(fractions), ambient_dim)``.
        """

    def horosphere_volume(self, radius: float) -> float:
        """
        Induced volume of b_v^{-1}(0) ∩ B(p, radius) for the horosphere through
        the basepoint p.
        """
        raise OracleUnavailable(f'no horosphere chart for {type(self).__name__}', kind='horosphere')

    def point(self, direction: np.ndarray, t: typing.Any) -> np.ndarray:
        """
        Point at distance *t* from the basepoint in the given model direction.
        """
        return self.geodesic_point(self.basepoint(), self.tangent_at_base(direction), t)


def ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) * radius ** dim / gamma(dim / 2 + 1)


class HyperbolicSpace(DistanceOracle):
    """
    Hyperbolic space of curvature κ < 0 on the unit hyperboloid
    −x_n² + x_0² + … + x_{n−1}² = −1, with distances scaled by 1/√|κ|.
    """

    def __init__(self, dim: int, curvature: float = -1.0):
        if curvature >= 0:
            raise ValueError(f'hyperbolic space needs negative curvature, got {curvature}')
        self.dim = dim
        self.ambient_dim = dim + 1
        self.curvature = curvature
        self.scale = math.sqrt(-curvature)

    @staticmethod
    def lorentz(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.sum(x[..., :-1] * y[..., :-1], axis=-1) - x[..., -1] * y[..., -1]

    def basepoint(self) -> np.ndarray:
        point = np.zeros(self.ambient_dim)
        point[-1] = 1.0
        return point

    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        # polar form around the basepoint, with sinh a = |spatial part| and θ the angle between the spatial
        # parts: sinh²(d/2) = sinh²((a−b)/2) + sinh a·sinh b·sin²(θ/2), free of cancellation far out
        p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
        sp, sq = np.linalg.norm(p[..., :-1], axis=-1), np.linalg.norm(q[..., :-1], axis=-1)
        up = p[..., :-1] / np.where(sp > 0, sp, 1.0)[..., None]
        uq = q[..., :-1] / np.where(sq > 0, sq, 1.0)[..., None]
        half_chord = 0.5 * np.linalg.norm(up - uq, axis=-1)
        radial = np.sinh(0.5 * (np.arcsinh(sp) - np.arcsinh(sq)))
        return 2.0 * np.arcsinh(np.sqrt(radial ** 2 + sp * sq * half_chord ** 2)) / self.scale

    def tangent_at_base(self, direction: np.ndarray) -> np.ndarray:
        direction = np.asarray(direction, dtype=float)
        return np.concatenate([direction, np.zeros(direction.shape[:-1] + (1,))], axis=-1)

    def tangent_norm(self, p: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(0.0, self.lorentz(tangent, tangent)))

    def geodesic_point(self, p: np.ndarray, tangent: np.ndarray, t: typing.Any) -> np.ndarray:
        st = self.scale * np.asarray(t, dtype=float)[..., None]
        return np.cosh(st) * p + np.sinh(st) * tangent

    def segment_points(self, p: np.ndarray, q: np.ndarray, fractions: np.ndarray) -> np.ndarray:
        fractions = np.asarray(fractions, dtype=float)[:, None]
        length = float(self.distance(p, q)) * self.scale
        if length < 1e-12:
            return np.broadcast_to(p, (len(fractions), self.ambient_dim)).copy()
        return (np.sinh((1 - fractions) * length) * p + np.sinh(fractions * length) * q) / math.sinh(length)

    def horosphere_volume(self, radius: float) -> float:
        # horospheres are flat: a point at horospherical distance x from p lies at distance ρ with
        # cosh(√|κ|ρ) = 1 + |κ|x²/2
        chord = 2.0 * math.sinh(self.scale * radius / 2.0) / self.scale
        return ball_volume(self.dim - 1, chord)


class EuclideanSpace(DistanceOracle):
    def __init__(self, dim: int):
        self.dim = dim
        self.ambient_dim = dim

    def basepoint(self) -> np.ndarray:
        return np.zeros(self.dim)

    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.asarray(p) - np.asarray(q), axis=-1)

    def tangent_at_base(self, direction: np.ndarray) -> np.ndarray:
        return np.asarray(direction, dtype=float)

    def tangent_norm(self, p: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        return np.linalg.norm(tangent, axis=-1)

    def geodesic_point(self, p: np.ndarray, tangent: np.ndarray, t: typing.Any) -> np.ndarray:
        return p + np.asarray(t, dtype=float)[..., None] * tangent

    def segment_points(self, p: np.ndarray, q: np.ndarray, fractions: np.ndarray) -> np.ndarray:
        fractions = np.asarray(fractions, dtype=float)[:, None]
        return (1 - fractions) * p + fractions * q


class ProductSpace(DistanceOracle):
    """
    Riemannian product; a point is the concatenation of its factor points.
    """

    def __init__(self, factors: typing.Sequence[DistanceOracle]):
        self.factors = tuple(factors)
        self.dim = sum(factor.dim for factor in self.factors)
        self.ambient_dim = sum(factor.ambient_dim for factor in self.factors)
        self._points = np.cumsum([0] + [factor.ambient_dim for factor in self.factors])
        self._tangents = np.cumsum([0] + [factor.dim for factor in self.factors])

    def split(self, point: np.ndarray) -> typing.List[np.ndarray]:
        return [point[..., start:stop] for start, stop in zip(self._points[:-1], self._points[1:])]

    def split_direction(self, direction: np.ndarray) -> typing.List[np.ndarray]:
        return [direction[..., start:stop] for start, stop in zip(self._tangents[:-1], self._tangents[1:])]

    def basepoint(self) -> np.ndarray:
        return np.concatenate([factor.basepoint() for factor in self.factors])

    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        squared = sum(factor.distance(a, b) ** 2
                      for factor, a, b in zip(self.factors, self.split(p), self.split(q)))
        return np.sqrt(squared)

    def tangent_at_base(self, direction: np.ndarray) -> np.ndarray:
        direction = np.asarray(direction, dtype=float)
        return np.concatenate([factor.tangent_at_base(part)
                               for factor, part in zip(self.factors, self.split_direction(direction))], axis=-1)

    def tangent_norm(self, p: np.ndarray, tangent: np.ndarray) -> np.ndarray:
        squared = sum(factor.tangent_norm(a, u) ** 2
                      for factor, a, u in zip(self.factors, self.split(p), self.split(tangent)))
        return np.sqrt(squared)

    def geodesic_point(self, p: np.ndarray, tangent: np.ndarray, t: typing.Any) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        parts = []
        for factor, a, u in zip(self.factors, self.split(p), self.split(tangent)):
            # each factor moves along its own geodesic with speed equal to its share of the tangent
            speed = factor.tangent_norm(a, u)
            safe = np.where(speed > 1e-15, speed, 1.0)[..., None]
            moving = factor.geodesic_point(a, u / safe, t * speed)
            parts.append(np.where((speed > 1e-15)[..., None], moving, np.broadcast_to(a, moving.shape)))
        return np.concatenate(parts, axis=-1)

    def segment_points(self, p: np.ndarray, q: np.ndarray, fractions: np.ndarray) -> np.ndarray:
        return np.concatenate([factor.segment_points(a, b, fractions)
                               for factor, a, b in zip(self.factors, self.split(p), self.split(q))], axis=-1)

"""
Jacobi operator fields along a single geodesic.

A `CurvatureField` is what every numerical routine in this package consumes:
the map t ↦ R(t), with R(t)w = R(w, ċ(t))ċ(t), expressed in a parallel
orthonormal frame of the normal bundle of a unit speed geodesic.
"""
import dataclasses
import math
import typing

import numpy as np
from scipy.linalg import null_space

from harmonic_rank.exceptions import OracleUnavailable


Operator = typing.Callable[[float], np.ndarray]


@dataclasses.dataclass(frozen=True)
class CurvatureBlock:
    """
    A scalar curvature function κ(t) = base + amplitude·sin(frequency·t + phase).
    """

    base: float
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.base + self.amplitude * math.sin(self.frequency * t + self.phase)

    @property
    def lower(self) -> float:
        return self.base - abs(self.amplitude)

    @property
    def upper(self) -> float:
        return self.base + abs(self.amplitude)


class ConstantOperator:
    def __init__(self, matrix: np.ndarray):
        matrix = np.array(matrix, dtype=float)
        matrix.setflags(write=False)
        self.matrix = matrix

    def __call__(self, t: float) -> np.ndarray:
        return self.matrix


class DiagonalOperator:
    def __init__(self, blocks: typing.Sequence[CurvatureBlock]):
        self.blocks = tuple(blocks)

    def __call__(self, t: float) -> np.ndarray:
        return np.diag([block(t) for block in self.blocks])


@dataclasses.dataclass(frozen=True, eq=False)
class CurvatureField:
    """
    The Jacobi operator along one geodesic.

    Fields compare by identity: trajectories computed on the same field object
    can be combined (Wronskians), trajectories on different objects cannot.
    """

    operator: Operator
    dim_normal: int
    bound: float  #: β with −β²·Id ≤ R(t) ≤ 0
    direction: np.ndarray  #: unit initial direction in model coordinates
    frame: np.ndarray  #: initial parallel frame, one model coordinate column per normal direction
    horizon: float = math.inf
    shift: float = 0.0

    def evaluate(self, t: float) -> np.ndarray:
        """
        Evaluate R(t).

        :param t: time along the (possibly re-based) geodesic
        :returns: the symmetric ``(dim_normal, dim_normal)`` operator
        :raises OracleUnavailable: when *t* lies beyond the horizon the field
            was constructed for
        """
        s = t + self.shift
        if abs(s) > self.horizon * (1 + 1e-12):
            raise OracleUnavailable(f'time {s} outside of field horizon {self.horizon}', kind='horizon')
        return self.operator(s)

    def shifted(self, u: float) -> 'CurvatureField':
        """
        Re-base the field at time *u*: the result evaluates R(t + u), the
        Jacobi operator along the geodesic of φ^u(v).
        """
        return dataclasses.replace(self, shift=self.shift + u)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.operator, ConstantOperator)

    def ricci_trace(self, t: float) -> float:
        """
        tr R(t), equal to −Ric(ċ, ċ); constant along geodesics of Einstein
        manifolds.
        """
        return float(np.trace(self.evaluate(t)))


def complement(vector: np.ndarray) -> np.ndarray:
    """
    Orthonormal basis of the orthogonal complement of a (unit) vector, as
    columns.
    """
    return null_space(np.atleast_2d(vector))

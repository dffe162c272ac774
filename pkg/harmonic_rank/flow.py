"""
The derivative of the geodesic flow in the Sasaki metric and its invariant
splitting into parallel, central, stable and unstable distributions.

Tangent vectors to the unit tangent bundle at v are represented along the
geodesic of v: the horizontal part as normal coordinates in the field's
parallel frame followed by the coefficient λ of v itself, the vertical part
as normal coordinates. The derivative acts by Jacobi evolution:
Dφ^t(x + λv, y) = (J(t) + λċ(t), J'(t)) with J(0) = x, J'(0) = y.
"""
import dataclasses
from enum import Enum
import logging
import math
import typing

import numpy as np
from scipy.linalg import null_space, orth, subspace_angles

from harmonic_rank.exceptions import DisagreementWithRankKernel, EmptyKernel, EmptySubspace
from harmonic_rank.jacobi import asymptotic_tensor, DEFAULT_SETTINGS, fundamental_tensor, integrate_jacobi, \
    JacobiSettings, Side, time_grid
from harmonic_rank.models import Direction
from harmonic_rank.rank import field_for, rank_of, RankReport, Subject


LOG = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class SasakiVector:
    xi1: np.ndarray  #: horizontal part: n−1 normal coordinates, then the coefficient λ of the flow direction
    xi2: np.ndarray  #: vertical part: n−1 normal coordinates

    @classmethod
    def of(cls, x: typing.Any, y: typing.Any = None, along: float = 0.0) -> 'SasakiVector':
        x = np.asarray(x, dtype=float)
        y = np.zeros_like(x) if y is None else np.asarray(y, dtype=float)
        return cls(np.append(x, along), y)

    @classmethod
    def from_array(cls, values: np.ndarray) -> 'SasakiVector':
        """
        Split a stacked ``(2n−1)``-vector into its horizontal and vertical
        parts.
        """
        values = np.asarray(values, dtype=float)
        rows = (len(values) - 1) // 2
        return cls(values[:rows + 1], values[rows + 1:])

    @property
    def normal(self) -> np.ndarray:
        return self.xi1[:-1]

    @property
    def along(self) -> float:
        return float(self.xi1[-1])

    @property
    def norm(self) -> float:
        return math.sqrt(float(self.xi1 @ self.xi1 + self.xi2 @ self.xi2))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.xi1, self.xi2])


def flow_derivative(model: Subject,
                    seed: Direction,
                    xi: SasakiVector,
                    t: float,
                    *,
                    settings: JacobiSettings = DEFAULT_SETTINGS) -> SasakiVector:
    """
    Apply Dφ^t to *xi*.

    :param model: a built model or a Jacobi operator field
    :param seed: direction descriptor, ignored for fields
    :param xi: tangent vector at v
    :param t: flow time
    :param settings: numerical settings
    :returns: the image tangent vector at φ^t(v), in the parallel frame
    """
    if t == 0 or not (np.any(xi.normal) or np.any(xi.xi2)):
        return xi

    field = field_for(model, seed)
    J = integrate_jacobi(field, xi.normal, xi.xi2, [min(0.0, t), max(0.0, t)], t0=0.0, settings=settings)
    value, derivative = J.true_value(t)
    return SasakiVector(np.append(value[:, 0], xi.along), derivative[:, 0])


class Subspace(Enum):
    STABLE = 'stable'
    UNSTABLE = 'unstable'
    CENTRAL = 'central'


@dataclasses.dataclass(frozen=True)
class SplittingFrame:
    """
    Orthonormal bases (as columns of stacked Sasaki coordinates) of the
    invariant distributions at v.
    """

    Ep: np.ndarray
    Ec: np.ndarray
    Es: np.ndarray
    Eu: np.ndarray
    kernel: np.ndarray  #: 𝓛(v) in the parallel frame
    complement: np.ndarray  #: 𝓛(v)^⊥ ∩ v^⊥ in the parallel frame
    report: RankReport
    no_focal_identity: bool  #: 𝓛(v) = ker U'_v(0) ∩ ker S'_v(0)

    @property
    def dims(self) -> typing.Dict[str, int]:
        return {name: getattr(self, name).shape[1] for name in ('Ep', 'Ec', 'Es', 'Eu')}

    @property
    def spans(self) -> bool:
        """
        Whether Ec ⊕ Es ⊕ Eu has full numerical rank 2n − 1.
        """
        stacked = np.hstack([self.Ec, self.Es, self.Eu])
        return int(np.linalg.matrix_rank(stacked, tol=1e-8)) == stacked.shape[0] == stacked.shape[1]

    def basis(self, subspace: typing.Union[Subspace, str]) -> np.ndarray:
        return {
            Subspace.STABLE: self.Es,
            Subspace.UNSTABLE: self.Eu,
            Subspace.CENTRAL: self.Ec,
        }[Subspace(subspace)]


def _stack(horizontal: np.ndarray, along: np.ndarray, vertical: np.ndarray) -> np.ndarray:
    # columns of stacked Sasaki coordinates
    return np.vstack([horizontal, along, vertical])


def _orthonormal(columns: np.ndarray) -> np.ndarray:
    if columns.shape[1] == 0:
        return columns
    return orth(columns)


def build_splitting(model: Subject,
                    seed: Direction = None,
                    tol: typing.Optional[float] = None,
                    *,
                    eps: float = 1e-6,
                    settings: JacobiSettings = DEFAULT_SETTINGS) -> SplittingFrame:
    """
    Construct E^p, E^c, E^s and E^u at v from the rank kernel 𝓛(v) and the
    limit slopes U'_v(0), S'_v(0).

    :raises AmbiguousKernel: when the rank cannot be determined
    """
    field = field_for(model, seed)
    report = rank_of(field, tol=tol, eps=eps, radii=[1.0], settings=settings)
    kernel = report.kernel
    rows, k = kernel.shape
    complement = null_space(kernel.T) if k else np.eye(rows)

    no_focal = bool(not k or max(np.linalg.norm(report.unstable @ kernel, ord=2),
                                 np.linalg.norm(report.stable @ kernel, ord=2)) < math.sqrt(eps))
    if not no_focal:
        LOG.warning('rank kernel differs from ker U\'_v(0) ∩ ker S\'_v(0)')

    flow_direction = _stack(np.zeros((rows, 1)), np.ones((1, 1)), np.zeros((rows, 1)))
    parallel = np.hstack([_stack(kernel, np.zeros((1, k)), np.zeros((rows, k))), flow_direction])
    central = np.hstack([parallel, _stack(np.zeros((rows, k)), np.zeros((1, k)), kernel)])
    m = complement.shape[1]
    stable = _stack(complement, np.zeros((1, m)), report.stable @ complement)
    unstable = _stack(complement, np.zeros((1, m)), report.unstable @ complement)

    frame = SplittingFrame(Ep=_orthonormal(parallel), Ec=_orthonormal(central), Es=_orthonormal(stable),
                           Eu=_orthonormal(unstable), kernel=kernel, complement=complement, report=report,
                           no_focal_identity=no_focal)
    LOG.debug(f'splitting dimensions {frame.dims}')
    return frame


@dataclasses.dataclass(frozen=True)
class ExponentFit:
    subspace: Subspace
    rate: float  #: slowest fitted rate α̂ (growth rate for central directions)
    rates: typing.Tuple[float, ...]  #: fitted rate per sampled direction
    a: float  #: smallest overshoot constant making the sandwich hold with the slowest rate
    residual: float  #: largest RMS deviation of log-norms from their linear fits
    envelope: typing.Optional[float]  #: c with ‖Dφ^t ξ‖ ≤ c‖ξ‖(|t| + 1), central directions only
    grid: np.ndarray
    log_norms: np.ndarray  #: log(‖Dφ^t ξ‖/‖ξ‖), one row per sampled direction

    def columns(self) -> typing.Dict[str, np.ndarray]:
        columns = {'t': self.grid}
        columns.update({f'log_norm[{index}]': row for index, row in enumerate(self.log_norms)})
        return columns


def _sample_directions(basis: np.ndarray, count: int, seed: int) -> np.ndarray:
    # the basis directions themselves, then random unit combinations
    combinations = np.random.default_rng(seed).standard_normal((basis.shape[1], count))
    combinations /= np.linalg.norm(combinations, axis=0)
    return np.hstack([np.eye(basis.shape[1]), combinations])


def exponent_fit(model: Subject,
                 seed: Direction = None,
                 subspace: typing.Union[Subspace, str] = Subspace.STABLE,
                 T: float = 10.0,
                 n_samples: int = 8,
                 *,
                 sample_seed: int = 0,
                 step: float = 0.25,
                 settings: JacobiSettings = DEFAULT_SETTINGS) -> ExponentFit:
    """
    Fit exponential rates of ‖Dφ^t ξ‖ for ξ in a subspace of the splitting.

    Rates are least-squares slopes of log‖Dφ^t ξ‖ over [T/2, T]. For stable
    directions the overshoot constant a is the smallest value with
    ‖Dφ^t ξ‖ ≤ a‖ξ‖e^{−αt} for t ≥ 0 and ‖Dφ^t ξ‖ ≥ a⁻¹‖ξ‖e^{−αt} for t ≤ 0,
    α the slowest rate; unstable directions mirror this. Central directions
    report the envelope constant c of ‖Dφ^t ξ‖ ≤ c‖ξ‖(|t| + 1).

    :param model: a built model or a Jacobi operator field
    :param seed: direction descriptor, ignored for fields
    :param subspace: which subspace to sample
    :param T: time horizon
    :param n_samples: number of random directions besides the basis
        directions
    :param sample_seed: seed of the random directions
    :param step: spacing of the time grid
    :param settings: numerical settings
    :raises EmptySubspace: when the subspace is trivial
    """
    subspace = Subspace(subspace)
    field = field_for(model, seed)
    splitting = build_splitting(field, settings=settings)
    grid = time_grid(-T, T, step)

    if subspace is Subspace.CENTRAL:
        rows, k = splitting.kernel.shape
        # central vectors (x + λv, y), x, y ∈ 𝓛(v): coordinates over kernel, λ and kernel again
        samples = _sample_directions(np.eye(2 * k + 1), n_samples, sample_seed)
        norms = []
        for coefficients in samples.T:
            xi = SasakiVector.of(splitting.kernel @ coefficients[:k], splitting.kernel @ coefficients[k + 1:],
                                 along=float(coefficients[k]))
            if np.any(xi.normal) or np.any(xi.xi2):
                J = integrate_jacobi(field, xi.normal, xi.xi2, grid, t0=0.0, settings=settings)
                values = np.array([math.hypot(xi.along, *map(np.linalg.norm, J.true_value(t))) for t in grid])
                norms.append(values / xi.norm)
            else:
                norms.append(np.ones_like(grid))
    else:
        basis = splitting.complement
        if basis.shape[1] == 0:
            raise EmptySubspace(f'{subspace.value} subspace is trivial', subspace=subspace.value)
        side = Side.S if subspace is Subspace.STABLE else Side.U
        tensor = asymptotic_tensor(field, side, grid=grid, settings=settings)
        slope = splitting.report.stable if side is Side.S else splitting.report.unstable
        # eigenvectors of the limit operator first: rates are sorted along them
        _, eigenvectors = np.linalg.eigh(basis.T @ (splitting.report.unstable - splitting.report.stable) @ basis)
        samples = _sample_directions(basis @ eigenvectors, n_samples, sample_seed)
        norms = []
        for coefficients in samples.T:
            x = basis @ eigenvectors @ coefficients
            start = math.hypot(np.linalg.norm(x), np.linalg.norm(slope @ x))
            values = []
            for Y, Yp, log_scale in zip(tensor.Y, tensor.Yp, tensor.log_scale):
                values.append(log_scale + math.log(math.hypot(np.linalg.norm(Y @ x), np.linalg.norm(Yp @ x))))
            norms.append(np.exp(np.array(values)) / start)

    log_norms = np.log(np.array(norms))
    fitted = (grid >= T / 2) & (grid <= T)
    rates, residual = [], 0.0
    for row in log_norms:
        coefficients, residuals, *_ = np.polyfit(grid[fitted], row[fitted], 1, full=True)
        rates.append(float(-coefficients[0] if subspace is Subspace.STABLE else coefficients[0]))
        residual = max(residual, math.sqrt(float(residuals[0]) / fitted.sum()) if len(residuals) else 0.0)

    if subspace is Subspace.CENTRAL:
        rate = max(rates)
        envelope = float((np.exp(log_norms) / (np.abs(grid) + 1)).max())
        return ExponentFit(subspace=subspace, rate=rate, rates=tuple(rates), a=math.nan, residual=residual,
                           envelope=envelope, grid=grid, log_norms=log_norms)

    rate = min(rates)
    # stable: log‖Dφ^t ξ‖ + αt ≤ log a for t ≥ 0, ≥ −log a for t ≤ 0; unstable mirrors in t
    sign = 1.0 if subspace is Subspace.STABLE else -1.0
    shifted = log_norms + sign * rate * grid
    forward = sign * grid >= 0
    overshoot = max(float(shifted[:, forward].max()), float(-shifted[:, ~forward].min()) if (~forward).any() else 0.0)
    return ExponentFit(subspace=subspace, rate=rate, rates=tuple(rates), a=math.exp(max(overshoot, 0.0)),
                       residual=residual, envelope=None, grid=grid, log_norms=log_norms)


def parallel_field_detect(model: Subject,
                          seed: Direction = None,
                          T: float = 8.0,
                          tol: float = 1e-9,
                          *,
                          samples: int = 65,
                          check: bool = True,
                          eps: float = 1e-6,
                          settings: JacobiSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """
    Basis (as columns) of the directions x with R(t)x = 0 for all sampled
    t ∈ [−T, T]: the initial values of parallel Jacobi fields.

    :param model: a built model or a Jacobi operator field
    :param seed: direction descriptor, ignored for fields
    :param T: half-width of the sampled interval
    :param tol: relative singular value threshold of the common kernel
    :param samples: number of sample times
    :param check: compare the dimension with the rank kernel
    :param eps: rank threshold for the comparison
    :param settings: numerical settings for the comparison
    :raises DisagreementWithRankKernel: when *check* is set and the dimensions
        differ
    """
    if T <= 0:
        raise ValueError(f'sampling interval should be positive, got {T}')

    field = field_for(model, seed)
    stacked = np.vstack([field.evaluate(t) for t in np.linspace(-T, T, samples)])
    _, singular, vh = np.linalg.svd(stacked)
    rank = int((singular > tol * max(1.0, singular[0] if len(singular) else 0.0)).sum())
    basis = vh[rank:].T

    if check:
        expected = rank_of(field, eps=eps, radii=[1.0], settings=settings).kernel_dim
        if expected != basis.shape[1]:
            raise DisagreementWithRankKernel(f'{basis.shape[1]} parallel directions detected on [−{T:g}, {T:g}], '
                                             f'rank kernel has dimension {expected}',
                                             detected=basis.shape[1], expected=expected)
    return basis


@dataclasses.dataclass(frozen=True)
class LinearGrowth:
    grid: np.ndarray
    residuals: np.ndarray  #: |‖A_v(t)x‖ − t‖x‖|, one row per t, one column per vector
    tol: float

    @property
    def residual(self) -> float:
        return float(self.residuals.max())

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residuals < self.tol * np.maximum(self.grid, 1.0)[:, None]))


def linear_growth_check(model: Subject,
                        seed: Direction = None,
                        x: typing.Any = None,
                        grid: typing.Any = None,
                        *,
                        tol: float = 1e-6,
                        eps: float = 1e-6,
                        settings: JacobiSettings = DEFAULT_SETTINGS) -> LinearGrowth:
    """
    Verify ‖A_v(t)x‖ = t‖x‖ for x ∈ 𝓛(v).

    :param x: a kernel vector or columns of kernel vectors, defaults to a
        basis of the rank kernel
    :raises EmptyKernel: when v has rank one
    """
    field = field_for(model, seed)
    if x is None:
        x = rank_of(field, eps=eps, radii=[1.0], settings=settings).kernel
        if not x.shape[1]:
            raise EmptyKernel('rank one direction, no parallel Jacobi fields')
    x = np.asarray(x, dtype=float)
    x = x[:, None] if x.ndim == 1 else x

    grid = time_grid(0.5, 10.0, 0.5) if grid is None else np.asarray(grid, dtype=float)
    A = fundamental_tensor(field, grid, 'A', settings=settings)
    lengths = np.linalg.norm(x, axis=0)
    residuals = np.array([np.abs(np.linalg.norm(A.true_value(t)[0] @ x, axis=0) - t * lengths) for t in grid])
    return LinearGrowth(grid=grid, residuals=residuals, tol=tol)


def invariance_angles(model: Subject,
                      seed: Direction = None,
                      t: float = 2.0,
                      *,
                      settings: JacobiSettings = DEFAULT_SETTINGS) -> typing.Dict[str, np.ndarray]:
    """
    Principal angles between Dφ^t(E^s(v)) (resp. E^u) and E^s(φ^t v)
    (resp. E^u), the latter built from the re-based field.

    :returns: mapping of ``'stable'`` and ``'unstable'`` to principal angles
        in radians, empty for trivial subspaces
    """
    field = field_for(model, seed)
    here = build_splitting(field, settings=settings)
    there = build_splitting(field.shifted(t), settings=settings)

    angles = {}
    for name, before, after in (('stable', here.Es, there.Es), ('unstable', here.Eu, there.Eu)):
        if before.shape[1] == 0:
            angles[name] = np.zeros(0)
            continue
        images = np.column_stack([flow_derivative(field, None, SasakiVector.from_array(column), t,
                                                  settings=settings).to_array()
                                  for column in before.T])
        angles[name] = subspace_angles(images, after)
    return angles

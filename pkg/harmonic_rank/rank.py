"""
Volume density, horosphere mean curvature, rank and the certificates built on
them.

All operations accept either a built `Model` together with a direction
descriptor, or a `CurvatureField` directly.
"""
import dataclasses
from enum import Enum
import logging
import math
import typing

import numpy as np

from harmonic_rank.exceptions import AmbiguousKernel, EmptyKernel, FlatModel
from harmonic_rank.fields import CurvatureField
from harmonic_rank.jacobi import asymptotic_slope, boundary_slopes, DEFAULT_SETTINGS, fundamental_tensor, \
    JacobiSettings, LimitSlope, Side, time_grid
from harmonic_rank.models import Direction, Model


LOG = logging.getLogger(__name__)

#: below this fitted h a model counts as flat
FLAT_H = 1e-3

Subject = typing.Union[Model, CurvatureField]


def field_for(model: Subject, seed: Direction = None) -> CurvatureField:
    if isinstance(model, CurvatureField):
        return model
    return model.field(seed)


def default_density_grid(tmin: float = 0.25, tmax: float = 24.0, step: float = 0.25) -> np.ndarray:
    return time_grid(tmin, tmax, step)


def _final_quarter(grid: np.ndarray) -> slice:
    return slice(len(grid) - max(4, len(grid) // 4), None)


@dataclasses.dataclass(frozen=True)
class DensityProfile:
    """
    The volume density f(t) = det A_v(t) along one geodesic, stored as log f.
    """

    grid: np.ndarray
    log_f: np.ndarray
    logderiv: np.ndarray  #: f'/f = tr(A'A⁻¹)
    h: float  #: fitted limit of f'/f
    k: float  #: fitted coefficient of 1/t in f'/f: polynomial degree or polynomial factor
    spread: float  #: spread of f'/f − k/t over the final quarter of the grid
    dim: int

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)

    @property
    def log_F(self) -> np.ndarray:  # noqa: N802
        return self.log_f - self.h * self.grid

    @property
    def F(self) -> np.ndarray:  # noqa: N802
        """
        F(t) = f(t)·e^{−ht}.
        """
        return np.exp(self.log_F)

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.log_f) > 0))

    def F_nondecreasing(self, tol: float = 1e-9) -> bool:  # noqa: N802
        F = self.F
        return bool(np.all(np.diff(F) >= -tol * np.maximum(1.0, np.abs(F[1:]))))

    def columns(self) -> typing.Dict[str, np.ndarray]:
        return {'t': self.grid, 'f': self.f, 'log_f': self.log_f, 'logderiv': self.logderiv, 'F': self.F}


def density_profile(model: Subject,
                    seed: Direction = None,
                    grid: typing.Any = None,
                    *,
                    settings: JacobiSettings = DEFAULT_SETTINGS) -> DensityProfile:
    """
    Compute the volume density f(t) = det A_v(t) and the fitted mean
    curvature h of horospheres.

    The logarithmic derivative is fitted as h + k/t over the final quarter of
    the grid: k is the degree of polynomial growth for flat models and the
    degree of the polynomial factor in f ~ t^k·e^{ht} for higher rank.

    :param model: a built model or a Jacobi operator field
    :param seed: direction descriptor, ignored for fields
    :param grid: increasing sample times, all positive; defaults to
        `default_density_grid`
    :param settings: numerical settings
    :returns: the density profile
    :raises ValueError: when the grid includes non-positive times
    """
    grid = default_density_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid[0] <= 0:
        raise ValueError(f'density grid should start after 0, got {grid[0]}')

    field = field_for(model, seed)
    A = fundamental_tensor(field, grid, 'A', settings=settings)

    sign, logdet = np.linalg.slogdet(A.Y)
    if np.any(sign <= 0):
        LOG.warning('A_v(t) not positive definite on the density grid')
    log_f = field.dim_normal * A.log_scale + logdet
    logderiv = np.array([np.trace(np.linalg.solve(Y.T, Yp.T).T) for Y, Yp in zip(A.Y, A.Yp)])

    tail = _final_quarter(grid)
    design = np.column_stack([np.ones_like(grid[tail]), 1.0 / grid[tail]])
    (h, k), *_ = np.linalg.lstsq(design, logderiv[tail], rcond=None)
    spread = float(np.ptp(logderiv[tail] - k / grid[tail]))
    LOG.debug(f'density fit: h={h:.10g}, k={k:.4g}, spread {spread:.3g}')

    return DensityProfile(grid=grid, log_f=log_f, logderiv=logderiv, h=float(h), k=float(k), spread=spread,
                          dim=field.dim_normal + 1)


@dataclasses.dataclass(frozen=True)
class HarmonicityReport:
    deviation: float  #: max over t of the relative spread of f across seeds
    tol: float
    h_values: typing.Tuple[float, ...]
    mean_curvatures: typing.Optional[typing.Tuple[float, ...]] = None  #: tr U'_v(0) per seed, when requested

    @property
    def passed(self) -> bool:
        return self.deviation < self.tol


def harmonicity_check(model: Model,
                      seeds: typing.Sequence[Direction],
                      grid: typing.Any = None,
                      tol: float = 1e-4,
                      *,
                      mean_curvature: bool = False,
                      settings: JacobiSettings = DEFAULT_SETTINGS) -> HarmonicityReport:
    """
    Compare the volume density across directions: harmonic manifolds have a
    density independent of the direction.

    :param model: a built model
    :param seeds: at least two direction descriptors
    :param grid: density grid, see `density_profile`
    :param tol: tolerance on the relative deviation of f
    :param mean_curvature: also compute tr U'_v(0) per seed
    :param settings: numerical settings
    :returns: the deviation report
    """
    if len(seeds) < 2:
        raise ValueError('harmonicity check needs at least two directions')

    profiles = [density_profile(model, seed, grid, settings=settings) for seed in seeds]
    log_f = np.array([profile.log_f for profile in profiles])
    deviation = float(np.expm1(np.ptp(log_f, axis=0)).max())

    traces = None
    if mean_curvature:
        traces = tuple(float(np.trace(asymptotic_slope(model.field(seed), Side.U, settings=settings).slope))
                       for seed in seeds)

    report = HarmonicityReport(deviation=deviation, tol=tol, h_values=tuple(profile.h for profile in profiles),
                               mean_curvatures=traces)
    LOG.debug(f'harmonicity of {model.spec.label} over {len(seeds)} directions: deviation {deviation:.3g}')
    return report


def limit_slopes(field: CurvatureField,
                 tol: typing.Optional[float] = None,
                 settings: JacobiSettings = DEFAULT_SETTINGS) -> typing.Tuple[LimitSlope, LimitSlope]:
    """
    U'_v(0) and S'_v(0), as horizon doubling outcomes.
    """
    return (asymptotic_slope(field, Side.U, tol, settings=settings),
            asymptotic_slope(field, Side.S, tol, settings=settings))


@dataclasses.dataclass(frozen=True)
class FConsistency:
    grid: np.ndarray
    F: np.ndarray
    determinants: np.ndarray  #: det(U'_v(0) − S'_{v,t}(0))
    residuals: np.ndarray  #: |F(t)·det(U'_v(0) − S'_{v,t}(0)) − 1|
    tol: float
    increasing: bool  #: whether F is strictly increasing
    lower_constant: float  #: a = 1/det(U'_v(0) − S'_{v,1}(0)), a·e^{ht} ≤ f(t) for t ≥ 1

    @property
    def residual(self) -> float:
        return float(self.residuals.max())

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


def F_consistency(model: Subject,  # noqa: N802
                  seed: Direction = None,
                  grid: typing.Any = None,
                  tol: float = 1e-6,
                  *,
                  settings: JacobiSettings = DEFAULT_SETTINGS) -> FConsistency:
    """
    Check F(t) = f(t)·e^{−ht} = 1/det(U'_v(0) − S'_{v,t}(0)).

    :raises FlatModel: when h vanishes and both sides degenerate
    """
    field = field_for(model, seed)
    profile = density_profile(field, grid=grid, settings=settings)
    if profile.h < FLAT_H:
        raise FlatModel(f'F is degenerate for h={profile.h:.3g}', h=profile.h)

    unstable = asymptotic_slope(field, Side.U, settings=settings).slope
    finite = boundary_slopes(field, profile.grid, Side.S, settings=settings)
    determinants = np.array([np.linalg.det(unstable - slope) for slope in finite])
    F = profile.F
    residuals = np.abs(F * determinants - 1.0)

    lower = 1.0 / float(np.linalg.det(unstable - boundary_slopes(field, [1.0], Side.S, settings=settings)[0]))
    increasing = bool(np.all(np.diff(F) > 0))
    if not increasing:
        LOG.warning('F(t) not strictly increasing on the grid')

    return FConsistency(grid=profile.grid, F=F, determinants=determinants, residuals=residuals, tol=tol,
                        increasing=increasing, lower_constant=lower)


@dataclasses.dataclass(frozen=True)
class MinimalGrowth:
    limit: float  #: estimated lim F
    bound: float  #: ((n−1)/(2h))^{n−1}
    tol: float
    equality_case: typing.Optional[bool] = None  #: U'_v(0) − S'_v(0) = 2h/(n−1)·Id, when the operator is given

    @property
    def gap(self) -> float:
        return self.limit - self.bound

    @property
    def equality(self) -> bool:
        return abs(self.gap) < self.tol


def _limit_estimate(values: np.ndarray) -> float:
    # Aitken's Δ² on the last three samples
    x0, x1, x2 = values[-3:]
    denominator = x2 - 2 * x1 + x0
    if abs(denominator) < 1e-14 * max(1.0, abs(x2)):
        return float(x2)
    return float(x2 - (x2 - x1) ** 2 / denominator)


def minimal_growth_gap(profile: DensityProfile,
                       n: typing.Optional[int] = None,
                       tol: float = 1e-4,
                       *,
                       limit_operator: typing.Optional[np.ndarray] = None) -> MinimalGrowth:
    """
    Compare lim F against the lower bound ((n−1)/(2h))^{n−1}, attained
    exactly by constant negative curvature.

    :param profile: a density profile
    :param n: dimension of the manifold, defaults to the profile's
    :param tol: tolerance on the gap
    :param limit_operator: U'_v(0) − S'_v(0), to flag the equality case
        2h/(n−1)·Id
    :raises FlatModel: when h vanishes
    """
    n = profile.dim if n is None else n
    if profile.h < FLAT_H:
        raise FlatModel(f'no minimal growth bound for h={profile.h:.3g}', h=profile.h)

    limit = _limit_estimate(profile.F)
    bound = ((n - 1) / (2 * profile.h)) ** (n - 1)
    equality_case = None
    if limit_operator is not None:
        equality_case = bool(np.allclose(limit_operator, 2 * profile.h / (n - 1) * np.eye(n - 1), atol=tol))

    growth = MinimalGrowth(limit=limit, bound=bound, tol=tol, equality_case=equality_case)
    if growth.gap < -tol:
        LOG.warning(f'lim F = {limit:.6g} below the minimal growth bound {bound:.6g}')
    return growth


class GrowthClass(Enum):
    POLYNOMIAL = 'Polynomial'
    PURELY_EXPONENTIAL = 'PurelyExponential'
    EXPONENTIAL_HIGHER_RANK = 'ExponentialHigherRank'


@dataclasses.dataclass(frozen=True)
class GrowthReport:
    growth: GrowthClass
    h: float
    degree: float  #: polynomial degree, or the polynomial factor for higher rank
    a: typing.Optional[float] = None  #: min F over t ≥ 1, purely exponential growth only
    b: typing.Optional[float] = None  #: max F, purely exponential growth only


def volume_growth_class(profile: DensityProfile, tol: float = 1e-3) -> GrowthReport:
    """
    Classify volume growth as polynomial, purely exponential
    (a·e^{ht} ≤ f ≤ b·e^{ht} for t ≥ 1) or exponential with a polynomial
    factor.

    :param profile: a density profile reaching t ≥ 20
    :param tol: threshold on h and on the relative slope of F over the final
        quarter
    """
    if profile.grid[-1] < 20:
        raise ValueError(f'growth classification needs a profile reaching t ≥ 20, got {profile.grid[-1]:g}')

    if abs(profile.h) < tol:
        return GrowthReport(GrowthClass.POLYNOMIAL, h=profile.h, degree=profile.k)

    tail = _final_quarter(profile.grid)
    # (log F)' ≈ k/t for growth like t^k·e^{ht}
    factor = float(np.polyfit(profile.grid[tail], profile.log_F[tail], 1)[0] * profile.grid[-1])
    if abs(factor) < tol:
        F = profile.F
        return GrowthReport(GrowthClass.PURELY_EXPONENTIAL, h=profile.h, degree=0.0,
                            a=float(F[profile.grid >= 1].min()), b=float(F.max()))
    return GrowthReport(GrowthClass.EXPONENTIAL_HIGHER_RANK, h=profile.h, degree=profile.k)


@dataclasses.dataclass(frozen=True)
class RankReport:
    radii: np.ndarray
    eigen_trace: np.ndarray  #: sorted eigenvalues of U'_v(0) − S'_{v,t}(0), one row per radius
    limit_eigs: np.ndarray  #: sorted eigenvalues of U'_v(0) − S'_v(0)
    kernel: np.ndarray  #: orthonormal basis of the kernel as columns, in the field's frame
    eps: float
    gap: float  #: smallest eigenvalue above minus largest below the threshold
    focal_free: bool  #: U'_v(0) ≥ 0 and S'_v(0) ≤ 0
    trace_monotone: bool
    unstable: np.ndarray  #: U'_v(0)
    stable: np.ndarray  #: S'_v(0)

    @property
    def kernel_dim(self) -> int:
        return self.kernel.shape[1]

    @property
    def rank(self) -> int:
        return self.kernel_dim + 1

    @property
    def beta_positive(self) -> float:
        return float(np.prod(self.limit_eigs[self.kernel_dim:]))

    @property
    def rho(self) -> float:
        """
        Smallest eigenvalue above the threshold (nan when there is none).
        """
        above = self.limit_eigs[self.kernel_dim:]
        return float(above.min()) if len(above) else math.nan


def default_trace_radii(tmin: float = 1.0, tmax: float = 16.0, count: int = 16) -> np.ndarray:
    return np.geomspace(tmin, tmax, count)


def rank_of(model: Subject,
            seed: Direction = None,
            tol: typing.Optional[float] = None,
            eps: float = 1e-6,
            *,
            radii: typing.Any = None,
            settings: JacobiSettings = DEFAULT_SETTINGS) -> RankReport:
    """
    Compute rank(v) = dim ker(U'_v(0) − S'_v(0)) + 1.

    :param model: a built model or a Jacobi operator field
    :param seed: direction descriptor, ignored for fields
    :param tol: Cauchy tolerance of the limit tensors
    :param eps: threshold below which an eigenvalue counts as zero
    :param radii: radii t of the eigenvalue traces of U'_v(0) − S'_{v,t}(0)
    :param settings: numerical settings
    :returns: the rank report
    :raises AmbiguousKernel: when the spectrum has no clean gap around *eps*
    """
    field = field_for(model, seed)
    radii = default_trace_radii() if radii is None else np.asarray(radii, dtype=float)
    unstable, stable = (limit.slope for limit in limit_slopes(field, tol, settings))

    eigs, vectors = np.linalg.eigh(unstable - stable)
    below = eigs < eps
    if below.any() and not below.all():
        gap = float(eigs[~below].min() - eigs[below].max())
        ambiguous = gap < 10 * eps
    elif below.all():
        gap = float(eps - np.abs(eigs).max())
        ambiguous = np.abs(eigs).max() > eps / 10
    else:
        gap = float(eigs.min())
        ambiguous = gap < 10 * eps
    if ambiguous:
        raise AmbiguousKernel(f'no clean eigenvalue gap around {eps:g} in {eigs}', gap=gap)

    kernel_dim = int(below.sum())
    trace = np.array([np.linalg.eigvalsh(unstable - slope) for slope in boundary_slopes(field, radii, Side.S,
                                                                                        settings=settings)])
    # eigenvalues above the threshold decrease towards their limits
    steps = np.diff(trace[:, kernel_dim:], axis=0)
    monotone = bool(np.all(steps <= 1e-9 * np.maximum(1.0, np.abs(trace[1:, kernel_dim:]))))
    if not monotone:
        LOG.warning('eigenvalue trace of the boundary slopes increases')

    focal_free = bool(np.linalg.eigvalsh(unstable).min() >= -eps and np.linalg.eigvalsh(stable).max() <= eps)
    LOG.debug(f'limit eigenvalues {eigs}, kernel dimension {kernel_dim}, gap {gap:.3g}')
    return RankReport(radii=radii, eigen_trace=trace, limit_eigs=eigs, kernel=vectors[:, :kernel_dim], eps=eps,
                      gap=gap, focal_free=focal_free, trace_monotone=monotone, unstable=unstable, stable=stable)


class AnosovVerdict(Enum):
    ANOSOV = 'Anosov'
    DEGENERATE = 'Degenerate'


@dataclasses.dataclass(frozen=True)
class AnosovCertificate:
    rho: float  #: min over directions of the smallest eigenvalue of U'_v(0) − S'_v(0)
    verdict: AnosovVerdict
    bound: float  #: curvature bound β, −β² ≤ K
    rho_tol: float
    minima: typing.Tuple[float, ...]  #: smallest eigenvalue per direction
    within_bound: bool  #: |⟨U'_v(0)x, x⟩| ≤ β and |⟨S'_v(0)x, x⟩| ≤ β for all sampled v


def anosov_certificate(model: Model,
                       seeds: typing.Sequence[Direction],
                       rho_tol: float = 1e-6,
                       *,
                       settings: JacobiSettings = DEFAULT_SETTINGS) -> AnosovCertificate:
    """
    Certify the Anosov property through a uniform lower bound ρ on
    U'_v(0) − S'_v(0) over sampled directions.
    """
    if not seeds:
        raise ValueError('Anosov certificate needs at least one direction')

    minima = []
    extremes = []
    for seed in seeds:
        unstable, stable = (limit.slope for limit in limit_slopes(model.field(seed), settings=settings))
        minima.append(float(np.linalg.eigvalsh(unstable - stable).min()))
        extremes.append(max(np.abs(np.linalg.eigvalsh(unstable)).max(), np.abs(np.linalg.eigvalsh(stable)).max()))

    rho = min(minima)
    within_bound = bool(max(extremes) <= model.bound * (1 + 1e-6) + 1e-9)
    if not within_bound:
        LOG.warning(f'stable or unstable slopes exceed the curvature bound {model.bound:g}')

    return AnosovCertificate(rho=rho,
                             verdict=AnosovVerdict.ANOSOV if rho > rho_tol else AnosovVerdict.DEGENERATE,
                             bound=model.bound,
                             rho_tol=rho_tol,
                             minima=tuple(minima),
                             within_bound=within_bound)


@dataclasses.dataclass(frozen=True)
class ConstRankReport:
    radii: np.ndarray
    values: np.ndarray  #: ⟨(U'_v(0) − S'_{v,t}(0))x, x⟩, one row per radius, one column per kernel vector
    alpha: float
    lower_residual: float  #: largest violation of 1/(α²t) ≤ value
    upper_residual: float  #: largest violation of value ≤ α²/t
    det_residual: float  #: largest relative violation of β/α^{2k} ≤ det·t^k ≤ α^{2k}·β_t
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.lower_residual, self.upper_residual, self.det_residual) < self.tol


def constrank_bounds_check(model: Subject,
                           seed: Direction = None,
                           alpha: float = 1.0,
                           grid: typing.Any = None,
                           *,
                           eps: float = 1e-6,
                           tol: float = 1e-6,
                           settings: JacobiSettings = DEFAULT_SETTINGS) -> ConstRankReport:
    """
    Verify 1/(α²t)·|x|² ≤ ⟨(U'_v(0) − S'_{v,t}(0))x, x⟩ ≤ α²/t·|x|² for kernel
    vectors x and the determinant bounds that follow from it, for t ≥ 1.

    :raises EmptyKernel: when v has rank one
    """
    field = field_for(model, seed)
    report = rank_of(field, eps=eps, radii=[1.0], settings=settings)
    if not report.kernel_dim:
        raise EmptyKernel('rank one direction, no kernel to bound')

    radii = np.asarray(default_trace_radii() if grid is None else grid, dtype=float)
    radii = radii[radii >= 1]
    k = report.kernel_dim
    scale = alpha ** 2

    values, lower, upper, det_residual = [], 0.0, 0.0, 0.0
    for t, slope in zip(radii, boundary_slopes(field, radii, Side.S, settings=settings)):
        operator = report.unstable - slope
        value = np.einsum('ia,ij,ja->a', report.kernel, operator, report.kernel)
        values.append(value)
        lower = max(lower, float((1 / (scale * t) - value).max()))
        upper = max(upper, float((value - scale / t).max()))

        eigs = np.linalg.eigvalsh(operator)
        scaled = np.prod(eigs) * t ** k
        beta_t = float(np.prod(eigs[k:]))
        det_residual = max(det_residual,
                           (report.beta_positive / alpha ** (2 * k) - scaled) / report.beta_positive,
                           (scaled - alpha ** (2 * k) * beta_t) / beta_t)

    return ConstRankReport(radii=radii, values=np.array(values), alpha=alpha, lower_residual=max(lower, 0.0),
                           upper_residual=max(upper, 0.0), det_residual=max(det_residual, 0.0), tol=tol)

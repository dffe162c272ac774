"""
Gromov hyperbolicity estimates, Busemann functions, divergence of geodesics
on spheres and the comparison of spherical cones with horoball regions.

Everything except `divergence_rate` needs a model with a distance oracle.
"""
import dataclasses
from enum import Enum
import logging
import math
import typing

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import gamma, logsumexp

from harmonic_rank.exceptions import NoConvergence
from harmonic_rank.geometry import DistanceOracle
from harmonic_rank.jacobi import DEFAULT_SETTINGS, fundamental_tensor, JacobiSettings, time_grid
from harmonic_rank.models import Direction, Model


LOG = logging.getLogger(__name__)

DEFAULT_SCALES = (4.0, 8.0, 16.0, 32.0)

Geometry = typing.Union[Model, DistanceOracle]


def _oracle(model: Geometry) -> DistanceOracle:
    if isinstance(model, DistanceOracle):
        return model
    return model.require_oracle()


def gromov_product(model: Geometry, x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """
    The Gromov product (x|y)_w = ½(d(x, w) + d(y, w) − d(x, y)).

    :raises OracleUnavailable: for models without a distance oracle
    """
    oracle = _oracle(model)
    return float(0.5 * (oracle.distance(x, w) + oracle.distance(y, w) - oracle.distance(x, y)))


class HyperbolicityVerdict(Enum):
    HYPERBOLIC = 'Hyperbolic'
    NOT_HYPERBOLIC = 'NotHyperbolic'
    INCONCLUSIVE = 'Inconclusive'


def classify(scales: typing.Sequence[float],
             deltas: typing.Sequence[float],
             *,
             stable_change: float = 0.05,
             growth_slope: float = 0.1) -> HyperbolicityVerdict:
    """
    Decide hyperbolicity from δ̂ over increasing scales: stabilization over
    the last doubling means hyperbolic, linear growth means not hyperbolic.
    """
    scales, deltas = np.asarray(scales, dtype=float), np.asarray(deltas, dtype=float)
    if len(scales) < 2:
        return HyperbolicityVerdict.INCONCLUSIVE

    change = (deltas[-1] - deltas[-2]) / deltas[-1] if deltas[-1] > 1e-12 else 0.0
    if change < stable_change:
        return HyperbolicityVerdict.HYPERBOLIC
    if np.polyfit(scales, deltas, 1)[0] > growth_slope:
        return HyperbolicityVerdict.NOT_HYPERBOLIC
    return HyperbolicityVerdict.INCONCLUSIVE


@dataclasses.dataclass(frozen=True)
class DeltaEstimate:
    method: str
    scales: np.ndarray
    delta_hat: np.ndarray  #: running maximum over scales, nondecreasing
    stderr: np.ndarray  #: spread of per-batch maxima
    samples: int
    seed: int

    @property
    def verdict(self) -> HyperbolicityVerdict:
        return classify(self.scales, self.delta_hat)

    def columns(self) -> typing.Dict[str, np.ndarray]:
        return {'scale': self.scales, 'delta_hat': self.delta_hat, 'stderr': self.stderr}


def _sample_points(oracle: DistanceOracle, count: int, seed: np.random.SeedSequence) -> typing.Tuple[np.ndarray,
                                                                                                     np.ndarray]:
    # unit directions and radius fractions in [0, 1], scaled to each s by the caller
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((count, oracle.dim))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    return directions, rng.uniform(0.0, 1.0, count)


def _batches(total: int, batches: int, seed: int) -> typing.Iterator[typing.Tuple[int, np.random.SeedSequence]]:
    # per-batch seeds derive from the batch index only
    sizes = np.full(batches, total // batches)
    sizes[:total % batches] += 1
    for size, child in zip(sizes, np.random.SeedSequence(seed).spawn(batches)):
        if size:
            yield int(size), child


def _scales(scales: typing.Union[float, typing.Sequence[float]]) -> np.ndarray:
    scales = np.sort(np.atleast_1d(np.asarray(scales, dtype=float)))
    if not len(scales) or scales[0] <= 0:
        raise ValueError('scales should be positive')
    return scales


def _summarize(method: str, scales: np.ndarray, per_batch: np.ndarray, samples: int, seed: int) -> DeltaEstimate:
    # per_batch: batches × scales
    delta_hat = np.maximum.accumulate(np.maximum(per_batch.max(axis=0), 0.0))
    stderr = per_batch.std(axis=0, ddof=1) / math.sqrt(len(per_batch)) if len(per_batch) > 1 \
        else np.zeros_like(delta_hat)
    estimate = DeltaEstimate(method=method, scales=scales, delta_hat=delta_hat, stderr=stderr, samples=samples,
                             seed=seed)
    LOG.debug(f'{method} δ̂ {delta_hat} at scales {scales}: {estimate.verdict.value}')
    return estimate


def four_point_defect(oracle: DistanceOracle, x: np.ndarray, y: np.ndarray, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Half the difference between the largest and second largest of the pair
    sums d(x,y)+d(z,w), d(x,z)+d(y,w) and d(x,w)+d(y,z); broadcasts over
    leading axes.
    """
    sums = np.sort(np.stack([
        oracle.distance(x, y) + oracle.distance(z, w),
        oracle.distance(x, z) + oracle.distance(y, w),
        oracle.distance(x, w) + oracle.distance(y, z),
    ], axis=-1), axis=-1)
    return 0.5 * (sums[..., 2] - sums[..., 1])


def delta_four_point(model: Geometry,
                     scales: typing.Union[float, typing.Sequence[float]] = DEFAULT_SCALES,
                     n_quadruples: int = 10_000,
                     seed: int = 0,
                     *,
                     batches: int = 10) -> DeltaEstimate:
    """
    Estimate the four-point δ of the model over points in balls of radius s
    around the basepoint, for each scale s.

    :param model: a model with a distance oracle, or an oracle
    :param scales: one or more ball radii
    :param n_quadruples: number of sampled quadruples, shared by all scales
    :param seed: seed of the sample
    :param batches: number of independent batches for the standard error
    :raises OracleUnavailable: for models without a distance oracle
    """
    oracle = _oracle(model)
    scales = _scales(scales)
    base = oracle.basepoint()

    per_batch = []
    for size, child in _batches(n_quadruples, batches, seed):
        directions, fractions = _sample_points(oracle, 4 * size, child)
        tangents = oracle.tangent_at_base(directions)
        maxima = []
        for scale in scales:
            points = oracle.geodesic_point(base, tangents, fractions * scale).reshape(size, 4, -1)
            maxima.append(four_point_defect(oracle, *(points[:, i] for i in range(4))).max())
        per_batch.append(maxima)

    return _summarize('four-point', scales, np.array(per_batch), n_quadruples, seed)


def _distance_to_side(oracle: DistanceOracle,
                      x: np.ndarray,
                      a: np.ndarray,
                      b: np.ndarray,
                      fractions: np.ndarray) -> float:
    # dense parameter sampling, then bounded refinement around the closest sample
    coarse = oracle.distance(x, oracle.segment_points(a, b, fractions))
    index = int(np.argmin(coarse))
    lo, hi = fractions[max(index - 1, 0)], fractions[min(index + 1, len(fractions) - 1)]
    result = minimize_scalar(lambda f: float(oracle.distance(x, oracle.segment_points(a, b, np.array([f]))[0])),
                             bounds=(lo, hi), method='bounded', options={'xatol': 1e-10})
    return float(min(coarse[index], result.fun))


def triangle_delta(model: Geometry,
                   p: np.ndarray,
                   q: np.ndarray,
                   r: np.ndarray,
                   n_side_samples: int = 33,
                   *,
                   refine: typing.Optional[int] = None) -> float:
    """
    Largest distance from a point on one side of the geodesic triangle pqr to
    the union of the two other sides.

    :param n_side_samples: parameter samples per side, at least 2
    :param refine: number of candidate points (largest coarse distances)
        whose distances are refined, all points by default
    """
    if n_side_samples < 2:
        raise ValueError('at least two samples per side are needed')
    oracle = _oracle(model)
    sides = [(p, q), (q, r), (r, p)]
    lengths = [float(oracle.distance(a, b)) for a, b in sides]
    longest = max(lengths)
    if sum(lengths) - 2 * longest <= 1e-12 * max(longest, 1.0):
        # geodesics are unique: the vertex opposite the longest side lies on it and the sides overlap
        return 0.0

    fractions = np.linspace(0.0, 1.0, n_side_samples)
    points = np.stack([oracle.segment_points(a, b, fractions) for a, b in sides])

    # coarse[k, i]: distance of point i on side k to the other sides, over their samples
    coarse = np.empty((3, n_side_samples))
    for k in range(3):
        others = np.concatenate([points[j] for j in range(3) if j != k])
        coarse[k] = oracle.distance(points[k][:, None], others[None, :]).min(axis=1)

    order = np.argsort(coarse, axis=None)[::-1]
    candidates = order if refine is None else order[:refine]
    worst = 0.0
    for flat in candidates:
        k, i = divmod(int(flat), n_side_samples)
        if coarse[k, i] <= worst:
            continue
        refined = min(_distance_to_side(oracle, points[k, i], *sides[j], fractions) for j in range(3) if j != k)
        worst = max(worst, refined)
    return worst


def thin_triangle_delta(model: Geometry,
                        scales: typing.Union[float, typing.Sequence[float]] = DEFAULT_SCALES,
                        n_triangles: int = 200,
                        n_side_samples: int = 33,
                        seed: int = 0,
                        *,
                        batches: int = 10,
                        refine: int = 3) -> DeltaEstimate:
    """
    Estimate the thin-triangle δ over triangles with vertices in balls of
    radius s around the basepoint, for each scale s.

    :raises OracleUnavailable: for models without a distance oracle
    """
    oracle = _oracle(model)
    scales = _scales(scales)
    base = oracle.basepoint()

    per_batch = []
    for size, child in _batches(n_triangles, batches, seed):
        directions, fractions = _sample_points(oracle, 3 * size, child)
        tangents = oracle.tangent_at_base(directions)
        maxima = []
        for scale in scales:
            vertices = oracle.geodesic_point(base, tangents, fractions * scale).reshape(size, 3, -1)
            maxima.append(max(triangle_delta(oracle, *triangle, n_side_samples, refine=refine)
                              for triangle in vertices))
        per_batch.append(maxima)

    return _summarize('thin-triangle', scales, np.array(per_batch), n_triangles, seed)


def busemann_value(model: Model,
                   seed: Direction,
                   q: np.ndarray,
                   tol: float = 1e-9,
                   *,
                   t_start: float = 1.0,
                   t_max: float = 2.0 ** 24) -> float:
    """
    The Busemann function b_v(q) = lim d(q, c_v(t)) − t.

    The values at doubling t are extrapolated in 1/t; evaluation stops once
    two successive extrapolations differ by less than *tol*.

    :raises OracleUnavailable: for models without a distance oracle
    :raises NoConvergence: when *t_max* is reached first
    """
    oracle = model.require_oracle()
    tangent = oracle.tangent_at_base(model.direction(seed))
    base = oracle.basepoint()
    q = np.asarray(q, dtype=float)

    def value(t: float) -> float:
        return float(oracle.distance(q, oracle.geodesic_point(base, tangent, t))) - t

    t = t_start
    previous = value(t)
    extrapolated = None
    gap = math.inf
    while t < t_max:
        t *= 2
        current = value(t)
        estimate = 2 * current - previous
        if extrapolated is not None:
            gap = abs(estimate - extrapolated)
            if gap < tol:
                break
        previous, extrapolated = current, estimate
    else:
        raise NoConvergence(f'Busemann value did not settle by t={t_max:g} (gap {gap:.3g})', horizon=t_max, gap=gap)

    # 1-Lipschitz against the basepoint, where b_v vanishes
    if abs(estimate) > float(oracle.distance(q, base)) + 1e-6:
        LOG.warning(f'Busemann value {estimate:.6g} violates the Lipschitz bound against the basepoint')
    return estimate


@dataclasses.dataclass(frozen=True)
class Divergence:
    times: np.ndarray
    angle: float
    log_upper: np.ndarray  #: log of the sphere path length ∫‖A_{x(s)}(t)x'(s)‖ds
    exponent: float  #: fitted α in log L(t) ≈ c + αt + p·log t
    degree: float  #: fitted p
    linear_rate: float  #: L(T)/T
    lower_rate: typing.Optional[float] = None  #: α of the lower bound a'e^{αt}θ
    lower_constant: typing.Optional[float] = None  #: a'

    @property
    def log_lower(self) -> typing.Optional[np.ndarray]:
        if self.lower_rate is None:
            return None
        return math.log(self.lower_constant * self.angle) + self.lower_rate * self.times  # type: ignore

    def columns(self) -> typing.Dict[str, np.ndarray]:
        columns = {'t': self.times, 'log_upper': self.log_upper}
        if self.log_lower is not None:
            columns['log_lower'] = self.log_lower
        return columns


def _growth_fit(times: np.ndarray, logs: np.ndarray) -> typing.Tuple[float, float]:
    # log y ≈ c + αt + p·log t over the final half
    tail = times >= times[-1] / 2
    design = np.column_stack([np.ones(tail.sum()), times[tail], np.log(times[tail])])
    (_, alpha, degree), *_ = np.linalg.lstsq(design, logs[tail], rcond=None)
    return float(alpha), float(degree)


def divergence_rate(model: Model,
                    v: typing.Any,
                    w: typing.Any,
                    T: float = 12.0,
                    *,
                    step: float = 0.5,
                    nodes: int = 16,
                    lower_threshold: float = 0.05,
                    settings: JacobiSettings = DEFAULT_SETTINGS) -> Divergence:
    """
    Bracket the distance on the sphere S(p, t) between c_v(t) and c_w(t).

    The upper bound is the length of the sphere path exp_p(t·x(s)) along the
    great circle x(s) from v to w, computed from the fundamental tensor along
    each sampled direction. When every sampled direction expands
    exponentially, the lower bound a'e^{αt}θ from σ_min(A(t)) is reported as
    well.

    :param model: a built model
    :param v: unit direction at the basepoint
    :param w: unit direction at the basepoint, not ±v
    :param T: largest radius, at least 2
    :param step: spacing of the radii
    :param nodes: number of Gauss–Legendre nodes along the great circle
    :param lower_threshold: smallest fitted rate of σ_min counting as
        exponential expansion
    """
    v, w = model.direction(v), model.direction(w)
    cosine = float(np.clip(v @ w, -1.0, 1.0))
    if abs(cosine) > 1 - 1e-12:
        raise ValueError('directions should not be parallel')
    if T < 2:
        raise ValueError(f'largest radius should be at least 2, got {T}')

    angle = math.acos(cosine)
    u = (w - cosine * v) / np.linalg.norm(w - cosine * v)
    times = time_grid(1.0, T, step)
    points, weights = leggauss(nodes)
    points, weights = 0.5 * angle * (points + 1), 0.5 * angle * weights

    lengths, minima = [], []
    for s in points:
        direction = math.cos(s) * v + math.sin(s) * u
        field = model.field(direction)
        # x'(s) is orthogonal to x(s): its frame coordinates capture all of it
        coordinates = field.frame.T @ (-math.sin(s) * v + math.cos(s) * u)
        A = fundamental_tensor(field, times, 'A', settings=settings)
        lengths.append([log_scale + math.log(np.linalg.norm(Y @ coordinates))
                        for Y, log_scale in zip(A.Y, A.log_scale)])
        minima.append([log_scale + math.log(np.linalg.svd(Y, compute_uv=False)[-1])
                       for Y, log_scale in zip(A.Y, A.log_scale)])

    log_upper = logsumexp(np.array(lengths) + np.log(weights)[:, None], axis=0)
    exponent, degree = _growth_fit(times, log_upper)
    divergence = Divergence(times=times, angle=angle, log_upper=log_upper, exponent=exponent, degree=degree,
                            linear_rate=float(math.exp(log_upper[-1]) / times[-1]))

    minima = np.array(minima)
    rate = min(_growth_fit(times, row)[0] for row in minima)
    if rate > lower_threshold:
        constant = math.exp(float((minima - rate * times).min()))
        divergence = dataclasses.replace(divergence, lower_rate=rate, lower_constant=constant)
    LOG.debug(f'sphere path divergence exponent {exponent:.4g}, polynomial degree {degree:.3g}')
    return divergence


def sphere_area(dim: int) -> float:
    """
    Area of the unit sphere S^{dim−1}.
    """
    return 2 * math.pi ** (dim / 2) / gamma(dim / 2)


@dataclasses.dataclass(frozen=True)
class VolumeComparison:
    delta_in: float
    ell: float
    rho: float
    r: float
    h: float
    cone_measure: float  #: μ̂(C_{v,ℓ})
    cone_stderr: float
    lhs: float  #: ∫₀^r f · μ̂(C_{v,ℓ})
    lhs_stderr: float
    rhs: float  #: e^{hr}/h · vol₀(b_v^{-1}(0) ∩ B(p, ρ))
    samples: int
    seed: int

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def volume_comparison(model: Model,
                      seed: Direction = None,
                      delta_in: float = 1.0,
                      r: float = 10.0,
                      n_mc: int = 100_000,
                      *,
                      sample_seed: int = 0) -> VolumeComparison:
    """
    Compare the volume of the spherical cone of directions w with
    d(c_v(±ℓ), c_w(±ℓ)) ≤ 1 up to radius r against the horoball region over
    b_v^{-1}(0) ∩ B(p, ρ), with ℓ = δ + 1 and ρ = 4δ + 2.

    :param model: a model with a distance oracle, horosphere chart and
        closed-form density
    :param seed: direction descriptor of v
    :param delta_in: the hyperbolicity constant δ
    :param r: radius of the cone
    :param n_mc: number of Monte Carlo directions
    :param sample_seed: seed of the Monte Carlo directions
    :raises OracleUnavailable: for models without the needed oracles
    """
    oracle = model.require_oracle()
    ell, rho = delta_in + 1, 4 * delta_in + 2
    rhs_area = oracle.horosphere_volume(rho)
    density = model.closed_form_density(seed)
    h = model.mean_curvature(seed)

    v = oracle.tangent_at_base(model.direction(seed))
    directions = np.random.default_rng(sample_seed).standard_normal((n_mc, model.dim))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    w = oracle.tangent_at_base(directions)
    base = oracle.basepoint()
    inside = np.ones(n_mc, dtype=bool)
    for t in (ell, -ell):
        inside &= oracle.distance(oracle.geodesic_point(base, v, t), oracle.geodesic_point(base, w, t)) <= 1.0

    area = sphere_area(model.dim)
    share = float(inside.mean())
    cone, cone_stderr = share * area, math.sqrt(share * (1 - share) / n_mc) * area
    radial, _ = quad(lambda s: float(density(s)), 0.0, r)
    result = VolumeComparison(delta_in=delta_in, ell=ell, rho=rho, r=r, h=h, cone_measure=cone,
                              cone_stderr=cone_stderr, lhs=radial * cone, lhs_stderr=radial * cone_stderr,
                              rhs=math.exp(h * r) / h * rhs_area, samples=n_mc, seed=sample_seed)
    if not result.holds:
        LOG.warning(f'cone volume {result.lhs:.6g} exceeds horoball region volume {result.rhs:.6g}')
    return result


@dataclasses.dataclass(frozen=True)
class HyperbolicityReport:
    scales: np.ndarray
    delta_hat: np.ndarray
    stderr: np.ndarray
    verdict: HyperbolicityVerdict
    thin_delta: np.ndarray
    thin_verdict: HyperbolicityVerdict
    divergence_alpha: typing.Optional[float]
    samples: typing.Mapping[str, int]
    seed: int

    @property
    def agree(self) -> bool:
        return self.verdict is self.thin_verdict

    def columns(self) -> typing.Dict[str, np.ndarray]:
        return {'scale': self.scales, 'delta_hat': self.delta_hat, 'stderr': self.stderr,
                'thin_delta': self.thin_delta}


def hyperbolicity_report(model: Model,
                         scales: typing.Sequence[float] = DEFAULT_SCALES,
                         n_quadruples: int = 10_000,
                         n_triangles: int = 200,
                         n_side_samples: int = 33,
                         seed: int = 0,
                         *,
                         divergence_horizon: typing.Optional[float] = 12.0,
                         settings: JacobiSettings = DEFAULT_SETTINGS) -> HyperbolicityReport:
    """
    Four-point and thin-triangle estimates over *scales* with their
    verdicts, and the lower divergence rate between the first two coordinate
    directions.

    :raises OracleUnavailable: for models without a distance oracle
    """
    four_point = delta_four_point(model, scales, n_quadruples, seed)
    thin = thin_triangle_delta(model, scales, n_triangles, n_side_samples, seed)
    if four_point.verdict is not thin.verdict:
        LOG.warning(f'four-point verdict {four_point.verdict.value} differs from thin-triangle verdict '
                    f'{thin.verdict.value}')

    alpha = None
    if divergence_horizon and model.dim > 1:
        v, w = np.eye(model.dim)[:2]
        alpha = divergence_rate(model, v, w, divergence_horizon, settings=settings).lower_rate

    return HyperbolicityReport(scales=four_point.scales, delta_hat=four_point.delta_hat, stderr=four_point.stderr,
                               verdict=four_point.verdict, thin_delta=thin.delta_hat, thin_verdict=thin.verdict,
                               divergence_alpha=alpha,
                               samples={'quadruples': n_quadruples, 'triangles': n_triangles,
                                        'side_samples': n_side_samples},
                               seed=seed)

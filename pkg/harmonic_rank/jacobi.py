"""
Jacobi tensors along a geodesic.

Everything here solves Y'' + R(t)Y = 0 for matrix valued Y in the parallel
frame of a `CurvatureField`. Solutions grow or decay exponentially, so they
are carried in renormalized form: a stored pair (Y, Y') together with a log
scale ``l`` such that the true solution is e^l·(Y, Y').
"""
import dataclasses
from enum import Enum
import logging
import math
import typing

import numpy as np
from scipy.integrate import quad_vec, solve_ivp
from scipy.linalg import solve_triangular

from harmonic_rank.configuration import Configuration
from harmonic_rank.exceptions import GridMismatch, IntegrationDiverged, NoConvergence, SingularFundamental, \
    SingularTensor, StepSizeUnderflow
from harmonic_rank.fields import CurvatureField


LOG = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class JacobiSettings:
    """
    Numerical settings of the Jacobi engine, configured under ``jacobi.*``.
    """

    method: str = 'DOP853'
    rtol: float = 1e-12
    atol: float = 1e-14
    renormalize: float = 1e8  #: renormalize once the state norm leaves [1/renormalize, renormalize]
    chunk: float = 4.0  #: maximum time span integrated between renormalizations
    base_horizon: float = 4.0  #: first anchor distance beyond the sample window for limits r → ∞
    max_horizon: float = 256.0
    cauchy_tol: float = 1e-10
    singular_condition: float = 1e12

    @classmethod
    def from_configuration(cls, config: typing.Optional[typing.Mapping[str, typing.Any]]) -> 'JacobiSettings':
        if config is None:
            return cls()
        if not isinstance(config, Configuration):
            config = Configuration(config)
        return cls(**{
            field.name: config.get(f'jacobi.{field.name}', field.default, as_type=type(field.default))
            for field in dataclasses.fields(cls)
        })


DEFAULT_SETTINGS = JacobiSettings()


class TensorKind(Enum):
    FUNDAMENTAL_A = 'Fundamental_A'
    FUNDAMENTAL_D = 'Fundamental_D'
    BOUNDARY_S = 'Boundary_S'
    BOUNDARY_U = 'Boundary_U'
    STABLE_S = 'Stable_S'
    UNSTABLE_U = 'Unstable_U'
    CUSTOM = 'Custom'


class Side(Enum):
    S = 'S'
    U = 'U'

    @property
    def sign(self) -> int:
        return 1 if self is Side.S else -1


State = typing.Tuple[np.ndarray, np.ndarray, float]
Interpolant = typing.Callable[[float], State]


@dataclasses.dataclass(frozen=True)
class _Segment:
    lo: float
    hi: float
    solution: typing.Any
    log_scale: float = 0.0
    factor: typing.Optional[np.ndarray] = None  #: triangular factor divided out at the end of the chunk


class _Segments:
    """
    Dense output of a chunked integration: one ODE solution per chunk, each
    with the log scale it was integrated at.
    """

    def __init__(self, shape: typing.Tuple[int, int], segments: typing.Sequence[_Segment]):
        self.shape = shape
        self.segments = sorted(segments, key=lambda segment: segment.lo)
        self.starts = np.array([segment.lo for segment in self.segments])

    def __call__(self, t: float) -> State:
        index = int(np.clip(np.searchsorted(self.starts, t, side='right') - 1, 0, len(self.segments) - 1))
        segment = self.segments[index]
        state = segment.solution(t).reshape(2, *self.shape)
        return state[0], state[1], segment.log_scale


class _Blend:
    """
    Linear combination of interpolants, evaluated on a common scale.
    """

    def __init__(self, parts: typing.Sequence[Interpolant], weights: typing.Sequence[float]):
        self.parts = tuple(parts)
        self.weights = tuple(weights)

    def __call__(self, t: float) -> State:
        values = [part(t) for part in self.parts]
        log_scale = max(value[2] for value in values)
        Y = sum(w * math.exp(l - log_scale) * y for w, (y, _, l) in zip(self.weights, values))
        Yp = sum(w * math.exp(l - log_scale) * yp for w, (_, yp, l) in zip(self.weights, values))
        return Y, Yp, log_scale  # type: ignore


@dataclasses.dataclass(frozen=True, eq=False)
class TensorTrajectory:
    """
    A (renormalized) Jacobi tensor sampled on a time grid, with dense
    evaluation anywhere within the grid's range.
    """

    grid: np.ndarray
    Y: np.ndarray
    Yp: np.ndarray
    log_scale: np.ndarray
    kind: TensorKind
    field: CurvatureField
    interpolant: Interpolant = dataclasses.field(repr=False)
    metadata: typing.Mapping[str, typing.Any] = dataclasses.field(default_factory=dict)

    @classmethod
    def sample(cls,
               field: CurvatureField,
               grid: np.ndarray,
               interpolant: Interpolant,
               kind: TensorKind,
               metadata: typing.Optional[typing.Mapping[str, typing.Any]] = None) -> 'TensorTrajectory':
        values = [interpolant(float(t)) for t in grid]
        return cls(grid=np.asarray(grid, dtype=float),
                   Y=np.array([value[0] for value in values]),
                   Yp=np.array([value[1] for value in values]),
                   log_scale=np.array([value[2] for value in values], dtype=float),
                   kind=kind,
                   field=field,
                   interpolant=interpolant,
                   metadata=dict(metadata or {}))

    @property
    def span(self) -> typing.Tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def covers(self, t: float) -> bool:
        slack = 1e-9 * (1.0 + abs(t))
        return self.grid[0] - slack <= t <= self.grid[-1] + slack

    def evaluate(self, t: float) -> State:
        """
        Evaluate the renormalized tensor at any time in the grid's range.

        :param t: time to evaluate at
        :returns: tuple ``(Y, Yp, log_scale)``, the true values being
            e^log_scale·Y and e^log_scale·Yp
        :raises GridMismatch: when *t* lies outside of the grid's range
        """
        if not self.covers(t):
            raise GridMismatch(f'time {t} outside of trajectory range {self.span}')
        return self.interpolant(float(t))

    def true_value(self, t: float) -> typing.Tuple[np.ndarray, np.ndarray]:
        Y, Yp, log_scale = self.evaluate(t)
        scale = math.exp(log_scale)
        return scale * Y, scale * Yp

    def log_abs_det(self, t: float) -> float:
        """
        log |det Y(t)| of the true tensor, without forming it.
        """
        Y, _, log_scale = self.evaluate(t)
        sign, logdet = np.linalg.slogdet(Y)
        if sign == 0:
            return -math.inf
        return Y.shape[0] * log_scale + float(logdet)

    def columns(self) -> typing.Dict[str, np.ndarray]:
        """
        Columnar representation: ``t``, ``Y[i,j]`` and ``Yp[i,j]`` row-major,
        ``log_scale``.
        """
        columns = {'t': self.grid}
        rows, cols = self.Y.shape[1:]
        for name, values in (('Y', self.Y), ('Yp', self.Yp)):
            for i in range(rows):
                for j in range(cols):
                    columns[f'{name}[{i},{j}]'] = values[:, i, j]
        columns['log_scale'] = self.log_scale
        return columns

    def residual(self, times: typing.Optional[typing.Iterable[float]] = None, step: float = 1e-4) -> float:
        """
        Relative Jacobi equation residual ‖Y'' + RY‖ / ‖(Y, Y')‖, with Y''
        taken from central differences of the dense derivative.

        :param times: collocation times, defaults to the interior grid points
        :param step: finite difference step
        :returns: the maximum residual over *times*
        """
        lo, hi = self.span
        if times is None:
            times = [t for t in self.grid if lo + step <= t <= hi - step]

        worst = 0.0
        for t in times:
            Y, Yp, log_scale = self.evaluate(t)
            _, after, l_after = self.evaluate(t + step)
            _, before, l_before = self.evaluate(t - step)
            second = (math.exp(l_after - log_scale) * after - math.exp(l_before - log_scale) * before) / (2 * step)
            norm = max(np.linalg.norm(Y), np.linalg.norm(Yp))
            worst = max(worst, float(np.linalg.norm(second + self.field.evaluate(t) @ Y) / norm))
        return worst


def time_grid(start: float, stop: float, step: float = 0.25) -> np.ndarray:
    """
    Uniform time grid from *start* to *stop* (inclusive), spacing at most
    *step*.
    """
    count = max(2, int(math.ceil(abs(stop - start) / step - 1e-9)) + 1)
    return np.linspace(start, stop, count)


def _chunk_length(field: CurvatureField, settings: JacobiSettings) -> float:
    # growth over a chunk stays below e^16 regardless of the curvature bound
    if field.bound > 0:
        return min(settings.chunk, 16.0 / field.bound)
    return settings.chunk


def _renormalize(state: np.ndarray, log_scale: float, settings: JacobiSettings) -> typing.Tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(state))
    if norm > settings.renormalize or 0.0 < norm < 1.0 / settings.renormalize:
        LOG.debug(f'renormalizing Jacobi state with norm {norm:.3g}')
        return state / norm, log_scale + math.log(norm)
    return state, log_scale


def _orthonormalize(state: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    # right-multiplication by a constant matrix keeps a Jacobi tensor a Jacobi tensor: replace the
    # stacked pair by an orthonormal basis of its column space, returning the factor divided out
    _, rows, cols = state.shape
    q, r = np.linalg.qr(state.reshape(2 * rows, cols))
    return q.reshape(2, rows, cols), r


def _sweep(field: CurvatureField,
           state: np.ndarray,
           start: float,
           stop: float,
           settings: JacobiSettings,
           *,
           log_scale: float = 0.0,
           orthonormalize: bool = False) -> typing.Tuple[typing.List[_Segment], np.ndarray, float]:
    """
    Integrate the first-order system from *start* to *stop* in chunks,
    renormalizing between chunks.

    :returns: tuple of the dense segments, the final state and its log scale
    """
    _, rows, cols = state.shape

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        Y, Yp = y.reshape(2, rows, cols)
        return np.concatenate([Yp.ravel(), -(field.evaluate(t) @ Y).ravel()])

    segments = []
    length = _chunk_length(field, settings)
    direction = 1.0 if stop >= start else -1.0
    t = start
    while direction * (stop - t) > 1e-12:
        end = stop if abs(stop - t) <= length else t + direction * length
        solution = solve_ivp(rhs, (t, end), state.ravel(), method=settings.method,
                             rtol=settings.rtol, atol=settings.atol, dense_output=True)
        if solution.status < 0:
            raise StepSizeUnderflow(f'Jacobi integration failed: {solution.message}', t=float(solution.t[-1]))

        state = solution.y[:, -1].reshape(2, rows, cols)
        if not np.all(np.isfinite(state)):
            raise IntegrationDiverged(f'non-finite Jacobi state between t={t:g} and t={end:g}', t=end)

        if orthonormalize:
            state, factor = _orthonormalize(state)
            segments.append(_Segment(min(t, end), max(t, end), solution.sol, factor=factor))
        else:
            segments.append(_Segment(min(t, end), max(t, end), solution.sol, log_scale))
            state, log_scale = _renormalize(state, log_scale, settings)
        t = end

    return segments, state, log_scale


def _check_grid(grid: typing.Any) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise GridMismatch('time grid should be a strictly increasing sequence of at least two samples')
    return grid


def integrate_jacobi(field: CurvatureField,
                     Y0: np.ndarray,
                     Yp0: np.ndarray,
                     grid: typing.Any,
                     *,
                     t0: typing.Optional[float] = None,
                     kind: TensorKind = TensorKind.CUSTOM,
                     settings: JacobiSettings = DEFAULT_SETTINGS) -> TensorTrajectory:
    """
    Solve the Jacobi equation Y'' + R(t)Y = 0 with Y(t0) = Y0, Y'(t0) = Yp0.

    :param field: the Jacobi operator field
    :param Y0: initial value, an ``(n-1, k)`` matrix (a vector is taken as a
        single column)
    :param Yp0: initial derivative, same shape as *Y0*
    :param grid: strictly increasing sample times
    :param t0: time of the initial data, defaults to the first grid point;
        integration proceeds in both directions from it
    :param kind: kind to record on the trajectory
    :param settings: numerical settings
    :returns: the renormalized trajectory sampled on *grid*
    :raises ValueError: when the initial data vanishes or has the wrong shape
    :raises StepSizeUnderflow: when the integrator cannot meet its tolerance
    :raises OracleUnavailable: when the grid extends beyond the field's
        horizon
    """
    grid = _check_grid(grid)
    Y0 = np.asarray(Y0, dtype=float)
    Yp0 = np.asarray(Yp0, dtype=float)
    if Y0.ndim == 1:
        Y0, Yp0 = Y0[:, None], Yp0[:, None]
    if Y0.shape != Yp0.shape or Y0.shape[0] != field.dim_normal:
        raise ValueError(f'initial data of shapes {Y0.shape} and {Yp0.shape} do not fit a field of dimension '
                         f'{field.dim_normal}')
    if not (np.any(Y0) or np.any(Yp0)):
        raise ValueError('initial data should not vanish')

    t0 = float(grid[0]) if t0 is None else float(t0)
    state = np.stack([Y0, Yp0])
    segments: typing.List[_Segment] = []
    for stop in (max(float(grid[-1]), t0), min(float(grid[0]), t0)):
        part, _, _ = _sweep(field, state, t0, stop, settings)
        segments.extend(part)

    return TensorTrajectory.sample(field, grid, _Segments(Y0.shape, segments), kind, {'t0': t0})


def fundamental_tensor(field: CurvatureField,
                       grid: typing.Any,
                       which: str = 'A',
                       *,
                       settings: JacobiSettings = DEFAULT_SETTINGS) -> TensorTrajectory:
    """
    The fundamental tensor A_v (A(0) = 0, A'(0) = Id) or D_v (D(0) = Id,
    D'(0) = 0), sampled on *grid* (which may extend to both sides of 0).
    """
    identity = np.eye(field.dim_normal)
    zero = np.zeros_like(identity)
    if which == 'A':
        return integrate_jacobi(field, zero, identity, grid, t0=0.0, kind=TensorKind.FUNDAMENTAL_A, settings=settings)
    if which == 'D':
        return integrate_jacobi(field, identity, zero, grid, t0=0.0, kind=TensorKind.FUNDAMENTAL_D, settings=settings)
    raise ValueError(f'unknown fundamental tensor {which!r}')


def wronskian(Ya: TensorTrajectory, Yb: TensorTrajectory, t: float) -> np.ndarray:
    """
    The Wronskian W(Ya, Yb)(t) = Ya'ᵀ(t)·Yb(t) − Yaᵀ(t)·Yb'(t) of the true
    tensors, constant in t.

    :raises GridMismatch: when the trajectories live on different fields or
        do not both cover *t*
    """
    if Ya.field is not Yb.field:
        raise GridMismatch('Wronskian of trajectories along different fields')
    if not (Ya.covers(t) and Yb.covers(t)):
        raise GridMismatch(f'time {t} not covered by both trajectories')

    A, Ap, la = Ya.evaluate(t)
    B, Bp, lb = Yb.evaluate(t)
    return math.exp(la + lb) * (Ap.T @ B - A.T @ Bp)


def _solve_right(value: np.ndarray, derivative: np.ndarray, limit: float, t: float) -> np.ndarray:
    # derivative·value⁻¹ through a factorization of value
    condition = float(np.linalg.cond(value))
    if not math.isfinite(condition) or condition > limit:
        raise SingularTensor(f'tensor numerically singular at t={t:g} (condition {condition:.3g})',
                             t=t, condition=condition)
    return np.linalg.solve(value.T, derivative.T).T


def _scaled(matrix: np.ndarray, log_scale: float) -> typing.Tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(matrix))
    return matrix / norm, log_scale + math.log(norm)


class _AnchoredTensor:
    """
    The Jacobi tensor Z(t)·Z(0)⁻¹, with Z(anchor) = 0 and Z'(anchor) = Id.

    Z is integrated away from the anchor in chunks, each ending in a QR step
    that divides a triangular factor out of the stacked pair (Z, Z'). On
    evaluation, the factors between the chunk of t and the chunk of 0 are
    multiplied back in, so no tensor with widely spread singular values is
    ever inverted.
    """

    def __init__(self, field: CurvatureField, anchor: float, lo: float, hi: float, settings: JacobiSettings):
        rows = field.dim_normal
        initial = np.stack([np.zeros((rows, rows)), np.eye(rows)])

        # the main chain runs through 0 to the far end of the window, another one covers the window beyond the anchor
        main, _, _ = _sweep(field, initial, anchor, lo if anchor > 0 else hi, settings, orthonormalize=True)
        beyond = hi if anchor > 0 else lo
        extra: typing.List[_Segment] = []
        if (beyond - anchor) * anchor > 0:
            extra, _, _ = _sweep(field, initial, anchor, beyond, settings, orthonormalize=True)

        center = next(index for index, segment in enumerate(main) if segment.lo <= 0.0 <= segment.hi)
        factors = [(np.eye(rows), 0.0)] * len(main)
        for index in range(center - 1, -1, -1):
            following, log_scale = factors[index + 1]
            factors[index] = _scaled(solve_triangular(main[index].factor, following), log_scale)
        for index in range(center + 1, len(main)):
            preceding, log_scale = factors[index - 1]
            factors[index] = _scaled(main[index - 1].factor @ preceding, log_scale)

        extra_factors = []
        current = factors[0]
        for index in range(len(extra)):
            if index:
                current = _scaled(extra[index - 1].factor @ current[0], current[1])
            extra_factors.append(current)

        Z = main[center].solution(0.0).reshape(2, rows, rows)[0]
        condition = float(np.linalg.cond(Z))
        if not math.isfinite(condition) or condition > settings.singular_condition:
            raise SingularFundamental(f'anchored tensor singular at t=0 (condition {condition:.3g})',
                                      condition=condition)
        at_zero = np.linalg.solve(Z, np.eye(rows))

        self.rows = rows
        self.pieces = sorted(
            ((segment, factor @ at_zero, log_scale)
             for segment, (factor, log_scale) in zip(main + extra, factors + extra_factors)),
            key=lambda piece: piece[0].lo,
        )
        self.starts = np.array([piece[0].lo for piece in self.pieces])

    def __call__(self, t: float) -> State:
        index = int(np.clip(np.searchsorted(self.starts, t, side='right') - 1, 0, len(self.pieces) - 1))
        segment, right, log_scale = self.pieces[index]
        Z, Zp = segment.solution(t).reshape(2, self.rows, self.rows)
        return Z @ right, Zp @ right, log_scale


def _boundary_slope(field: CurvatureField, anchor: float, settings: JacobiSettings) -> np.ndarray:
    rows = field.dim_normal
    state = np.stack([np.zeros((rows, rows)), np.eye(rows)])
    _, state, _ = _sweep(field, state, anchor, 0.0, settings, orthonormalize=True)
    Z, Zp = state
    condition = float(np.linalg.cond(Z))
    if not math.isfinite(condition) or condition > settings.singular_condition:
        raise SingularFundamental(f'anchored tensor singular at t=0 (condition {condition:.3g})', condition=condition)
    slope = np.linalg.solve(Z.T, Zp.T).T
    return 0.5 * (slope + slope.T)


def _window(grid: np.ndarray) -> typing.Tuple[float, float]:
    return min(float(grid[0]), 0.0), max(float(grid[-1]), 0.0)


def boundary_tensor(field: CurvatureField,
                    r: float,
                    side: typing.Union[Side, str],
                    *,
                    grid: typing.Any = None,
                    settings: JacobiSettings = DEFAULT_SETTINGS) -> TensorTrajectory:
    """
    The boundary tensor S_{v,r} (S(0) = Id, S(r) = 0) or U_{v,r}
    (U(0) = Id, U(−r) = 0).

    The tensor is computed as Z(t)·Z(0)⁻¹ from a tensor Z anchored at ±r,
    which equals D(t) + A(t)·C with C = −A(±r)⁻¹·D(±r) without solving against
    exponentially large fundamental solutions.

    :param field: the Jacobi operator field
    :param r: positive horizon
    :param side: `Side.S` or `Side.U` (or their values)
    :param grid: sample times, defaults to a grid covering [0, r] (or
        [−r, 0])
    :param settings: numerical settings
    :returns: the boundary tensor, sampled on *grid*
    :raises ValueError: for a non-positive *r*
    :raises SingularFundamental: when the anchored tensor is singular at 0
    """
    side = Side(side)
    if r <= 0:
        raise ValueError(f'boundary horizon should be positive, got {r}')

    anchor = side.sign * r
    grid = _check_grid(time_grid(min(anchor, 0.0), max(anchor, 0.0)) if grid is None else grid)
    interpolant = _AnchoredTensor(field, anchor, *_window(grid), settings)
    kind = TensorKind.BOUNDARY_S if side is Side.S else TensorKind.BOUNDARY_U
    return TensorTrajectory.sample(field, grid, interpolant, kind, {'horizon': float(r), 'side': side.value})


def boundary_slopes(field: CurvatureField,
                    radii: typing.Iterable[float],
                    side: typing.Union[Side, str],
                    *,
                    method: str = 'sweep',
                    settings: JacobiSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """
    The slopes S'_{v,r}(0) (or U'_{v,r}(0)) for many radii.

    :param field: the Jacobi operator field
    :param radii: positive horizons
    :param side: `Side.S` or `Side.U`
    :param method: ``'sweep'`` integrates an anchored tensor back from each
        radius; ``'fundamental'`` integrates the stacked fundamental pair
        [A | D] once and solves C = −A(r)⁻¹D(r) at every radius
    :param settings: numerical settings
    :returns: array of shape ``(len(radii), n-1, n-1)``
    :raises SingularFundamental: when A(r) (or the anchored tensor) is
        numerically singular
    """
    side = Side(side)
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise ValueError('boundary horizons should be positive')

    if method == 'sweep':
        return np.array([_boundary_slope(field, side.sign * r, settings) for r in radii])
    if method != 'fundamental':
        raise ValueError(f'unknown boundary slope method {method!r}')

    rows = field.dim_normal
    identity, zero = np.eye(rows), np.zeros((rows, rows))
    ends = sorted({0.0, *(side.sign * r for r in radii)})
    pair = integrate_jacobi(field, np.hstack([zero, identity]), np.hstack([identity, zero]),
                            ends if len(ends) > 1 else [0.0, side.sign * radii[0]],
                            t0=0.0, kind=TensorKind.CUSTOM, settings=settings)

    slopes = []
    for r in radii:
        Y, _, _ = pair.evaluate(side.sign * r)
        A, D = Y[:, :rows], Y[:, rows:]
        condition = float(np.linalg.cond(A))
        if not math.isfinite(condition) or condition > settings.singular_condition:
            raise SingularFundamental(f'A({side.sign * r:g}) numerically singular (condition {condition:.3g})',
                                      condition=condition)
        slopes.append(-np.linalg.solve(A, D))
    return np.array(slopes)


def _anchors(extent: float, settings: JacobiSettings) -> typing.List[float]:
    anchors = []
    step = settings.base_horizon
    while extent + step <= settings.max_horizon:
        anchors.append(extent + step)
        step *= 2
    if anchors and anchors[-1] < settings.max_horizon:
        anchors.append(settings.max_horizon)
    if len(anchors) < 2:
        raise ValueError(f'sample window of extent {extent:g} leaves no room below the maximum horizon '
                         f'{settings.max_horizon:g}')
    return anchors


@dataclasses.dataclass(frozen=True)
class LimitSlope:
    """
    Outcome of the horizon doubling towards S'_v(0) or U'_v(0).
    """

    slope: np.ndarray
    anchors: typing.Tuple[float, ...]  #: anchors that make up the limit
    weights: typing.Tuple[float, ...]  #: weights of the anchored tensors in the limit
    horizon: float  #: largest horizon visited
    gap: float  #: last Cauchy gap (or extrapolation change)
    gap_exponent: float  #: fitted exponent of gap ~ r^exponent, around −1 for flat modes
    convergence: str  #: either 'cauchy' or 'richardson'
    monotone: bool


def asymptotic_slope(field: CurvatureField,
                     side: typing.Union[Side, str],
                     tol: typing.Optional[float] = None,
                     *,
                     extent: float = 0.0,
                     settings: JacobiSettings = DEFAULT_SETTINGS) -> LimitSlope:
    """
    Compute S'_v(0) = lim S'_{v,r}(0) (or U'_v(0)) by doubling horizons
    r = extent + base·2^k up to the maximum horizon.

    Convergence is accepted on a Cauchy gap below *tol*. Directions without
    curvature converge like 1/r; those are accepted when two successive
    Richardson extrapolations in 1/r agree within *tol*.

    :raises NoConvergence: when neither criterion is met at the maximum
        horizon
    """
    side = Side(side)
    tol = settings.cauchy_tol if tol is None else float(tol)
    anchors = _anchors(extent, settings)

    slopes: typing.List[np.ndarray] = []
    gaps: typing.List[float] = []
    extrapolated: typing.List[np.ndarray] = []
    accepted: typing.Optional[typing.Tuple[typing.Tuple[float, ...], typing.Tuple[float, ...], str]] = None
    final_gap = math.nan

    for index, r in enumerate(anchors):
        slopes.append(_boundary_slope(field, side.sign * r, settings))
        if index == 0:
            continue

        gaps.append(float(np.linalg.norm(slopes[-1] - slopes[-2], ord=2)))
        LOG.debug(f'{side.value}-slope at r={r:g}: Cauchy gap {gaps[-1]:.3g}')
        if gaps[-1] < tol:
            accepted = (r,), (1.0,), 'cauchy'
            break

        previous = anchors[index - 1]
        weights = (r / (r - previous), -previous / (r - previous))
        extrapolated.append(weights[0] * slopes[-1] + weights[1] * slopes[-2])
        if len(extrapolated) > 1:
            change = float(np.linalg.norm(extrapolated[-1] - extrapolated[-2], ord=2))
            if change < tol:
                LOG.debug(f'accepting Richardson extrapolation at r={r:g} (change {change:.3g})')
                final_gap = change
                accepted = (r, previous), weights, 'richardson'
                break

    visited = anchors[:len(slopes)]
    if accepted is None:
        raise NoConvergence(f'{side.value}-slope did not converge up to r={visited[-1]:g} (gap {gaps[-1]:.3g})',
                            horizon=visited[-1], gap=gaps[-1])

    # S'_{v,r}(0) increases with r, U'_{v,r}(0) decreases
    monotone = all(np.linalg.eigvalsh(side.sign * (later - earlier)).min() >= -max(tol, 1e-9)
                   for earlier, later in zip(slopes[:-1], slopes[1:]))
    if not monotone:
        LOG.warning(f'{side.value}-slopes not monotone in the horizon')

    positive = [(r, gap) for r, gap in zip(visited[1:], gaps) if gap > 0]
    exponent = math.nan
    if len(positive) > 1:
        exponent = float(np.polyfit(np.log([r for r, _ in positive]), np.log([gap for _, gap in positive]), 1)[0])

    used, weights, convergence = accepted
    slope = sum(w * slopes[visited.index(r)] for r, w in zip(used, weights))
    return LimitSlope(slope=slope, anchors=used, weights=weights, horizon=visited[-1],  # type: ignore
                      gap=gaps[-1] if convergence == 'cauchy' else final_gap,
                      gap_exponent=exponent, convergence=convergence, monotone=monotone)


def asymptotic_tensor(field: CurvatureField,
                      side: typing.Union[Side, str],
                      tol: typing.Optional[float] = None,
                      *,
                      grid: typing.Any = None,
                      settings: JacobiSettings = DEFAULT_SETTINGS) -> TensorTrajectory:
    """
    The stable tensor S_v = lim S_{v,r} (side S) or the unstable tensor
    U_v = lim U_{v,r} (side U), sampled on *grid*.

    :param field: the Jacobi operator field
    :param side: `Side.S` or `Side.U`
    :param tol: Cauchy tolerance on the slopes at 0, defaults to
        ``settings.cauchy_tol``
    :param grid: sample times, defaults to [−base_horizon, base_horizon]
    :param settings: numerical settings
    :returns: the limit tensor; its metadata records the final horizon, the
        achieved gap, the gap exponent, the convergence criterion and the
        monotonicity check
    :raises NoConvergence: when the limit does not settle
    """
    side = Side(side)
    if grid is None:
        grid = time_grid(-settings.base_horizon, settings.base_horizon)
    grid = _check_grid(grid)
    lo, hi = _window(grid)

    limit = asymptotic_slope(field, side, tol, extent=max(-lo, hi), settings=settings)
    parts = [_AnchoredTensor(field, side.sign * r, lo, hi, settings) for r in limit.anchors]
    interpolant = parts[0] if len(parts) == 1 else _Blend(parts, limit.weights)

    kind = TensorKind.STABLE_S if side is Side.S else TensorKind.UNSTABLE_U
    metadata = {
        'side': side.value,
        'horizon': limit.horizon,
        'gap': limit.gap,
        'gap_exponent': limit.gap_exponent,
        'convergence': limit.convergence,
        'monotone': limit.monotone,
        'slope': limit.slope,
    }
    return TensorTrajectory.sample(field, grid, interpolant, kind, metadata)


def riccati_at(traj: TensorTrajectory, t: float, *, max_condition: float = 1e12) -> np.ndarray:
    """
    The Riccati solution V(t) = Y'(t)·Y(t)⁻¹.

    :raises SingularTensor: when Y(t) is numerically singular
    """
    Y, Yp, _ = traj.evaluate(t)
    if Y.shape[0] != Y.shape[1]:
        raise ValueError('Riccati solutions need a square tensor')
    return _solve_right(Y, Yp, max_condition, t)


def riccati_residual(traj: TensorTrajectory, t: float, *, step: float = 1e-4, max_condition: float = 1e12) -> float:
    """
    ‖V'(t) + V(t)² + R(t)‖, V' from central differences of the dense solution.
    """
    V = riccati_at(traj, t, max_condition=max_condition)
    derivative = (riccati_at(traj, t + step, max_condition=max_condition)
                  - riccati_at(traj, t - step, max_condition=max_condition)) / (2 * step)
    return float(np.linalg.norm(derivative + V @ V + traj.field.evaluate(t), ord=2))


def gram_integral(traj: TensorTrajectory,
                  a: float,
                  b: float,
                  *,
                  max_condition: float = 1e12,
                  epsabs: float = 1e-13,
                  epsrel: float = 1e-11) -> np.ndarray:
    """
    ∫_a^b (YᵀY)⁻¹(u) du of the true tensor, by adaptive quadrature on the
    renormalized factors.

    :raises SingularTensor: when Y is numerically singular on [a, b]
    """
    rows = traj.Y.shape[2]

    def integrand(u: float) -> np.ndarray:
        Y, _, log_scale = traj.evaluate(u)
        gram = Y.T @ Y
        condition = float(np.linalg.cond(gram))
        if not math.isfinite(condition) or condition > max_condition ** 2:
            raise SingularTensor(f'tensor numerically singular at t={u:g}', t=u, condition=math.sqrt(condition))
        return (math.exp(-2 * log_scale) * np.linalg.solve(gram, np.eye(rows))).ravel()

    result, _ = quad_vec(integrand, a, b, epsabs=epsabs, epsrel=epsrel)
    result = result.reshape(rows, rows)
    return 0.5 * (result + result.T)

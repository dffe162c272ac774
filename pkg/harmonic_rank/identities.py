"""
Numerical self-checks of the Jacobi tensor calculus: the cocycle, Riccati,
Wronskian transfer and integral identities of the stable and unstable
tensors, the representation of Jacobi tensors through a nonsingular Lagrange
tensor and the integral form of the boundary slopes.
"""
import dataclasses
from enum import Enum
import logging
import math
import typing

import numpy as np

from harmonic_rank.fields import CurvatureField
from harmonic_rank.jacobi import asymptotic_slope, asymptotic_tensor, boundary_slopes, DEFAULT_SETTINGS, \
    gram_integral, integrate_jacobi, JacobiSettings, riccati_at, Side, time_grid, TensorTrajectory, wronskian


LOG = logging.getLogger(__name__)

#: lower limits −(window + L) of the truncated integral from −∞
TRUNCATION = (16.0, 32.0, 64.0)


class IdentityTag(Enum):
    COCYCLE = 'cocycle'
    RICCATI = 'riccati'
    WRONSKIAN_TRANSFER = 'wronskian_transfer'
    STABLE_INTEGRAL = 'stable_integral'
    LAGRANGE_REPRESENTATION = 'lagrange_representation'
    SLOPE_INTEGRAL = 'slope_integral'


@dataclasses.dataclass(frozen=True)
class IdentityReport:
    tag: IdentityTag
    samples: typing.Tuple[typing.Tuple[float, float], ...]
    residuals: typing.Tuple[float, ...]  #: one per sample pair
    tolerance: float
    budget: float  #: tolerance plus the truncation estimate, where one applies

    @property
    def residual(self) -> float:
        return max(self.residuals)

    @property
    def passed(self) -> bool:
        return self.residual < self.budget


def _relative(value: np.ndarray, reference: np.ndarray) -> float:
    return float(np.linalg.norm(value - reference, ord=2) / max(1.0, np.linalg.norm(reference, ord=2)))


def _right_solve(value: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    # matrix·value⁻¹
    return np.linalg.solve(value.T, matrix.T).T


def sample_pairs(count: int, window: float = 4.0, seed: int = 0) -> typing.List[typing.Tuple[float, float]]:
    """
    *count* reproducible (t, u) pairs, uniform in [−window, window]².
    """
    pairs = np.random.default_rng(seed).uniform(-window, window, size=(count, 2))
    return [(float(t), float(u)) for t, u in pairs]


def _ratio(traj: TensorTrajectory, t: float, u: float) -> np.ndarray:
    # Y(t)·Y(u)⁻¹ of the true tensor
    Yt, _, lt = traj.evaluate(t)
    Yu, _, lu = traj.evaluate(u)
    return math.exp(lt - lu) * _right_solve(Yu, Yt)


def identity_suite(field: CurvatureField,
                   samples: typing.Union[int, typing.Sequence[typing.Tuple[float, float]]] = 20,
                   tol: float = 1e-8,
                   *,
                   window: float = 4.0,
                   seed: int = 0,
                   truncation: typing.Sequence[float] = TRUNCATION,
                   settings: JacobiSettings = DEFAULT_SETTINGS) -> typing.List[IdentityReport]:
    """
    Evaluate the identity suite on sampled time pairs (t, u).

    With S, U the stable and unstable tensors of *field* and φ^t the re-based
    field, the suite checks:

    - cocycle: S_{φ^u}(t) = S(t+u)·S(u)⁻¹, likewise for U;
    - Riccati: S'_{φ^t}(0) = S'(t)·S(t)⁻¹, likewise for U;
    - Wronskian transfer: U'_{φ^t}(0) − S'_{φ^t}(0) equals both
      U*(t)⁻¹·B·S(t)⁻¹ and S*(t)⁻¹·B·U(t)⁻¹ with B = U'(0) − S'(0), and
      W(U, S)(t) = B;
    - integral: U'_{φ^t}(0) − S'_{φ^t}(0) = S*(t)⁻¹·(∫_{−∞}^t (S*S)⁻¹)⁻¹·S(t)⁻¹,
      the integral truncated at −(window + L) for increasing L;
    - representation: a random Jacobi tensor Z equals
      U(t)·(∫_u^t (U*U)⁻¹·C₁ + C₂) with C₁ = −W(U, Z)(u), C₂ = U(u)⁻¹Z(u);
    - boundary integrals: (U'(0) − S'_{s}(0))⁻¹ = ∫_0^s (U*U)⁻¹ and
      (S'(0) − S'_{s}(0))⁻¹ = ∫_0^s (S*S)⁻¹, for s = max(|t|, |u|, 1/2).

    :param field: a bounded Jacobi operator field
    :param samples: explicit (t, u) pairs or a number of pairs to draw from
        [−window, window]²
    :param tol: tolerance on the (relative) residuals
    :param window: sampling window, used when *samples* is a number
    :param seed: seed for the sampled pairs and the random Jacobi tensor
    :param truncation: increasing values of L, the last two determine the
        truncation estimate of the integral identity
    :param settings: numerical settings
    :returns: one report per identity
    """
    pairs = sample_pairs(samples, window, seed) if isinstance(samples, int) else [tuple(map(float, p)) for p in samples]
    if not pairs:
        raise ValueError('identity suite needs at least one sample pair')

    extent = max(max(abs(t), abs(u), abs(t + u), 0.5) for t, u in pairs)
    depth = float(truncation[-1])
    stable = asymptotic_tensor(field, Side.S, grid=time_grid(-(extent + depth), extent), settings=settings)
    unstable = asymptotic_tensor(field, Side.U, grid=time_grid(-extent, extent), settings=settings)
    B = unstable.metadata['slope'] - stable.metadata['slope']

    rng = np.random.default_rng(seed)
    rows = field.dim_normal
    other = integrate_jacobi(field, rng.standard_normal((rows, rows)), rng.standard_normal((rows, rows)),
                             time_grid(-extent, extent), t0=0.0, settings=settings)
    # tails ∫_{−(extent + L)}^{−extent} (S*S)⁻¹ for the last two L
    tails = [gram_integral(stable, -(extent + L), -extent) for L in truncation[-2:]]

    residuals: typing.Dict[IdentityTag, typing.List[float]] = {tag: [] for tag in IdentityTag}
    estimate = 0.0

    for t, u in pairs:
        slope_s = asymptotic_slope(field.shifted(t), Side.S, settings=settings).slope
        slope_u = asymptotic_slope(field.shifted(t), Side.U, settings=settings).slope
        difference = slope_u - slope_s

        cocycle = 0.0
        for side, traj in ((Side.S, stable), (Side.U, unstable)):
            moved = asymptotic_tensor(field.shifted(u), side,
                                      grid=time_grid(min(t, 0.0) - 0.5, max(t, 0.0) + 0.5), settings=settings)
            cocycle = max(cocycle, _relative(moved.true_value(t)[0], _ratio(traj, t + u, u)))
        residuals[IdentityTag.COCYCLE].append(cocycle)

        residuals[IdentityTag.RICCATI].append(max(_relative(slope_s, riccati_at(stable, t)),
                                                     _relative(slope_u, riccati_at(unstable, t))))

        S, _, ls = stable.evaluate(t)
        U, _, lu = unstable.evaluate(t)
        scale = math.exp(-ls - lu)
        first = scale * _right_solve(S, np.linalg.solve(U.T, B))
        second = scale * _right_solve(U, np.linalg.solve(S.T, B))
        residuals[IdentityTag.WRONSKIAN_TRANSFER].append(max(
            _relative(difference, first),
            _relative(difference, second),
            _relative(wronskian(unstable, stable, t), B),
        ))

        head = gram_integral(stable, -extent, t)
        true_s = math.exp(ls) * S
        # S*(t)⁻¹·I⁻¹·S(t)⁻¹ = (S(t)·I·S*(t))⁻¹
        candidates = [np.linalg.inv(true_s @ (tail + head) @ true_s.T) for tail in tails]
        residuals[IdentityTag.STABLE_INTEGRAL].append(_relative(difference, candidates[-1]))
        if len(candidates) > 1:
            # tails converge like 1/L at worst (directions without curvature), doubling L leaves an error of at most
            # twice the last change
            estimate = max(estimate, 2.0 * _relative(candidates[-1], candidates[-2]))

        C1 = -wronskian(unstable, other, u)
        Uu, _ = unstable.true_value(u)
        Zu, _ = other.true_value(u)
        C2 = np.linalg.solve(Uu, Zu)
        Ut, _ = unstable.true_value(t)
        Zt, _ = other.true_value(t)
        rebuilt = Ut @ (gram_integral(unstable, u, t) @ C1 + C2)
        residuals[IdentityTag.LAGRANGE_REPRESENTATION].append(_relative(rebuilt, Zt))

        s = min(max(abs(t), abs(u), 0.5), extent)
        finite = boundary_slopes(field, [s], Side.S, settings=settings)[0]
        identity = np.eye(rows)
        residuals[IdentityTag.SLOPE_INTEGRAL].append(max(
            float(np.linalg.norm((unstable.metadata['slope'] - finite) @ gram_integral(unstable, 0.0, s) - identity,
                                 ord=2)),
            float(np.linalg.norm((stable.metadata['slope'] - finite) @ gram_integral(stable, 0.0, s) - identity,
                                 ord=2)),
        ))

    reports = []
    for tag, values in residuals.items():
        budget = tol + (estimate if tag is IdentityTag.STABLE_INTEGRAL else 0.0)
        report = IdentityReport(tag=tag, samples=tuple(pairs), residuals=tuple(values), tolerance=tol, budget=budget)
        if report.passed:
            LOG.debug(f'{tag.value}: residual {report.residual:.3g} within {budget:.3g}')
        else:
            LOG.warning(f'{tag.value}: residual {report.residual:.3g} exceeds {budget:.3g}')
        reports.append(report)
    return reports

"""
Damek–Ricci spaces: solvable extensions of H-type algebras with their
left-invariant metric.

The algebra 𝔰 = 𝔞 ⊕ 𝔳 ⊕ 𝔷 uses the orthonormal basis H, V₁…V_p, Z₁…Z_q
(in that order) with

    [H, V] = V,   [H, Z] = 2Z,   [V, V'] = 2 Σ_k ⟨J_k V, V'⟩ Z_k,

which scales the sectional curvature into [−4, 0]; (p, q) = (2, 1) is the
complex hyperbolic plane with holomorphic curvature −4.
"""
import logging
import typing

import numpy as np
from scipy.integrate import solve_ivp

from harmonic_rank.exceptions import IntegrationDiverged, InvalidSpec, StepSizeUnderflow
from harmonic_rank.fields import complement, CurvatureField


LOG = logging.getLogger(__name__)

NORMALIZATION = 'unit-h-type'


def conjugate(x: np.ndarray) -> np.ndarray:
    result = -x
    result[0] = x[0]
    return result


def cayley_dickson_product(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Multiply two elements of the real Cayley–Dickson algebra of dimension
    ``len(x)`` (1, 2, 4 or 8: reals, complex numbers, quaternions, octonions),
    using (a, b)(c, d) = (ac − d̄b, da + bc̄).
    """
    if len(x) == 1:
        return x * y

    half = len(x) // 2
    a, b = x[:half], x[half:]
    c, d = y[:half], y[half:]
    return np.concatenate([
        cayley_dickson_product(a, c) - cayley_dickson_product(conjugate(d), b),
        cayley_dickson_product(d, a) + cayley_dickson_product(b, conjugate(c)),
    ])


def module_dimension(q: int) -> int:
    """
    Dimension of the irreducible Clifford module used for *q* generators.

    :raises InvalidSpec: when *q* is outside of 1…7
    """
    if q == 1:
        return 2
    if 2 <= q <= 3:
        return 4
    if 4 <= q <= 7:
        return 8
    raise InvalidSpec(f'no H-type structure constructed for q={q} (supported: 1 ≤ q ≤ 7)', field='dr_dims')


def clifford_generators(q: int, p: typing.Optional[int] = None) -> np.ndarray:
    """
    Skew-symmetric, pairwise anticommuting generators J_1…J_q with J_k² = −Id,
    built from left multiplication by the imaginary units of the complex
    numbers, quaternions or octonions.

    :param q: number of generators
    :param p: dimension of the module; a multiple of `module_dimension`,
        defaults to that dimension
    :returns: array of shape ``(q, p, p)``
    :raises InvalidSpec: when *p* is not a positive multiple of the
        irreducible module dimension for *q*
    """
    size = module_dimension(q)
    p = size if p is None else p
    if p <= 0 or p % size:
        raise InvalidSpec(f'p={p} is not a positive multiple of the Clifford module dimension {size} for q={q}',
                          field='dr_dims')

    units = np.eye(size)
    irreducible = np.array([
        np.column_stack([cayley_dickson_product(units[k], units[j]) for j in range(size)])
        for k in range(1, q + 1)
    ])
    return np.array([np.kron(np.eye(p // size), generator) for generator in irreducible])


class DamekRicciAlgebra:
    """
    Structure constants, Levi-Civita connection and curvature tensor of the
    left-invariant metric on a Damek–Ricci group.
    """

    def __init__(self, p: int, q: int):
        self.p = p
        self.q = q
        self.dim = p + q + 1
        self.generators = clifford_generators(q, p)

        n = self.dim
        v = slice(1, p + 1)
        z = slice(p + 1, n)

        # c[i, j, k] = ⟨[E_i, E_j], E_k⟩
        c = np.zeros((n, n, n))
        for i in range(1, p + 1):
            c[0, i, i], c[i, 0, i] = 1.0, -1.0
        for k in range(p + 1, n):
            c[0, k, k], c[k, 0, k] = 2.0, -2.0
        c[v, v, z] = 2.0 * np.einsum('kba->abk', self.generators)
        self.structure = c

        # Koszul: Γ[i, j, k] = ⟨∇_{E_i} E_j, E_k⟩
        self.connection = 0.5 * (c - np.einsum('jki->ijk', c) + np.einsum('kij->ijk', c))

        g = self.connection
        # R(E_i, E_j)E_k = ∇_i ∇_j E_k − ∇_j ∇_i E_k − ∇_[E_i, E_j] E_k, component l
        self.curvature = (np.einsum('jkm,iml->ijkl', g, g)
                          - np.einsum('ikm,jml->ijkl', g, g)
                          - np.einsum('ijm,mkl->ijkl', c, g))

    @property
    def mean_curvature(self) -> float:
        return float(self.p + 2 * self.q)

    def jacobi_operator(self, velocity: np.ndarray, frame: np.ndarray) -> np.ndarray:
        """
        ⟨R(e_a, v)v, e_b⟩ for frame columns e_a, all in left-invariant
        coordinates.
        """
        along = np.einsum('j,k,ijkl->il', velocity, velocity, self.curvature)
        operator = frame.T @ along @ frame
        return 0.5 * (operator + operator.T)

    def transport(self, t: float, state: np.ndarray) -> np.ndarray:
        """
        Right-hand side of the Euler–Arnold geodesic equation together with
        parallel transport of a frame: the first column of the frame is the
        velocity, every column x obeys x' = −∇_v x.
        """
        frame = state.reshape(self.dim, self.dim)
        velocity = frame[:, 0]
        return -np.einsum('i,ja,ijk->ka', velocity, frame, self.connection).ravel()


class FrameOperator:
    """
    Jacobi operator evaluated from the dense solutions of the frame transport,
    one for t ≥ 0 and one for t ≤ 0.
    """

    def __init__(self, algebra: DamekRicciAlgebra, forward: typing.Any, backward: typing.Any):
        self.algebra = algebra
        self.forward = forward
        self.backward = backward

    def frame_at(self, t: float) -> np.ndarray:
        solution = self.forward if t >= 0 else self.backward
        return solution(t).reshape(self.algebra.dim, self.algebra.dim)

    def __call__(self, t: float) -> np.ndarray:
        frame = self.frame_at(t)
        return self.algebra.jacobi_operator(frame[:, 0], frame[:, 1:])


def dr_geodesic_frame(algebra: DamekRicciAlgebra,
                      v0: np.ndarray,
                      horizon: float,
                      *,
                      rtol: float = 1e-11,
                      atol: float = 1e-12,
                      drift_tol: float = 1e-8) -> CurvatureField:
    """
    Integrate the geodesic with initial velocity *v0* together with a parallel
    orthonormal frame over [−horizon, horizon] and wrap the resulting Jacobi
    operator as a `CurvatureField`.

    :param algebra: the Damek–Ricci algebra
    :param v0: unit initial velocity in the algebra's orthonormal basis
    :param horizon: half-length of the time interval to cover
    :param rtol: relative tolerance of the integrator
    :param atol: absolute tolerance of the integrator
    :param drift_tol: maximum allowed deviation of the frame from
        orthonormality
    :returns: a field evaluating R(t) for |t| ≤ *horizon*
    :raises ValueError: when *v0* is not a unit vector or *horizon* is not
        positive
    :raises IntegrationDiverged: when the frame drifts from orthonormality
    """
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (algebra.dim,) or abs(np.linalg.norm(v0) - 1.0) > 1e-9:
        raise ValueError(f'initial velocity should be a unit vector of dimension {algebra.dim}')
    if horizon <= 0:
        raise ValueError(f'horizon should be positive, got {horizon}')

    normal = complement(v0)
    initial = np.column_stack([v0, normal]).ravel()

    solutions = []
    for end in (horizon, -horizon):
        solution = solve_ivp(algebra.transport, (0.0, end), initial,
                             method='DOP853', rtol=rtol, atol=atol, dense_output=True)
        if not solution.success:
            raise StepSizeUnderflow(f'frame transport failed: {solution.message}', t=float(solution.t[-1]))

        frames = solution.y.T.reshape(-1, algebra.dim, algebra.dim)
        drift = np.abs(np.einsum('tia,tib->tab', frames, frames) - np.eye(algebra.dim)).max(axis=(1, 2))
        if drift.max() > drift_tol:
            where = float(solution.t[int(np.argmax(drift > drift_tol))])
            raise IntegrationDiverged(f'frame orthonormality drift {drift.max():.3g} exceeds {drift_tol:.3g}',
                                      t=where)
        LOG.debug(f'frame transport to t={end} in {len(solution.t)} steps, drift {drift.max():.3g}')
        solutions.append(solution.sol)

    return CurvatureField(
        operator=FrameOperator(algebra, *solutions),
        dim_normal=algebra.dim - 1,
        bound=2.0,
        direction=v0,
        frame=normal,
        horizon=float(horizon),
    )

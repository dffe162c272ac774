"""
Declarative manifold models, each reduced to a Jacobi operator field factory,
a curvature bound and, where available, closed-form distance and density
oracles.
"""
from collections.abc import Mapping
import dataclasses
from enum import Enum
import logging
import math
import re
import typing

import numpy as np
from scipy.linalg import null_space

from harmonic_rank.damek_ricci import clifford_generators, DamekRicciAlgebra, dr_geodesic_frame, module_dimension, \
    NORMALIZATION
from harmonic_rank.exceptions import InvalidSpec, OracleUnavailable
from harmonic_rank.fields import complement, ConstantOperator, CurvatureBlock, CurvatureField, DiagonalOperator
from harmonic_rank.geometry import DistanceOracle, EuclideanSpace, HyperbolicSpace, ProductSpace
from harmonic_rank.io import dumps


LOG = logging.getLogger(__name__)


class ModelKind(Enum):
    SPACE_FORM = 'space-form'
    TWO_BLOCK = 'two-block'
    SYNTHETIC = 'synthetic'
    DAMEK_RICCI = 'damek-ricci'
    PRODUCT = 'product'


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    dim: int
    curvature: float = -1.0  #: SpaceForm
    multiplicities: typing.Tuple[int, int] = (0, 0)  #: TwoBlockSymmetric (m₁, m₄)
    blocks: typing.Tuple[CurvatureBlock, ...] = ()  #: SyntheticField
    dr_dims: typing.Tuple[int, int] = (0, 0)  #: DamekRicci (p, q)
    factors: typing.Tuple['ModelSpec', ...] = ()  #: Product
    horizon: float = 300.0  #: DamekRicci integration horizon

    @property
    def label(self) -> str:
        """
        Short textual form, accepted by `parse_model`.
        """
        if self.kind is ModelKind.SPACE_FORM:
            if self.curvature == 0:
                return f'flat{self.dim}'
            if self.curvature == -1:
                return f'h{self.dim}'
            return f'h{self.dim}:{self.curvature:g}'
        if self.kind is ModelKind.TWO_BLOCK:
            return 'twoblock:{},{}'.format(*self.multiplicities)
        if self.kind is ModelKind.DAMEK_RICCI:
            return 'dr:{},{}'.format(*self.dr_dims)
        if self.kind is ModelKind.SYNTHETIC:
            if self.blocks == SYNTHETIC_SIN:
                return 'synthetic:sin'
            return 'synthetic:' + ';'.join(f'{b.base:g},{b.amplitude:g},{b.frequency:g},{b.phase:g}'
                                           for b in self.blocks)
        return '*'.join(factor.label for factor in self.factors)

    def to_mapping(self) -> typing.Dict[str, typing.Any]:
        mapping: typing.Dict[str, typing.Any] = {'kind': self.kind.value, 'dim': self.dim}
        if self.kind is ModelKind.SPACE_FORM:
            mapping['curvature'] = float(self.curvature)
        elif self.kind is ModelKind.TWO_BLOCK:
            mapping['multiplicities'] = list(self.multiplicities)
        elif self.kind is ModelKind.SYNTHETIC:
            mapping['blocks'] = [dataclasses.asdict(block) for block in self.blocks]
        elif self.kind is ModelKind.DAMEK_RICCI:
            mapping['dr_dims'] = list(self.dr_dims)
            mapping['horizon'] = float(self.horizon)
            mapping['normalization'] = NORMALIZATION
        else:
            mapping['factors'] = [factor.to_mapping() for factor in self.factors]
        return mapping

    @classmethod
    def from_mapping(cls, mapping: typing.Mapping[str, typing.Any]) -> 'ModelSpec':
        try:
            kind = ModelKind(mapping['kind'])
            dim = int(mapping['dim'])
            return cls(
                kind=kind,
                dim=dim,
                curvature=float(mapping.get('curvature', -1.0)),
                multiplicities=tuple(int(m) for m in mapping.get('multiplicities', (0, 0))),  # type: ignore
                blocks=tuple(CurvatureBlock(**{key: float(value) for key, value in block.items()})
                             for block in mapping.get('blocks', ())),
                dr_dims=tuple(int(d) for d in mapping.get('dr_dims', (0, 0))),  # type: ignore
                factors=tuple(cls.from_mapping(factor) for factor in mapping.get('factors', ())),
                horizon=float(mapping.get('horizon', 300.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidSpec(f'malformed model mapping: {e}', field='model') from e

    def validate(self, top_level: bool = True) -> None:
        """
        Check the invariants of this specification.

        :param top_level: whether this is a full model (dimension ≥ 2) rather
            than a product factor
        :raises InvalidSpec: describing the first violated invariant
        """
        if self.dim < (2 if top_level else 1):
            raise InvalidSpec(f'dimension {self.dim} too small', field='dim')

        if self.kind is ModelKind.SPACE_FORM:
            if self.curvature > 0:
                raise InvalidSpec(f'positive curvature {self.curvature} requested', field='curvature')
            if self.dim == 1 and self.curvature != 0:
                raise InvalidSpec('a one-dimensional space form is flat', field='curvature')
        elif self.kind is ModelKind.TWO_BLOCK:
            m1, m4 = self.multiplicities
            if m1 < 0 or m4 < 0 or m1 + m4 != self.dim - 1:
                raise InvalidSpec(f'multiplicities ({m1}, {m4}) do not add up to {self.dim - 1}',
                                  field='multiplicities')
        elif self.kind is ModelKind.SYNTHETIC:
            if len(self.blocks) != self.dim - 1:
                raise InvalidSpec(f'{len(self.blocks)} curvature blocks for dimension {self.dim}', field='blocks')
            for block in self.blocks:
                if block.upper > 0:
                    raise InvalidSpec(f'curvature block {block} becomes positive', field='blocks')
                if not all(math.isfinite(value) for value in dataclasses.astuple(block)):
                    raise InvalidSpec(f'curvature block {block} is unbounded', field='blocks')
        elif self.kind is ModelKind.DAMEK_RICCI:
            p, q = self.dr_dims
            if p < 1 or q < 1 or p + q + 1 != self.dim:
                raise InvalidSpec(f'(p, q) = ({p}, {q}) does not match dimension {self.dim}', field='dr_dims')
            if p % module_dimension(q):
                raise InvalidSpec(f'p={p} is not a multiple of the Clifford module dimension for q={q}',
                                  field='dr_dims')
            if self.horizon <= 0:
                raise InvalidSpec(f'non-positive horizon {self.horizon}', field='horizon')
        elif self.kind is ModelKind.PRODUCT:
            if len(self.factors) < 2:
                raise InvalidSpec('a product needs at least two factors', field='factors')
            for factor in self.factors:
                if factor.kind not in (ModelKind.SPACE_FORM, ModelKind.TWO_BLOCK):
                    raise InvalidSpec(f'unsupported product factor kind {factor.kind.value}', field='factors')
                factor.validate(top_level=False)
            if sum(factor.dim for factor in self.factors) != self.dim:
                raise InvalidSpec('factor dimensions do not add up', field='dim')


SYNTHETIC_SIN = (CurvatureBlock(base=-1.0, amplitude=-0.4),)

_ALIASES = {
    'h2xr': 'h2*flat1',
    'h3xr': 'h3*flat1',
    'h2xh2': 'h2*h2',
}


def space_form(dim: int, curvature: float = -1.0) -> ModelSpec:
    return ModelSpec(ModelKind.SPACE_FORM, dim, curvature=curvature)


def two_block(m1: int, m4: int) -> ModelSpec:
    return ModelSpec(ModelKind.TWO_BLOCK, m1 + m4 + 1, multiplicities=(m1, m4))


def damek_ricci(p: int, q: int, horizon: float = 300.0) -> ModelSpec:
    return ModelSpec(ModelKind.DAMEK_RICCI, p + q + 1, dr_dims=(p, q), horizon=horizon)


def synthetic(*blocks: CurvatureBlock) -> ModelSpec:
    return ModelSpec(ModelKind.SYNTHETIC, len(blocks) + 1, blocks=tuple(blocks))


def product(*factors: ModelSpec) -> ModelSpec:
    return ModelSpec(ModelKind.PRODUCT, sum(factor.dim for factor in factors), factors=tuple(factors))


def parse_model(text: str) -> ModelSpec:
    """
    Parse the short textual form of a model: ``h3``, ``h2:-4``, ``flat2``,
    ``twoblock:2,1`` (or ``twoblock21``), ``ch2``, ``hh2``, ``oh2``,
    ``dr:2,1``, ``synthetic:sin``, ``synthetic:-1,-0.4,1,0``, products joined by
    ``*`` and aliases like ``h2xr`` (``h2*flat1``).

    :param text: the textual model specification
    :returns: the parsed and validated `ModelSpec`
    :raises InvalidSpec: when *text* is not recognized or its parameters are
        invalid
    """
    text = _ALIASES.get(text.strip().lower(), text.strip().lower())

    if '*' in text:
        spec = product(*(_parse_single(part) for part in text.split('*')))
    else:
        spec = _parse_single(text)

    spec.validate()
    return spec


def _parse_single(text: str) -> ModelSpec:
    number = r'[-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?'

    if match := re.fullmatch(rf'h(\d+)(?::({number}))?', text):
        return space_form(int(match.group(1)), float(match.group(2)) if match.group(2) else -1.0)
    if match := re.fullmatch(r'(?:flat|r)(\d+)', text):
        return space_form(int(match.group(1)), 0.0)
    if match := re.fullmatch(r'twoblock:(\d+),(\d+)', text) or re.fullmatch(r'twoblock(\d)(\d)', text):
        return two_block(int(match.group(1)), int(match.group(2)))
    if match := re.fullmatch(r'ch(\d+)', text):
        k = int(match.group(1))
        return two_block(2 * k - 2, 1)
    if match := re.fullmatch(r'hh(\d+)', text):
        k = int(match.group(1))
        return two_block(4 * k - 4, 3)
    if text == 'oh2':
        return two_block(8, 7)
    if match := re.fullmatch(r'dr:(\d+),(\d+)', text):
        return damek_ricci(int(match.group(1)), int(match.group(2)))
    if text == 'synthetic:sin':
        return synthetic(*SYNTHETIC_SIN)
    if text.startswith('synthetic:'):
        try:
            blocks = [CurvatureBlock(*(float(value) for value in block.split(',')))
                      for block in text[len('synthetic:'):].split(';')]
        except (TypeError, ValueError) as e:
            raise InvalidSpec(f'malformed synthetic blocks in {text!r}', field='blocks') from e
        return synthetic(*blocks)

    raise InvalidSpec(f'unrecognized model {text!r}', field='model')


def spec_from_config(value: typing.Any) -> ModelSpec:
    """
    Turn a configured model (short text or nested mapping) into a validated
    `ModelSpec`.
    """
    if isinstance(value, ModelSpec):
        value.validate()
        return value
    if isinstance(value, str):
        return parse_model(value)
    if isinstance(value, Mapping):
        spec = ModelSpec.from_mapping(value)
        spec.validate()
        return spec
    raise InvalidSpec(f'cannot interpret {value!r} as a model', field='model')


Direction = typing.Union[None, int, np.integer, typing.Sequence[float], np.ndarray]


def _log_scalar_solution(mu: float, t: np.ndarray) -> np.ndarray:
    # log of the solution of y'' = μ²y with y(0) = 0, y'(0) = 1, for t > 0
    if mu < 1e-12:
        return np.log(t)
    return mu * t + np.log1p(-np.exp(-2 * mu * t)) - math.log(2 * mu)


class Model:
    """
    A built model: the specification, its curvature bound and oracles.

    Models are immutable after construction and safe to share between
    threads; fields are created on request per direction.
    """

    def __init__(self, spec: ModelSpec, oracle: typing.Optional[DistanceOracle] = None):
        self.spec = spec
        self.oracle = oracle
        self.dim = spec.dim
        self.metadata: typing.Dict[str, typing.Any] = {'model': spec.label}
        self._algebra: typing.Optional[DamekRicciAlgebra] = None

        if spec.kind is ModelKind.SPACE_FORM:
            self.bound = math.sqrt(-spec.curvature)
        elif spec.kind is ModelKind.TWO_BLOCK:
            self.bound = 2.0 if spec.multiplicities[1] else 1.0 if spec.multiplicities[0] else 0.0
        elif spec.kind is ModelKind.SYNTHETIC:
            self.bound = math.sqrt(max(-block.lower for block in spec.blocks))
        elif spec.kind is ModelKind.DAMEK_RICCI:
            self._algebra = DamekRicciAlgebra(*spec.dr_dims)
            self.bound = 2.0
            self.metadata['normalization'] = NORMALIZATION
        else:
            self.bound = max(Model(factor).bound for factor in spec.factors)

    def __repr__(self) -> str:
        return f'{self.__class__.__module__}.{self.__class__.__name__}({self.spec.label!r})'

    @property
    def algebra(self) -> DamekRicciAlgebra:
        if self._algebra is None:
            raise OracleUnavailable(f'{self.spec.label} is not a Damek–Ricci model', kind='algebra')
        return self._algebra

    @property
    def has_constant_operator(self) -> bool:
        return self.spec.kind in (ModelKind.SPACE_FORM, ModelKind.TWO_BLOCK, ModelKind.PRODUCT)

    def default_direction(self) -> np.ndarray:
        direction = np.zeros(self.dim)
        direction[0] = 1.0
        return direction

    def direction(self, seed: Direction = None) -> np.ndarray:
        """
        Resolve a direction descriptor into a unit vector in model coordinates.

        :param seed: `None` for the model's default direction, an integer for
            a reproducible uniformly distributed direction, or an explicit
            vector (normalized here)
        :returns: a unit vector of length `dim`
        :raises OracleUnavailable: when an explicit vector has the wrong shape
            or vanishes
        """
        if seed is None:
            return self.default_direction()
        if isinstance(seed, (int, np.integer)):
            vector = np.random.default_rng(int(seed)).standard_normal(self.dim)
        else:
            vector = np.asarray(seed, dtype=float)
        norm = np.linalg.norm(vector) if vector.ndim == 1 else 0.0
        if vector.shape != (self.dim,) or norm < 1e-14:
            raise OracleUnavailable(f'cannot evaluate {self.spec.label} along direction {seed!r}', kind='direction')
        return vector / norm

    def directions(self, count: int, seed: int = 0) -> typing.List[np.ndarray]:
        """
        *count* reproducible random unit directions.
        """
        vectors = np.random.default_rng(seed).standard_normal((count, self.dim))
        return [vector / np.linalg.norm(vector) for vector in vectors]

    def field(self, seed: Direction = None) -> CurvatureField:
        """
        The Jacobi operator field along the geodesic with the given initial
        direction.
        """
        direction = self.direction(seed)
        spec = self.spec

        if spec.kind is ModelKind.SPACE_FORM:
            frame = complement(direction)
            return CurvatureField(ConstantOperator(spec.curvature * np.eye(self.dim - 1)),
                                  dim_normal=self.dim - 1, bound=self.bound, direction=direction, frame=frame)
        if spec.kind is ModelKind.TWO_BLOCK:
            frame, operator = _two_block_frame(direction, *spec.multiplicities)
            return CurvatureField(ConstantOperator(operator), dim_normal=self.dim - 1, bound=self.bound,
                                  direction=direction, frame=frame)
        if spec.kind is ModelKind.SYNTHETIC:
            return CurvatureField(DiagonalOperator(spec.blocks), dim_normal=self.dim - 1, bound=self.bound,
                                  direction=direction, frame=complement(direction))
        if spec.kind is ModelKind.DAMEK_RICCI:
            return dr_geodesic_frame(self.algebra, direction, spec.horizon)

        frame, operator = _product_frame(direction, spec.factors)
        return CurvatureField(ConstantOperator(operator), dim_normal=self.dim - 1, bound=self.bound,
                              direction=direction, frame=frame)

    def log_density(self, seed: Direction = None) -> typing.Callable[[np.ndarray], np.ndarray]:
        """
        Closed-form log f(t) = log det A_v(t), for models with a constant
        Jacobi operator.

        :raises OracleUnavailable: for time-dependent models
        """
        if not self.has_constant_operator:
            raise OracleUnavailable(f'no closed-form density for {self.spec.label}', kind='density')

        rates = np.sqrt(np.maximum(0.0, -np.linalg.eigvalsh(self.field(seed).evaluate(0.0))))

        def log_density(t: np.ndarray) -> np.ndarray:
            t = np.asarray(t, dtype=float)
            return sum((_log_scalar_solution(float(mu), t) for mu in rates), np.zeros_like(t))

        return log_density

    def closed_form_density(self, seed: Direction = None) -> typing.Callable[[np.ndarray], np.ndarray]:
        """
        Closed-form f(t) = det A_v(t); see `log_density`.
        """
        log_density = self.log_density(seed)
        return lambda t: np.exp(log_density(t))

    def mean_curvature(self, seed: Direction = None) -> float:
        """
        Closed-form h = tr U'_v(0).
        """
        if self.spec.kind is ModelKind.DAMEK_RICCI:
            return self.algebra.mean_curvature
        if not self.has_constant_operator:
            raise OracleUnavailable(f'no closed-form mean curvature for {self.spec.label}', kind='density')
        return float(np.sqrt(np.maximum(0.0, -np.linalg.eigvalsh(self.field(seed).evaluate(0.0)))).sum())

    def require_oracle(self) -> DistanceOracle:
        if self.oracle is None:
            raise OracleUnavailable(f'no distance oracle for {self.spec.label}', kind='distance')
        return self.oracle


def _two_block_frame(direction: np.ndarray, m1: int, m4: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    # with a complex / quaternionic / octonionic structure J_1…J_m₄ on the tangent space, the −4 eigenspace
    # along v is spanned by J_k v; without one the frame is arbitrary (the spectrum does not depend on v)
    dim = m1 + m4 + 1
    operator = np.diag([-1.0] * m1 + [-4.0] * m4)
    if m4 in (1, 3, 7) and dim % module_dimension(m4) == 0:
        generators = clifford_generators(m4, dim)
        heavy = np.column_stack([generator @ direction for generator in generators])
        light = null_space(np.column_stack([direction, heavy]).T)
        return np.column_stack([light, heavy]), operator

    return complement(direction), operator


def _product_frame(direction: np.ndarray,
                   factors: typing.Sequence[ModelSpec]) -> typing.Tuple[np.ndarray, np.ndarray]:
    dim = len(direction)
    offsets = np.cumsum([0] + [factor.dim for factor in factors])
    columns, diagonal, lines = [], [], []

    for factor, start, stop in zip(factors, offsets[:-1], offsets[1:]):
        part = direction[start:stop]
        speed = np.linalg.norm(part)
        embed = np.zeros((dim, factor.dim))
        embed[start:stop] = np.eye(factor.dim)

        if speed < 1e-14:
            # a factor the geodesic does not move in: all of its directions are parallel
            columns.append(embed)
            diagonal.extend([0.0] * factor.dim)
            continue

        lines.append(embed @ (part / speed))
        if factor.dim > 1:
            if factor.kind is ModelKind.SPACE_FORM:
                frame = complement(part / speed)
                operator = factor.curvature * np.eye(factor.dim - 1)
            else:
                frame, operator = _two_block_frame(part / speed, *factor.multiplicities)
            columns.append(embed @ frame)
            diagonal.extend(speed ** 2 * np.diag(operator))

    if len(lines) > 1:
        # mixtures of the factor directions orthogonal to v span flat planes
        span = np.column_stack(lines)
        columns.append(span @ null_space((span.T @ direction)[None, :]))
        diagonal.extend([0.0] * (len(lines) - 1))

    return np.column_stack(columns), np.diag(diagonal)


def build_model(spec: typing.Union[ModelSpec, str, typing.Mapping[str, typing.Any]]) -> Model:
    """
    Build a `Model` from a specification.

    :param spec: a `ModelSpec`, its short textual form or its mapping form
    :returns: the built model, with a distance oracle for space forms and
        products of space forms
    :raises InvalidSpec: when the specification violates its invariants
    """
    spec = spec_from_config(spec)

    oracle: typing.Optional[DistanceOracle] = None
    if spec.kind is ModelKind.SPACE_FORM:
        oracle = _space_form_oracle(spec)
    elif spec.kind is ModelKind.PRODUCT and all(f.kind is ModelKind.SPACE_FORM for f in spec.factors):
        oracle = ProductSpace([_space_form_oracle(factor) for factor in spec.factors])

    model = Model(spec, oracle)
    LOG.debug(f'built model {spec.label} (β={model.bound:g}, oracle: {type(oracle).__name__ if oracle else None})')
    return model


def _space_form_oracle(spec: ModelSpec) -> DistanceOracle:
    if spec.curvature < 0:
        return HyperbolicSpace(spec.dim, spec.curvature)
    return EuclideanSpace(spec.dim)


def jacobi_operator(model: Model, seed: Direction, t: float) -> np.ndarray:
    """
    Evaluate the Jacobi operator R(t) along the geodesic selected by *seed*.

    :param model: a built model
    :param seed: direction descriptor, see `Model.direction`
    :param t: time along the geodesic
    :returns: symmetric ``(n-1, n-1)`` matrix
    :raises OracleUnavailable: when the model cannot evaluate along *seed*
        or at *t*
    """
    return model.field(seed).evaluate(t)


def distance(model: Model, p: np.ndarray, q: np.ndarray) -> float:
    """
    Distance between two points of a model with a distance oracle.

    :raises OracleUnavailable: for models without closed-form distances
    """
    return float(model.require_oracle().distance(np.asarray(p, dtype=float), np.asarray(q, dtype=float)))


def canonical_text(spec: ModelSpec) -> str:
    """
    Canonical textual form of a specification, embedded in result files.
    """
    return dumps(spec.to_mapping())

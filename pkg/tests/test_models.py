import math

import numpy as np
import pytest

from harmonic_rank import build_model, InvalidSpec, ModelKind, OracleUnavailable, parse_model
from harmonic_rank.fields import CurvatureBlock
from harmonic_rank.geometry import EuclideanSpace, HyperbolicSpace, ProductSpace
from harmonic_rank.models import canonical_text, distance, jacobi_operator, ModelSpec, product, space_form, \
    spec_from_config, two_block


@pytest.mark.parametrize('text, kind, dim', [
    ('h2', ModelKind.SPACE_FORM, 2),
    ('H3', ModelKind.SPACE_FORM, 3),
    ('h2:-4', ModelKind.SPACE_FORM, 2),
    ('flat3', ModelKind.SPACE_FORM, 3),
    ('twoblock21', ModelKind.TWO_BLOCK, 4),
    ('twoblock:2,1', ModelKind.TWO_BLOCK, 4),
    ('ch2', ModelKind.TWO_BLOCK, 4),
    ('hh2', ModelKind.TWO_BLOCK, 8),
    ('oh2', ModelKind.TWO_BLOCK, 16),
    ('dr:2,1', ModelKind.DAMEK_RICCI, 4),
    ('synthetic:sin', ModelKind.SYNTHETIC, 2),
    ('synthetic:-1,0.5,2,0;-2,0,1,0', ModelKind.SYNTHETIC, 3),
    ('h2xr', ModelKind.PRODUCT, 3),
    ('h2*h2', ModelKind.PRODUCT, 4),
])
def test_parse(text, kind, dim):
    spec = parse_model(text)

    assert spec.kind is kind
    assert spec.dim == dim


@pytest.mark.parametrize('text', [
    'h1',  # a one-dimensional model
    'h2:1',  # positive curvature
    'dr:3,1',  # p not a multiple of the module dimension
    'dr:2,9',  # no H-type structure for q=9
    'synthetic:-1,2,1,0',  # becomes positive
    'sphere2',
])
def test_parse_invalid(text):
    with pytest.raises(InvalidSpec):
        parse_model(text)


def test_label_roundtrip():
    for text in ('h2', 'h3:-0.25', 'flat2', 'twoblock:2,1', 'dr:4,3', 'synthetic:sin', 'h2*flat1'):
        spec = parse_model(text)
        assert parse_model(spec.label) == spec


def test_mapping_roundtrip():
    for text in ('h2:-4', 'twoblock:8,7', 'dr:2,1', 'synthetic:-1,-0.4,1,0', 'h2xr'):
        spec = parse_model(text)
        assert ModelSpec.from_mapping(spec.to_mapping()) == spec
        assert spec_from_config(spec.to_mapping()) == spec


def test_spec_from_config_invalid():
    with pytest.raises(InvalidSpec):
        spec_from_config(42)
    with pytest.raises(InvalidSpec):
        spec_from_config({'kind': 'space-form'})
    with pytest.raises(InvalidSpec):
        spec_from_config({'kind': 'product', 'dim': 3, 'factors': [space_form(3).to_mapping()]})


def test_canonical_text():
    text = canonical_text(parse_model('dr:2,1'))

    assert 'kind: damek-ricci' in text
    assert 'normalization: unit-h-type' in text


def test_oracles():
    assert isinstance(build_model('h3').oracle, HyperbolicSpace)
    assert isinstance(build_model('flat2').oracle, EuclideanSpace)
    assert isinstance(build_model('h2xr').oracle, ProductSpace)
    assert build_model('twoblock21').oracle is None
    assert build_model(product(two_block(2, 1), space_form(1, 0.0))).oracle is None

    with pytest.raises(OracleUnavailable):
        build_model('dr:2,1').require_oracle()


@pytest.mark.parametrize('text, bound', [
    ('h2', 1.0), ('h2:-4', 2.0), ('flat3', 0.0), ('twoblock21', 2.0), ('dr:2,1', 2.0), ('h2xr', 1.0),
    ('h3xr', 1.0), ('h2:-4*flat1', 2.0), ('flat1*twoblock21', 2.0), ('synthetic:sin', math.sqrt(1.4)),
])
def test_bounds(text, bound):
    assert build_model(text).bound == pytest.approx(bound)


def test_product_with_line_factor():
    model = build_model(product(space_form(2, -1.0), space_form(1, 0.0)))

    assert model.dim == 3
    assert model.bound == pytest.approx(1.0)
    along_line = model.oracle.point(np.array([0.0, 0.0, 1.0]), 2.0)
    assert distance(model, model.oracle.basepoint(), along_line) == pytest.approx(2.0)
    # a line alone is still rejected as a model
    with pytest.raises(InvalidSpec):
        build_model('flat1')


def test_directions():
    model = build_model('h3')

    assert np.allclose(model.direction(), [1.0, 0.0, 0.0])
    assert np.allclose(model.direction([0.0, 3.0, 4.0]), [0.0, 0.6, 0.8])
    assert np.allclose(model.direction(5), model.direction(np.int64(5)))
    assert np.linalg.norm(model.direction(5)) == pytest.approx(1.0)

    directions = model.directions(4, seed=1)
    assert len(directions) == 4
    assert all(np.linalg.norm(direction) == pytest.approx(1.0) for direction in directions)
    assert np.allclose(directions, model.directions(4, seed=1))

    with pytest.raises(OracleUnavailable):
        model.direction([1.0, 0.0])
    with pytest.raises(OracleUnavailable):
        model.direction([0.0, 0.0, 0.0])


def test_space_form_operator():
    operator = jacobi_operator(build_model('h3:-4'), 3, 1.5)

    assert np.allclose(operator, -4 * np.eye(2))


@pytest.mark.parametrize('seed', [None, 0, 1, 2])
def test_two_block_spectrum(seed):
    field = build_model('twoblock21').field(seed)
    operator = field.evaluate(0.0)

    assert np.allclose(np.linalg.eigvalsh(operator), [-4.0, -1.0, -1.0])
    # the frame is orthonormal and normal to the direction
    assert np.allclose(field.frame.T @ field.frame, np.eye(3))
    assert np.allclose(field.direction @ field.frame, 0.0)


def test_two_block_heavy_direction():
    # the complex structure sends the direction into the −4 eigenspace
    model = build_model('ch2')
    field = model.field([1.0, 0.0, 0.0, 0.0])
    heavy = field.frame[:, -1]
    generator = np.array([[0.0, -1.0], [1.0, 0.0]])

    assert np.allclose(np.abs(heavy[:2]), np.abs(generator @ np.array([1.0, 0.0])))


def test_product_operator():
    model = build_model('h2xr')
    along_hyperbolic = np.linalg.eigvalsh(model.field([1.0, 0.0, 0.0]).evaluate(0.0))
    mixed = np.linalg.eigvalsh(model.field([math.sqrt(0.5), 0.0, math.sqrt(0.5)]).evaluate(0.0))
    along_flat = np.linalg.eigvalsh(model.field([0.0, 0.0, 1.0]).evaluate(0.0))

    assert np.allclose(along_hyperbolic, [-1.0, 0.0])
    assert np.allclose(mixed, [-0.5, 0.0])
    assert np.allclose(along_flat, [0.0, 0.0])


def test_synthetic_operator():
    spec = parse_model('synthetic:sin')
    field = build_model(spec).field()

    assert field.evaluate(math.pi / 2)[0, 0] == pytest.approx(-1.4)
    assert not field.is_constant
    with pytest.raises(OracleUnavailable):
        build_model(spec).log_density()
    assert spec.blocks == (CurvatureBlock(-1.0, -0.4),)


@pytest.mark.parametrize('text, h', [
    ('h2', 1.0), ('h4', 3.0), ('h2:-4', 2.0), ('twoblock21', 4.0), ('hh2', 10.0), ('oh2', 22.0), ('flat3', 0.0),
    ('dr:2,1', 4.0), ('dr:4,3', 10.0),
])
def test_mean_curvature(text, h):
    assert build_model(text).mean_curvature() == pytest.approx(h)


def test_closed_form_density():
    t = np.linspace(0.5, 10.0, 20)

    assert np.allclose(build_model('h3').log_density()(t), 2 * np.log(np.sinh(t)))
    assert np.allclose(build_model('h2:-4').closed_form_density()(t), np.sinh(2 * t) / 2)
    assert np.allclose(build_model('flat3').closed_form_density()(t), t ** 2)
    assert np.allclose(build_model('h2xr').closed_form_density()(t), t * np.sinh(t))
    assert np.allclose(build_model('twoblock21').log_density()(t),
                       2 * np.log(np.sinh(t)) + np.log(np.sinh(2 * t) / 2))


def test_distance():
    model = build_model('h2')
    p = model.oracle.point(np.array([1.0, 0.0]), 2.0)
    q = model.oracle.point(np.array([-1.0, 0.0]), 3.0)

    assert distance(model, p, q) == pytest.approx(5.0)
    with pytest.raises(OracleUnavailable):
        distance(build_model('twoblock21'), p, q)

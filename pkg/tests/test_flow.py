import math

import numpy as np
import pytest

from harmonic_rank import build_model, build_splitting, EmptyKernel, EmptySubspace, exponent_fit, flow_derivative, \
    invariance_angles, linear_growth_check, parallel_field_detect, SasakiVector, Subspace


def test_sasaki_vector():
    xi = SasakiVector.of([1.0, 2.0], [3.0, 4.0], along=0.5)

    assert np.allclose(xi.normal, [1.0, 2.0])
    assert xi.along == 0.5
    assert xi.norm == pytest.approx(5.5)
    assert np.allclose(xi.to_array(), [1.0, 2.0, 0.5, 3.0, 4.0])

    again = SasakiVector.from_array(xi.to_array())
    assert np.allclose(again.xi1, xi.xi1)
    assert np.allclose(again.xi2, xi.xi2)
    assert np.allclose(SasakiVector.of([1.0]).xi2, [0.0])


def test_flow_derivative():
    model = build_model('h2')
    xi = SasakiVector.of([1.0], [1.0], along=0.25)

    image = flow_derivative(model, None, xi, 2.0)

    # the unstable Jacobi field e^t, the flow direction carried along
    assert np.allclose(image.normal, [math.exp(2.0)])
    assert np.allclose(image.xi2, [math.exp(2.0)])
    assert image.along == 0.25
    assert flow_derivative(model, None, xi, 0.0) is xi

    backwards = flow_derivative(model, None, SasakiVector.of([1.0], [-1.0]), -1.5)
    assert np.allclose(backwards.normal, [math.exp(1.5)])


@pytest.mark.parametrize('text, dims', [
    ('h3', {'Ep': 1, 'Ec': 1, 'Es': 2, 'Eu': 2}),
    ('twoblock21', {'Ep': 1, 'Ec': 1, 'Es': 3, 'Eu': 3}),
    ('h2xr', {'Ep': 2, 'Ec': 3, 'Es': 1, 'Eu': 1}),
    ('flat2', {'Ep': 2, 'Ec': 3, 'Es': 0, 'Eu': 0}),
])
def test_splitting_dimensions(text, dims):
    splitting = build_splitting(build_model(text))

    assert splitting.dims == dims
    assert splitting.spans
    assert splitting.no_focal_identity


def test_splitting_vectors():
    splitting = build_splitting(build_model('h2:-4'))

    # E^s is spanned by (x, 0, S'x) with S' = −2
    assert np.allclose(np.abs(splitting.Es[:, 0]), np.array([1.0, 0.0, 2.0]) / math.sqrt(5))
    assert np.sign(splitting.Es[0, 0]) != np.sign(splitting.Es[2, 0])
    assert np.allclose(splitting.basis('unstable'), splitting.Eu)


def test_exponent_hyperbolic():
    model = build_model('h2')

    stable = exponent_fit(model, subspace=Subspace.STABLE, T=10.0, n_samples=2)
    unstable = exponent_fit(model, subspace='unstable', T=10.0, n_samples=2)

    assert stable.rate == pytest.approx(1.0, abs=0.02)
    assert unstable.rate == pytest.approx(1.0, abs=0.02)
    assert stable.a == pytest.approx(1.0, abs=1e-6)
    assert stable.envelope is None
    assert stable.log_norms.shape == (3, len(stable.grid))
    assert 't' in stable.columns()


@pytest.mark.slow
def test_exponent_two_block():
    fit = exponent_fit(build_model('twoblock21'), 1, Subspace.STABLE, T=10.0, n_samples=2)

    # basis directions along the eigenvectors of U'(0) − S'(0) come first
    assert fit.rates[:3] == pytest.approx([1.0, 1.0, 2.0], abs=0.02)
    assert fit.rate == pytest.approx(1.0, abs=0.02)
    assert fit.residual < 0.05


def test_exponent_central():
    fit = exponent_fit(build_model('h2xr'), subspace=Subspace.CENTRAL, T=8.0, n_samples=4)

    assert fit.envelope < 2.0
    assert math.isnan(fit.a)


def test_exponent_empty_subspace():
    with pytest.raises(EmptySubspace) as e:
        exponent_fit(build_model('flat2'), subspace=Subspace.STABLE, T=4.0)

    assert e.value.subspace == 'stable'


def test_parallel_fields():
    field = build_model('h2xr').field()
    basis = parallel_field_detect(field)

    assert basis.shape == (2, 1)
    assert np.allclose(field.evaluate(3.0) @ basis, 0.0)
    assert np.linalg.norm(basis) == pytest.approx(1.0)
    assert parallel_field_detect(build_model('h3')).shape == (2, 0)
    assert parallel_field_detect(build_model('flat3'), check=False).shape == (2, 2)


def test_parallel_fields_invalid_interval():
    with pytest.raises(ValueError):
        parallel_field_detect(build_model('h2'), T=0.0)


def test_linear_growth():
    report = linear_growth_check(build_model('h2xr'))

    assert report.passed
    assert report.residuals.shape == (len(report.grid), 1)


def test_linear_growth_rank_one():
    with pytest.raises(EmptyKernel):
        linear_growth_check(build_model('h2'))


@pytest.mark.parametrize('text, seed', [('h3', None), ('twoblock21', 1)])
def test_invariance(text, seed):
    angles = invariance_angles(build_model(text), seed, 1.5)

    assert angles['stable'].max() < 1e-6
    assert angles['unstable'].max() < 1e-6


def test_invariance_trivial():
    angles = invariance_angles(build_model('flat2'), t=1.0)

    assert angles['stable'].size == 0

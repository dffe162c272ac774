import math

import numpy as np
import pytest

from harmonic_rank import AmbiguousKernel, anosov_certificate, AnosovVerdict, build_model, EmptyKernel, \
    F_consistency, FlatModel, harmonicity_check, rank_of, time_grid, volume_growth_class
from harmonic_rank.rank import constrank_bounds_check, density_profile, GrowthClass, minimal_growth_gap


short_grid = time_grid(0.5, 8.0, 0.5)


@pytest.mark.parametrize('text, h, k', [
    ('h2', 1.0, 0.0),
    ('h3', 2.0, 0.0),
    ('h2:-4', 2.0, 0.0),
    ('twoblock21', 4.0, 0.0),
    ('flat3', 0.0, 2.0),
    ('h2xr', 1.0, 1.0),
])
def test_density_profile(text, h, k):
    profile = density_profile(build_model(text))

    assert profile.h == pytest.approx(h, abs=1e-4)
    assert profile.k == pytest.approx(k, abs=1e-2)
    assert profile.increasing


def test_density_closed_form():
    model = build_model('twoblock21')
    profile = density_profile(model, 1, short_grid)

    assert np.allclose(profile.log_f, model.log_density()(short_grid), rtol=1e-9)
    assert profile.dim == 4
    assert set(profile.columns()) == {'t', 'f', 'log_f', 'logderiv', 'F'}


def test_density_grid_from_zero():
    with pytest.raises(ValueError):
        density_profile(build_model('h2'), grid=time_grid(0.0, 4.0))


@pytest.mark.parametrize('text, growth', [
    ('flat3', GrowthClass.POLYNOMIAL),
    ('h2', GrowthClass.PURELY_EXPONENTIAL),
    ('twoblock21', GrowthClass.PURELY_EXPONENTIAL),
    ('h2xr', GrowthClass.EXPONENTIAL_HIGHER_RANK),
])
def test_volume_growth(text, growth):
    report = volume_growth_class(density_profile(build_model(text)))

    assert report.growth is growth


def test_volume_growth_constants():
    report = volume_growth_class(density_profile(build_model('h2')))

    # F(t) = sinh(t)·e^{−t} increases from F(1) towards 1/2
    assert report.a == pytest.approx(math.sinh(1.0) / math.e, rel=1e-6)
    assert report.b == pytest.approx(0.5, rel=1e-6)
    assert volume_growth_class(density_profile(build_model('flat3'))).degree == pytest.approx(2.0, abs=1e-3)


def test_volume_growth_short_profile():
    with pytest.raises(ValueError):
        volume_growth_class(density_profile(build_model('h2'), grid=short_grid))


@pytest.mark.parametrize('text, rank', [
    ('h2', 1),
    ('h3', 1),
    ('twoblock21', 1),
    ('flat2', 2),
    ('flat3', 3),
    ('h2xr', 2),
])
def test_rank(text, rank):
    report = rank_of(build_model(text))

    assert report.rank == rank
    assert report.focal_free
    assert report.trace_monotone


def test_rank_kernel():
    report = rank_of(build_model('h2xr'))

    # the kernel of a hyperbolic direction in H²×R is the flat factor
    assert report.kernel.shape == (2, 1)
    assert report.limit_eigs == pytest.approx([0.0, 2.0], abs=1e-6)
    assert report.rho == pytest.approx(2.0)
    assert report.beta_positive == pytest.approx(2.0)


def test_rank_trace():
    radii = [1.0, 2.0, 4.0]
    report = rank_of(build_model('h2'), radii=radii)

    # U'(0) − S'_{t}(0) = 1 + coth t
    assert report.eigen_trace[:, 0] == pytest.approx([1 + 1 / math.tanh(r) for r in radii])
    assert math.isnan(rank_of(build_model('flat2')).rho)


def test_rank_ambiguous():
    with pytest.raises(AmbiguousKernel):
        rank_of(build_model('h2'), eps=1.0)


def test_anosov():
    model = build_model('h3')
    certificate = anosov_certificate(model, [None, *model.directions(3, seed=1)])

    assert certificate.verdict is AnosovVerdict.ANOSOV
    assert certificate.rho == pytest.approx(2.0)
    assert certificate.within_bound
    assert len(certificate.minima) == 4


@pytest.mark.parametrize('text', ['flat2', 'h2xr'])
def test_anosov_degenerate(text):
    certificate = anosov_certificate(build_model(text), [None], 1e-3)

    assert certificate.verdict is AnosovVerdict.DEGENERATE
    assert certificate.within_bound


def test_anosov_no_directions():
    with pytest.raises(ValueError):
        anosov_certificate(build_model('h2'), [])


@pytest.mark.parametrize('text', ['h2', 'h3', 'h2:-4'])
def test_minimal_growth_constant_curvature(text):
    model = build_model(text)
    growth = minimal_growth_gap(density_profile(model), limit_operator=2 * model.bound * np.eye(model.dim - 1))

    assert growth.gap == pytest.approx(0.0, abs=1e-6)
    assert growth.equality
    assert growth.equality_case


def test_minimal_growth_two_block():
    growth = minimal_growth_gap(density_profile(build_model('twoblock21')), limit_operator=np.diag([2.0, 2.0, 4.0]))

    # lim F = 1/16 above ((n−1)/(2h))^{n−1} = (3/8)³
    assert growth.limit == pytest.approx(1 / 16, rel=1e-6)
    assert growth.bound == pytest.approx((3 / 8) ** 3)
    assert not growth.equality
    assert growth.equality_case is False


def test_minimal_growth_flat():
    with pytest.raises(FlatModel):
        minimal_growth_gap(density_profile(build_model('flat2')))


def test_F_consistency():
    report = F_consistency(build_model('h2'), grid=time_grid(1.0, 16.0, 1.0))

    assert report.passed
    assert report.F[0] < report.F[-1]
    # a = 1/(1 + coth 1), attaining a·e^t = sinh t at t = 1
    assert report.lower_constant == pytest.approx(1 / (1 + 1 / math.tanh(1.0)))


@pytest.mark.parametrize('text', ['h2', 'h3', 'twoblock21'])
def test_F_consistency_long_grid(text):
    report = F_consistency(build_model(text), grid=time_grid(0.5, 15.0, 0.5))

    assert report.passed
    assert report.residual < 1e-6
    # F saturates within rounding towards the end of the grid
    assert np.all(np.diff(report.F[:10]) > 0)


def test_F_consistency_flat():
    with pytest.raises(FlatModel):
        F_consistency(build_model('flat3'), grid=time_grid(1.0, 8.0, 1.0))


def test_harmonicity():
    model = build_model('twoblock21')
    report = harmonicity_check(model, [1, 2, 3], short_grid, mean_curvature=True)

    assert report.passed
    assert report.mean_curvatures == pytest.approx([4.0, 4.0, 4.0])


def test_harmonicity_product():
    # products are not harmonic: along the flat factor f = t², along the hyperbolic factor f = t·sinh t
    report = harmonicity_check(build_model('h2xr'), [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], short_grid)

    assert not report.passed
    assert report.h_values[1] < 1e-3


@pytest.mark.slow
def test_harmonicity_damek_ricci():
    grid = time_grid(0.1, 8.0, 0.1)
    report = harmonicity_check(build_model('dr:2,1'), list(range(10)), grid, mean_curvature=True)

    assert report.passed
    assert report.deviation < 1e-4
    assert report.mean_curvatures == pytest.approx([4.0] * 10, rel=1e-4)
    assert np.ptp(report.mean_curvatures) < 1e-4


@pytest.mark.slow
def test_harmonicity_product_random_directions():
    # the same check on H²×ℝ misses by far more than its tolerance
    report = harmonicity_check(build_model('h2xr'), list(range(10)), time_grid(0.1, 8.0, 0.1))

    assert not report.passed
    assert report.deviation > 1e-1


def test_harmonicity_single_direction():
    with pytest.raises(ValueError):
        harmonicity_check(build_model('h2'), [None])


def test_constrank_bounds():
    report = constrank_bounds_check(build_model('h2xr'), alpha=1.0, grid=[0.5, 1.0, 2.0, 8.0])

    assert report.passed
    assert list(report.radii) == [1.0, 2.0, 8.0]
    # ⟨(U'(0) − S'_{t}(0))x, x⟩ = 1/t on the flat factor
    assert report.values[:, 0] == pytest.approx([1.0, 0.5, 0.125], rel=1e-8)


def test_constrank_rank_one():
    with pytest.raises(EmptyKernel):
        constrank_bounds_check(build_model('h2'))

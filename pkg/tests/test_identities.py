import pytest

from harmonic_rank import build_model, identity_suite, IdentityTag
from harmonic_rank.identities import IdentityReport, sample_pairs


def _assert_passed(reports):
    assert {report.tag for report in reports} == set(IdentityTag)
    for report in reports:
        assert report.passed, f'{report.tag.value} residual {report.residual:.3g} exceeds {report.budget:.3g}'


def test_sample_pairs():
    pairs = sample_pairs(5, window=2.0, seed=3)

    assert len(pairs) == 5
    assert pairs == sample_pairs(5, window=2.0, seed=3)
    assert pairs != sample_pairs(5, window=2.0, seed=4)
    assert all(-2.0 <= t <= 2.0 and -2.0 <= u <= 2.0 for t, u in pairs)


def test_report():
    report = IdentityReport(tag=IdentityTag.COCYCLE, samples=((0.0, 1.0), (1.0, 0.0)), residuals=(1e-12, 3e-9),
                            tolerance=1e-8, budget=1e-8)

    assert report.residual == 3e-9
    assert report.passed
    assert not IdentityReport(tag=IdentityTag.STABLE_INTEGRAL, samples=((0.0, 1.0),), residuals=(2e-8,),
                              tolerance=1e-8, budget=1e-8).passed


def test_suite_hyperbolic():
    _assert_passed(identity_suite(build_model('h2').field(), 3, 1e-6, window=2.0))


def test_suite_explicit_pairs():
    reports = identity_suite(build_model('h3').field(), [(0.5, -1.0), (-1.5, 2)], 1e-6)

    assert all(report.samples == ((0.5, -1.0), (-1.5, 2.0)) for report in reports)
    assert all(len(report.residuals) == 2 for report in reports)
    _assert_passed(reports)


def test_suite_no_samples():
    with pytest.raises(ValueError):
        identity_suite(build_model('h2').field(), [])


@pytest.mark.slow
def test_suite_two_block():
    _assert_passed(identity_suite(build_model('twoblock21').field(2), 3, 1e-6, window=2.0, seed=2))


@pytest.mark.slow
def test_suite_variable_curvature():
    _assert_passed(identity_suite(build_model('synthetic:sin').field(), 3, 1e-6, window=3.0, seed=5))

import pytest

from harmonic_rank.exceptions import InvalidConfigurationError, MergeConflictError
from harmonic_rank.utils import Conflict, dotted_items, merge_into, parse_overrides, split_keys


def test_merge_trivial():
    left = {'model': 'h2'}
    right = {'seed': 42}

    merged = merge_into(left, right)

    assert len(merged) == 2, 'trivial merge of incorrect length'
    assert merged['model'] == 'h2', 'trivial merge supplied wrong value'
    assert merged['seed'] == 42, 'trivial merge supplied wrong value'


def test_merge_overlap():
    left = {'jacobi': {'rtol': 1e-12, 'atol': 1e-14}}
    right = {'jacobi': {'chunk': 4.0, 'method': 'DOP853'}}

    merged = merge_into(left, right)

    assert len(merged) == 1, 'overlapping merge of incorrect length'
    assert len(merged['jacobi']) == 4, 'value in overlapping merge of incorrect length'


def test_merge_conflict():
    left = {'jacobi': {'rtol': 1e-12}}
    right = {'jacobi': {'rtol': 1e-10}}

    with pytest.raises(MergeConflictError) as e:
        merge_into(left, right)

    assert e.value.conflict == 'jacobi.rtol', "conflict error didn't specify conflicting key"


def test_merge_conflict_overwrite():
    left = {'hyperbolicity': {'scales': [4, 8, 16, 32], 'mc': 100}}
    right = {'hyperbolicity': {'scales': [2]}}

    merged = merge_into(left, right, conflict=Conflict.OVERWRITE)

    assert merged['hyperbolicity'] == {'scales': [2], 'mc': 100}


def test_split_none():
    subject = {'model': 'h2', 'seed': 123}

    assert split_keys(subject) == subject


def test_split_multiple():
    subject = {'jacobi.rtol': 1e-10, 'hyperbolicity.busemann.tol': 1e-9, 'jacobi': {'atol': 1e-14}}

    separated = split_keys(subject)

    assert separated == {
        'jacobi': {'rtol': 1e-10, 'atol': 1e-14},
        'hyperbolicity': {'busemann': {'tol': 1e-9}},
    }


def test_split_key_types():
    with pytest.raises(ValueError) as e:
        assert not split_keys({'radii': {10: 'ten'}})

    assert '10' in str(e.value)
    assert 'int' in str(e.value)


def test_split_colliding(caplog):
    split_keys({'get': 1}, colliding={'get'})

    assert 'collides' in caplog.text


def test_dotted_items():
    subject = {'seed': 1, 'jacobi': {'rtol': 1e-10, 'renormalize': {'upper': 1e8}}, 'scales': [4, 8]}

    assert dict(dotted_items(subject)) == {
        'seed': 1,
        'jacobi.rtol': 1e-10,
        'jacobi.renormalize.upper': 1e8,
        'scales': [4, 8],
    }


def test_parse_overrides():
    overrides = parse_overrides(['jacobi.rtol=1.0e-10', 'seed=3', 'hyperbolicity.scales=[4, 8]', 'model=h2xr'])

    assert overrides == {
        'jacobi': {'rtol': 1e-10},
        'seed': 3,
        'hyperbolicity': {'scales': [4, 8]},
        'model': 'h2xr',
    }


def test_parse_overrides_exponent_without_dot():
    overrides = parse_overrides(['jacobi.rtol=1e-10', 'anosov.rho_tol=5E-3', 'seed=10'])

    assert overrides == {'jacobi': {'rtol': 1e-10}, 'anosov': {'rho_tol': 5e-3}, 'seed': 10}
    assert isinstance(overrides['jacobi']['rtol'], float)


def test_parse_overrides_last_wins():
    assert parse_overrides(['seed=1', 'seed=2']) == {'seed': 2}


@pytest.mark.parametrize('assignment', ['seed', '=3', ''])
def test_parse_overrides_malformed(assignment):
    with pytest.raises(InvalidConfigurationError):
        parse_overrides([assignment])

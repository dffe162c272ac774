from collections.abc import Mapping, Sequence
import dataclasses
from enum import Enum
import pickle

import numpy as np
import pytest

from harmonic_rank import Configuration, ConfigurationError, Missing, NotConfigured, unwrap
from harmonic_rank.configuration import NoDefault
from harmonic_rank.exceptions import NotConfiguredError
from harmonic_rank.jacobi import JacobiSettings


def test_empty():
    def run_test(subject):
        assert subject.get('path.without.value', default=None) is None
        assert subject.get('another.path.without.value', default=4) == 4
        with pytest.raises(ConfigurationError) as e:
            subject.get('some_long.path')
        assert 'some_long' in str(e.value)
        with pytest.raises(KeyError) as e:
            subject['some_long']
        assert 'some_long' in str(e.value)

    run_test(Configuration())
    run_test(Configuration({}))


def test_value_types():
    def run_test(subject, key, expected_type):
        assert isinstance(subject.get(key), expected_type), f'key {key} not of type {expected_type}'

    run_test(Configuration({'model': 'h2'}), 'model', str)
    run_test(Configuration({'seed': 42}), 'seed', int)
    run_test(Configuration({'jacobi': {'rtol': 1e-12}}), 'jacobi.rtol', float)
    run_test(Configuration({'scales': [4, 8, 16]}), 'scales', Sequence)
    run_test(Configuration({'density': {'tmax': 24.0}}), 'density', Mapping)


def test_dotted_keys():
    subject = Configuration({'jacobi.rtol': 1e-10, 'jacobi': {'atol': 1e-14}})

    assert subject.jacobi.rtol == 1e-10
    assert subject.get('jacobi.atol') == 1e-14
    assert len(subject.jacobi) == 2


def test_precedence():
    subject = Configuration({'seed': 0, 'jacobi': {'rtol': 1e-12, 'atol': 1e-14}},
                            {'jacobi.rtol': 1e-10},
                            {'seed': 5})

    assert subject.seed == 5
    assert subject.jacobi.rtol == 1e-10
    assert subject.jacobi.atol == 1e-14


def test_sequences_replaced_wholesale():
    subject = Configuration({'hyperbolicity': {'scales': [4, 8, 16, 32]}}, {'hyperbolicity.scales': [2]})

    assert subject.get('hyperbolicity.scales') == (2,)


def test_as_type():
    # yaml reads 1e-10 (no dot in the mantissa) as a string
    subject = Configuration({'tol': '1e-10', 'count': '16'})

    assert subject.get('tol') == '1e-10'
    assert subject.get('tol', as_type=float) == 1e-10
    assert subject.get('count', as_type=int) == 16


def test_missing():
    subject = Configuration({'model': 'h2'})

    assert subject.not_there is NotConfigured
    assert not subject.not_there
    assert subject.not_there.deeper is NotConfigured

    strict = Configuration({'model': 'h2'}, missing=Missing.ERROR)
    with pytest.raises(AttributeError):
        assert not strict.not_there
    with pytest.raises(NotConfiguredError) as e:
        strict.get('not_there')
    assert e.value.key == 'not_there'


def test_no_default_doc_friendly():
    assert 'raise' in repr(NoDefault)


def test_assignment_unsupported():
    subject = Configuration({'model': 'h2'})

    with pytest.raises(AttributeError):
        subject.model = 'h3'


def test_repr():
    subject = Configuration({'model': 'h2', 'jacobi.rtol': 1e-10})

    assert repr(subject) == "harmonic_rank.configuration.Configuration(keys=['model', 'jacobi'])"
    assert repr(NotConfigured) == '(not configured)'


def test_gallery_entries():
    subject = Configuration({'gallery': ['h2', {'kind': 'two-block', 'm1': 2, 'm4': 1}]})

    entries = subject.gallery
    assert entries[0] == 'h2'
    assert isinstance(entries[1], Configuration)
    assert entries[1].m4 == 1


def test_pickling():
    subject = Configuration({'jacobi': {'rtol': 1e-11}})

    reencoded = pickle.loads(pickle.dumps(subject))

    assert subject is not reencoded
    assert reencoded.jacobi.rtol == 1e-11
    assert reencoded.not_there is NotConfigured


class Color(Enum):
    RED = 'red'


@dataclasses.dataclass
class Point:
    x: float
    label: Color


def test_unwrap():
    subject = {
        'config': Configuration({'a': {'b': 1}}),
        'array': np.arange(3.0),
        'scalar': np.float64(0.5),
        'enum': Color.RED,
        'point': Point(1.0, Color.RED),
        'tuple': (np.int64(1), 2),
    }

    assert unwrap(subject) == {
        'config': {'a': {'b': 1}},
        'array': [0.0, 1.0, 2.0],
        'scalar': 0.5,
        'enum': 'red',
        'point': {'x': 1.0, 'label': 'red'},
        'tuple': [1, 2],
    }
    assert type(unwrap(np.float64(0.5))) is float


def test_jacobi_settings_from_configuration():
    assert JacobiSettings.from_configuration(None) == JacobiSettings()

    settings = JacobiSettings.from_configuration({'jacobi': {'rtol': '1e-10', 'chunk': 2}})

    assert settings.rtol == 1e-10
    assert settings.chunk == 2.0
    assert settings.method == 'DOP853'

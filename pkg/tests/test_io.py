from os import path
from unittest.mock import patch

import numpy as np
import pytest

from harmonic_rank import Configuration, loadf, loads, NotConfigured, read_columns, write_columns
from harmonic_rank.io import DEFAULT_LOAD_ORDER, dumpf, dumps, load, load_name, loaders, Locality, \
    read_envvar_file, read_envvars, read_xdg_config_home


test_files = path.join(path.dirname(__file__), 'files')


def _assert_run_values(conf):
    assert conf.model == 'h2'
    assert conf.seed == 7
    assert isinstance(conf.jacobi, Configuration)
    assert conf.jacobi.rtol == 1e-11
    assert conf.hyperbolicity.scales == (4, 8)
    assert conf.does_not.exist is NotConfigured


def test_load():
    with open(path.join(test_files, 'run.yaml')) as file:
        _assert_run_values(load(file))


def test_loadf():
    _assert_run_values(loadf(path.join(test_files, 'run.yaml')))


def test_loadf_multiple():
    subject = loadf(path.join(test_files, 'run.yaml'), path.join(test_files, 'defaults.yaml'))

    # later files take precedence
    assert subject.jacobi.rtol == 1e-10
    assert subject.jacobi.max_horizon == 128
    assert subject.threads == 2


def test_loadf_empty():
    assert loadf(path.join(test_files, 'empty.yaml')) == {}


def test_loadf_missing():
    with pytest.raises(FileNotFoundError):
        loadf(path.join(test_files, 'does_not_exist.yaml'))

    assert loadf(path.join(test_files, 'does_not_exist.yaml'), default=NotConfigured) == {}


def test_loads():
    subject = loads('model: h3\njacobi.rtol: 1.0e-10\n', 'seed: 4')

    assert subject.model == 'h3'
    assert subject.jacobi.rtol == 1e-10
    assert subject.seed == 4


def test_loads_exponent_floats():
    subject = loads('jacobi:\n  rtol: 1e-10\n  atol: -2E+3\n  label: e5\n  version: 1.2.3\n')

    assert subject.jacobi.rtol == 1e-10
    assert subject.jacobi.atol == -2000.0
    assert subject.jacobi.label == 'e5'
    assert subject.jacobi.version == '1.2.3'


def test_loaders():
    assert tuple(loaders(Locality.APPLICATION, '/custom/{name}.yaml')) == (
        './{name}.yaml', '/custom/{name}.yaml',
    )
    assert DEFAULT_LOAD_ORDER[0] is not read_envvars
    assert DEFAULT_LOAD_ORDER[-1] is read_envvars


def test_read_xdg_config_home():
    env = {'XDG_CONFIG_HOME': test_files}
    with patch('harmonic_rank.io.environ', env):
        subject = read_xdg_config_home('run')

    _assert_run_values(subject)


def test_read_envvars():
    env = {
        'HARMONIC_RANK_THREADS': '4',
        'HARMONIC_RANK_JACOBI_RTOL': '1.0e-10',
        'HARMONIC_RANK_HYPERBOLICITY_BUSEMANN__TOL': '1e-8',
        'HARMONIC_RANK_CONFIG_FILE': 'ignored.yaml',
        'HARMONIC_RANK_GALLERY_EXTRA_MODEL': 'h2xr',
        'UNRELATED': 'value',
    }
    with patch('harmonic_rank.io.environ', env):
        subject = read_envvars('harmonic_rank')

    assert subject.threads == 4
    assert subject.jacobi.rtol == 1e-10
    assert subject.hyperbolicity.busemann_tol == 1e-8
    assert subject.gallery.extra.model == 'h2xr'
    assert 'config' not in subject
    assert 'unrelated' not in subject


def test_read_envvars_nothing():
    with patch('harmonic_rank.io.environ', {}):
        assert read_envvars('harmonic_rank') is NotConfigured


def test_read_envvar_file():
    env = {'HARMONIC_RANK_CONFIG_FILE': path.join(test_files, 'run.yaml')}
    with patch('harmonic_rank.io.environ', env):
        _assert_run_values(read_envvar_file('harmonic_rank'))

    with patch('harmonic_rank.io.environ', {}):
        assert read_envvar_file('harmonic_rank') is NotConfigured


def test_load_name_order():
    env = {
        'HARMONIC_RANK_CONFIG_FILE': path.join(test_files, 'defaults.yaml'),
        'HARMONIC_RANK_THREADS': '8',
    }
    with patch('harmonic_rank.io.environ', env):
        subject = load_name('harmonic_rank', load_order=(path.join(test_files, 'run.yaml'),
                                                         read_envvar_file,
                                                         read_envvars))

    assert subject.model == 'h2'
    # the file named by the environment overrides the plain file, single variables override both
    assert subject.jacobi.rtol == 1e-10
    assert subject.threads == 8


def test_load_name_missing_files():
    with patch('harmonic_rank.io.environ', {}):
        subject = load_name('harmonic_rank', load_order=(path.join(test_files, 'nothing-{name}.yaml'),))

    assert subject == {}


def test_dumps():
    assert dumps({'jacobi': {'rtol': np.float64(1e-12)}, 'scales': np.array([4.0, 8.0])}) == \
        'jacobi:\n  rtol: 1.0e-12\nscales:\n- 4.0\n- 8.0\n'
    assert dumps(3).strip() == '3'


def test_dumpf(tmp_path):
    fname = tmp_path / 'summary.yaml'

    dumpf(Configuration({'model': 'h2', 'seed': 7, 'jacobi.rtol': 1e-11, 'hyperbolicity.scales': [4, 8],
                         'jacobi.max_horizon': 128}), fname)

    _assert_run_values(loadf(fname))


def test_columns(tmp_path):
    fname = tmp_path / 'density.txt'
    t = np.linspace(0.25, 4.0, 16)

    write_columns(fname, {'t': t, 'log_f': np.log(np.sinh(t))}, metadata={'model': {'kind': 'SpaceForm', 'dim': 2}})
    metadata, columns = read_columns(fname)

    assert metadata.model.kind == 'SpaceForm'
    assert list(columns) == ['t', 'log_f']
    assert np.allclose(columns['t'], t, rtol=0, atol=1e-15)
    assert np.allclose(columns['log_f'], np.log(np.sinh(t)), rtol=1e-15)


def test_columns_unequal(tmp_path):
    with pytest.raises(ValueError) as e:
        write_columns(tmp_path / 'broken.txt', {'t': [1.0, 2.0], 'f': [1.0]})

    assert 'unequal' in str(e.value)

from os import path
from unittest.mock import patch

import pytest

from harmonic_rank import Configuration, InvalidConfigurationError, loadf, NoConvergence, OracleUnavailable, \
    read_columns
from harmonic_rank.runner import build_parser, DEFAULTS, load_run_config, main, skipped, SummaryRecord, \
    validate_run_config, version_hash


test_files = path.join(path.dirname(__file__), 'files')


def _config(*sources):
    return Configuration(DEFAULTS, *sources)


def _run(*argv):
    with patch('harmonic_rank.io.environ', {}):
        return main(list(argv))


def test_validate_defaults():
    config = validate_run_config(DEFAULTS)

    assert config.model == 'h2'
    assert config.jacobi.max_horizon == 256.0
    assert validate_run_config(_config(loadf(path.join(test_files, 'run.yaml')))).seed == 7


def test_validate_negative_tolerance():
    with pytest.raises(InvalidConfigurationError) as e:
        validate_run_config(_config(loadf(path.join(test_files, 'invalid.yaml'))))

    assert e.value.key == 'density.tol'


def test_validate_beyond_horizon():
    with pytest.raises(InvalidConfigurationError) as e:
        validate_run_config(_config(loadf(path.join(test_files, 'beyond.yaml'))))

    assert e.value.key == 'flow.horizon'


@pytest.mark.parametrize('override, key', [
    ({'seed': -1}, 'seed'),
    ({'seed': 2 ** 64}, 'seed'),
    ({'seed': True}, 'seed'),
    ({'seed': 'seven'}, 'seed'),
    ({'threads': 0}, 'threads'),
    ({'rank': {'eps': 0.0}}, 'rank.eps'),
    ({'identities': {'tol': 'small'}}, 'identities.tol'),
    ({'density': {'tmax': 300.0}}, 'density.tmax'),
])
def test_validate_invalid(override, key):
    with pytest.raises(InvalidConfigurationError) as e:
        validate_run_config(_config(override))

    assert e.value.key == key


def test_load_run_config():
    args = build_parser().parse_args(['anosov', '--config', path.join(test_files, 'run.yaml'), '--tol', '0.01',
                                      '--seeds', '3', '--set', 'jacobi.rtol=1e-10'])
    with patch('harmonic_rank.io.environ', {}):
        config = load_run_config(args)

    assert config.anosov.rho_tol == 0.01
    assert config.seeds == 3
    assert config.seed == 7
    # --set beats --config
    assert config.jacobi.rtol == 1e-10
    assert config.jacobi.max_horizon == 128


def test_load_run_config_environment():
    args = build_parser().parse_args(['density'])
    with patch('harmonic_rank.io.environ', {'HARMONIC_RANK_MODEL': 'twoblock21', 'HARMONIC_RANK_DENSITY_TMAX': '12'}):
        config = load_run_config(args)

    assert config.model == 'twoblock21'
    assert config.density.tmax == 12


def test_version_hash():
    digest = version_hash(DEFAULTS)

    assert len(digest) == 16
    assert int(digest, 16) >= 0
    assert digest == version_hash(dict(DEFAULTS))
    assert digest != version_hash({**DEFAULTS, 'seed': 1})


def test_summary_record():
    record = SummaryRecord(command='density', model={'kind': 'space-form', 'dim': 2}, label='h2')

    def unavailable():
        raise OracleUnavailable('no distance oracle', kind='distance')

    assert record.measure('h', 'rank.density_profile', lambda: 1.0) == 1.0
    assert record.measure('busemann', 'hyperbolicity.busemann_value', unavailable) is None
    assert record.entries['h'] == {'value': 1.0, 'source': 'rank.density_profile'}
    assert record.entries['busemann'] == skipped('no distance oracle')

    mapping = record.to_mapping(DEFAULTS, 1.23456)
    assert set(mapping) == {'command', 'model', 'entries', 'version', 'version_hash', 'wall_clock'}
    assert mapping['wall_clock'] == 1.235


def test_summary_record_failure():
    record = SummaryRecord(command='rank', model={}, label='flat2')

    def diverge():
        raise NoConvergence('no limit', horizon=8.0, gap=0.1)

    with pytest.raises(NoConvergence):
        record.measure('rank', 'rank.rank_of', diverge)
    assert 'rank' not in record.entries


def test_main_density(tmp_path):
    assert _run('density', '--config', path.join(test_files, 'run.yaml'), '--out', str(tmp_path)) == 0

    summary = loadf(tmp_path / 'density-h2.yaml')
    assert summary.command == 'density'
    assert summary.entries.h.value == pytest.approx(1.0, abs=1e-3)
    assert summary.entries.h.source == 'rank.density_profile'
    # the shortened grid ends before t=20
    assert 'skipped' in summary.entries.growth
    assert summary.entries.harmonicity_deviation.value < 1e-6
    assert len(summary.version_hash) == 16

    metadata, columns = read_columns(tmp_path / 'density-h2-density.txt')
    assert metadata.model.kind == 'space-form'
    assert columns['t'][-1] == pytest.approx(8.0)


def test_main_report(tmp_path, capsys):
    assert _run('anosov', '--model', 'h3', '--seeds', '2', '--out', str(tmp_path)) == 0
    capsys.readouterr()

    assert _run('report', '--out', str(tmp_path)) == 0

    out = capsys.readouterr().out
    assert 'anosov-h3.yaml' in out
    assert 'verdict=Anosov' in out


def test_main_skipped(tmp_path):
    assert _run('hyperbolicity', '--model', 'twoblock21', '--out', str(tmp_path)) == 0

    summary = loadf(tmp_path / 'hyperbolicity-twoblock_2_1.yaml')
    assert 'skipped' in summary.entries.delta


def test_main_gallery(capsys):
    assert _run('gallery', '--gallery', 'h2,twoblock21,h2xr') == 0

    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines] == ['h2', 'twoblock:2,1', 'h2*flat1']


def test_main_invalid_config():
    assert _run('density', '--config', path.join(test_files, 'invalid.yaml')) == 2
    assert _run('density', '--model', 'sphere2') == 2
    assert _run('density', '--set', 'no-assignment') == 2


def test_main_no_convergence(tmp_path):
    assert _run('rank', '--model', 'flat2', '--out', str(tmp_path),
                '--set', 'jacobi.max_horizon=8', '--set', 'density.tmax=8', '--set', 'rank.trace_tmax=8',
                '--set', 'flow.horizon=8') == 3


def test_main_equivalence_mismatch(tmp_path, capsys):
    def disagreeing(model, config):
        record = SummaryRecord(command='equivalence', model=model.spec.to_mapping(), label=model.spec.label)
        for leg, value in (('rank_one', True), ('purely_exponential', True), ('anosov', False), ('hyperbolic', True)):
            record.entries[leg] = {'value': value, 'source': 'test'}
        record.entries['agree'] = {'value': False, 'source': 'test'}
        return record

    with patch.dict('harmonic_rank.runner.COMMANDS', {'equivalence': disagreeing}):
        assert _run('equivalence', '--gallery', 'h2', '--out', str(tmp_path)) == 4

    assert 'False' in capsys.readouterr().out
    assert path.exists(tmp_path / 'equivalence-h2.yaml')


@pytest.mark.slow
def test_main_equivalence(tmp_path, capsys):
    assert _run('equivalence', '--gallery', 'h2,flat2', '--out', str(tmp_path), '--seeds', '2',
                '--set', 'hyperbolicity.quadruples=2000') == 0

    summary = loadf(tmp_path / 'equivalence-flat2.yaml')
    assert summary.entries.rank_one.value is False
    assert summary.entries.hyperbolic.value is False
    assert summary.entries.agree.value is True

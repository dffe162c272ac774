"""
Command line runner: configuration assembly, the experiment commands, the
model gallery and result persistence.
"""
import argparse
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
import dataclasses
import glob
import hashlib
import logging
from os import makedirs, path
import re
import sys
import time
import typing

import numpy as np

from harmonic_rank import __version__
from harmonic_rank.configuration import Configuration, unwrap
from harmonic_rank.exceptions import ConfigurationError, EmptyKernel, EmptySubspace, EquivalenceMismatch, \
    FlatModel, GridMismatch, InvalidConfigurationError, InvalidSpec, NumericalError, OracleUnavailable
from harmonic_rank.flow import build_splitting, exponent_fit, invariance_angles, parallel_field_detect, Subspace
from harmonic_rank.hyperbolicity import busemann_value, delta_four_point, HyperbolicityVerdict, \
    hyperbolicity_report, volume_comparison
from harmonic_rank.identities import identity_suite
from harmonic_rank.io import dumpf, dumps, load_name, loadf, write_columns
from harmonic_rank.jacobi import JacobiSettings
from harmonic_rank.models import build_model, canonical_text, Model, parse_model
from harmonic_rank.rank import AnosovVerdict, anosov_certificate, constrank_bounds_check, default_density_grid, \
    default_trace_radii, density_profile, F_consistency, GrowthClass, harmonicity_check, minimal_growth_gap, \
    rank_of, volume_growth_class
from harmonic_rank.utils import dotted_items, parse_overrides


LOG = logging.getLogger(__name__)

DEFAULT_GALLERY = ('h2', 'h3', 'h4', 'h2:-4', 'twoblock21', 'flat2', 'flat3', 'h2xr')
EQUIVALENCE_LEGS = ('rank_one', 'purely_exponential', 'anosov', 'hyperbolic')

DEFAULTS: typing.Mapping[str, typing.Any] = {
    'model': 'h2',
    'seed': 0,
    'seeds': 4,
    'threads': 1,
    'out': '.',
    'gallery': list(DEFAULT_GALLERY),
    'jacobi': {field.name: field.default for field in dataclasses.fields(JacobiSettings)},
    'density': {'tmin': 0.25, 'tmax': 24.0, 'step': 0.25, 'tol': 1e-4},
    'rank': {'eps': 1e-6, 'trace_tmin': 1.0, 'trace_tmax': 16.0, 'trace_count': 16, 'alpha': 1.0},
    'anosov': {'rho_tol': 1e-3},
    'flow': {'horizon': 10.0, 'samples': 8},
    'identities': {'samples': 20, 'tol': 1e-8, 'window': 4.0},
    'hyperbolicity': {
        'scales': [4.0, 8.0, 16.0, 32.0],
        'quadruples': 10_000,
        'triangles': 200,
        'side_samples': 33,
        'delta_in': 1.0,
        'radii': [10.0],
        'mc': 100_000,
        'busemann_tol': 1e-9,
    },
}

#: keys bounded by jacobi.max_horizon
HORIZON_KEYS = ('jacobi.base_horizon', 'density.tmax', 'rank.trace_tmax', 'flow.horizon')

#: where --tol lands for each command
TOL_KEYS = {
    'density': 'density.tol',
    'rank': 'jacobi.cauchy_tol',
    'anosov': 'anosov.rho_tol',
    'flow': 'jacobi.cauchy_tol',
    'hyperbolicity': 'hyperbolicity.busemann_tol',
    'identities': 'identities.tol',
    'equivalence': 'jacobi.cauchy_tol',
}

# errors that mark an entry skipped rather than failing a command
SKIPPABLE = (FlatModel, EmptyKernel, EmptySubspace, OracleUnavailable)


def validate_run_config(config: typing.Mapping[str, typing.Any]) -> Configuration:
    """
    Check the run configuration invariants.

    :param config: the assembled run configuration
    :returns: *config* as a `Configuration`
    :raises InvalidConfigurationError: naming the first offending key
    """
    config = config if isinstance(config, Configuration) else Configuration(config)

    for key, value in dotted_items(unwrap(config)):
        if key.rsplit('.', 1)[-1].endswith(('tol', 'eps')):
            try:
                positive = float(value) > 0
            except (TypeError, ValueError):
                positive = False
            if not positive:
                raise InvalidConfigurationError(f'{key} should be positive, got {value!r}', key=key)

    max_horizon = config.get('jacobi.max_horizon', as_type=float)
    for key in HORIZON_KEYS:
        value = config.get(key, None)
        if value is not None and float(value) > max_horizon:
            raise InvalidConfigurationError(f'{key}={value} exceeds jacobi.max_horizon={max_horizon:g}', key=key)

    seed = config.get('seed')
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise InvalidConfigurationError(f'seed should be an unsigned 64-bit integer, got {seed!r}', key='seed')

    threads = config.get('threads', 1)
    if not isinstance(threads, int) or threads < 1:
        raise InvalidConfigurationError(f'threads should be a positive integer, got {threads!r}', key='threads')

    return config


def measured(value: typing.Any, source: str) -> typing.Dict[str, typing.Any]:
    return {'value': unwrap(value), 'source': source}


def skipped(reason: typing.Any) -> typing.Dict[str, typing.Any]:
    return {'skipped': str(reason)}


def version_hash(config: typing.Mapping[str, typing.Any]) -> str:
    """
    Hash of the package version and the canonical configuration, 16 hex
    digits.
    """
    canonical = dumps(config)
    return hashlib.sha256(f'{__version__}\n{canonical}'.encode('utf-8')).hexdigest()[:16]


@dataclasses.dataclass
class SummaryRecord:
    """
    Outcome of one command on one model: every entry is either a measured
    value with the operation that produced it, or skipped with a reason.
    """

    command: str
    model: typing.Mapping[str, typing.Any]
    label: str
    entries: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    curves: typing.Dict[str, typing.Mapping[str, np.ndarray]] = dataclasses.field(default_factory=dict, repr=False)

    def measure(self, name: str, source: str, compute: typing.Callable[[], typing.Any]) -> typing.Any:
        """
        Record ``compute()`` under *name*, or a skipped entry when it raises
        one of the skippable errors.

        :returns: the computed value, `None` when skipped
        """
        try:
            value = compute()
        except SKIPPABLE as e:
            LOG.info(f'{self.command} on {self.label}: {name} skipped ({e})')
            self.entries[name] = skipped(e)
            return None
        self.entries[name] = measured(value, source)
        return value

    def to_mapping(self, config: typing.Mapping[str, typing.Any], wall_clock: float) -> typing.Dict[str, typing.Any]:
        return {
            'command': self.command,
            'model': unwrap(self.model),
            'entries': unwrap(self.entries),
            'version': __version__,
            'version_hash': version_hash(config),
            'wall_clock': round(wall_clock, 3),
        }


def _file_label(label: str) -> str:
    return re.sub(r'[^A-Za-z0-9.-]+', '_', label).strip('_')


def _new_record(command: str, model: Model) -> SummaryRecord:
    return SummaryRecord(command=command, model=model.spec.to_mapping(), label=model.spec.label)


def _directions(model: Model, config: Configuration) -> typing.List[np.ndarray]:
    return model.directions(config.get('seeds', as_type=int), config.get('seed', as_type=int))


def cmd_density(model: Model, config: Configuration) -> SummaryRecord:
    record = _new_record('density', model)
    settings = JacobiSettings.from_configuration(config)
    grid = default_density_grid(config.get('density.tmin', as_type=float),
                                config.get('density.tmax', as_type=float),
                                config.get('density.step', as_type=float))
    tol = config.get('density.tol', as_type=float)

    profile = density_profile(model, grid=grid, settings=settings)
    record.curves['density'] = profile.columns()
    record.measure('h', 'rank.density_profile', lambda: profile.h)
    record.measure('degree', 'rank.density_profile', lambda: profile.k)
    record.measure('fit_spread', 'rank.density_profile', lambda: profile.spread)

    if grid[-1] >= 20:
        growth = volume_growth_class(profile)
        record.measure('growth', 'rank.volume_growth_class', lambda: {
            'class': growth.growth, 'degree': growth.degree, 'a': growth.a, 'b': growth.b,
        })
    else:
        record.entries['growth'] = skipped(f'profile ends at t={grid[-1]:g} < 20')

    def minimal_growth() -> typing.Dict[str, typing.Any]:
        result = minimal_growth_gap(profile, tol=tol)
        return {'limit': result.limit, 'bound': result.bound, 'gap': result.gap, 'equality': result.equality}

    record.measure('minimal_growth', 'rank.minimal_growth_gap', minimal_growth)

    seeds = config.get('seeds', as_type=int)
    if seeds >= 2:
        harmonicity = harmonicity_check(model, _directions(model, config), grid, tol, settings=settings)
        record.measure('harmonicity_deviation', 'rank.harmonicity_check', lambda: harmonicity.deviation)
    else:
        record.entries['harmonicity_deviation'] = skipped('fewer than two directions')
    return record


def cmd_rank(model: Model, config: Configuration) -> SummaryRecord:
    record = _new_record('rank', model)
    settings = JacobiSettings.from_configuration(config)
    eps = config.get('rank.eps', as_type=float)
    radii = default_trace_radii(config.get('rank.trace_tmin', as_type=float),
                                config.get('rank.trace_tmax', as_type=float),
                                config.get('rank.trace_count', as_type=int))

    report = rank_of(model, eps=eps, radii=radii, settings=settings)
    record.measure('rank', 'rank.rank_of', lambda: report.rank)
    record.measure('limit_eigenvalues', 'rank.rank_of', lambda: report.limit_eigs)
    record.measure('gap', 'rank.rank_of', lambda: report.gap)
    record.measure('focal_free', 'rank.rank_of', lambda: report.focal_free)
    record.measure('trace_monotone', 'rank.rank_of', lambda: report.trace_monotone)
    record.curves['trace'] = {'t': report.radii,
                              **{f'eig[{i}]': report.eigen_trace[:, i] for i in range(report.eigen_trace.shape[1])}}

    def consistency() -> typing.Dict[str, typing.Any]:
        result = F_consistency(model, settings=settings)
        return {'residual': result.residual, 'increasing': result.increasing, 'lower_constant': result.lower_constant}

    record.measure('F_consistency', 'rank.F_consistency', consistency)

    def constrank() -> typing.Dict[str, typing.Any]:
        result = constrank_bounds_check(model, alpha=config.get('rank.alpha', as_type=float), eps=eps,
                                        settings=settings)
        return {'passed': result.passed, 'lower_residual': result.lower_residual,
                'upper_residual': result.upper_residual, 'det_residual': result.det_residual}

    record.measure('constrank_bounds', 'rank.constrank_bounds_check', constrank)
    return record


def cmd_anosov(model: Model, config: Configuration) -> SummaryRecord:
    record = _new_record('anosov', model)
    certificate = anosov_certificate(model, _directions(model, config), config.get('anosov.rho_tol', as_type=float),
                                     settings=JacobiSettings.from_configuration(config))
    record.measure('rho', 'rank.anosov_certificate', lambda: certificate.rho)
    record.measure('verdict', 'rank.anosov_certificate', lambda: certificate.verdict)
    record.measure('within_bound', 'rank.anosov_certificate', lambda: certificate.within_bound)
    return record


def cmd_flow(model: Model, config: Configuration) -> SummaryRecord:
    record = _new_record('flow', model)
    settings = JacobiSettings.from_configuration(config)
    horizon = config.get('flow.horizon', as_type=float)
    samples = config.get('flow.samples', as_type=int)

    splitting = build_splitting(model, settings=settings)
    record.measure('dimensions', 'flow.build_splitting', lambda: splitting.dims)
    record.measure('spans', 'flow.build_splitting', lambda: splitting.spans)
    record.measure('parallel_fields', 'flow.parallel_field_detect',
                   lambda: parallel_field_detect(model, settings=settings).shape[1])

    for subspace in Subspace:
        def fit(subspace: Subspace = subspace) -> typing.Dict[str, typing.Any]:
            result = exponent_fit(model, None, subspace, horizon, samples, sample_seed=config.get('seed'),
                                  settings=settings)
            record.curves[f'exponents-{subspace.value}'] = result.columns()
            return {'rate': result.rate, 'rates': result.rates, 'a': result.a, 'envelope': result.envelope,
                    'residual': result.residual}

        record.measure(f'{subspace.value}_exponents', 'flow.exponent_fit', fit)

    angles = invariance_angles(model, t=min(2.0, horizon), settings=settings)
    record.measure('invariance_angle', 'flow.invariance_angles',
                   lambda: {name: float(values.max()) if len(values) else 0.0 for name, values in angles.items()})
    return record


def cmd_hyperbolicity(model: Model, config: Configuration) -> SummaryRecord:
    record = _new_record('hyperbolicity', model)
    section = config.hyperbolicity
    seed = config.get('seed', as_type=int)

    def report() -> typing.Any:
        result = hyperbolicity_report(model, section.get('scales', as_type=list), section.get('quadruples', as_type=int),
                                      section.get('triangles', as_type=int), section.get('side_samples', as_type=int),
                                      seed, settings=JacobiSettings.from_configuration(config))
        record.curves['delta'] = result.columns()
        return {'delta_hat': result.delta_hat[-1], 'verdict': result.verdict, 'thin_delta': result.thin_delta[-1],
                'thin_verdict': result.thin_verdict, 'agree': result.agree,
                'divergence_alpha': result.divergence_alpha}

    if record.measure('delta', 'hyperbolicity.hyperbolicity_report', report) is None:
        return record

    oracle = model.require_oracle()
    record.measure('busemann', 'hyperbolicity.busemann_value',
                   lambda: busemann_value(model, None, oracle.point(np.eye(model.dim)[-1], 1.0),
                                          section.get('busemann_tol', as_type=float)))

    for radius in section.get('radii', as_type=list):
        def comparison(radius: float = float(radius)) -> typing.Dict[str, typing.Any]:
            result = volume_comparison(model, None, section.get('delta_in', as_type=float), radius,
                                       section.get('mc', as_type=int), sample_seed=seed)
            return {'lhs': result.lhs, 'lhs_stderr': result.lhs_stderr, 'rhs': result.rhs, 'ratio': result.ratio,
                    'holds': result.holds}

        record.measure(f'volume_comparison[r={float(radius):g}]', 'hyperbolicity.volume_comparison', comparison)
    return record


def cmd_identities(model: Model, config: Configuration) -> SummaryRecord:
    record = _new_record('identities', model)
    reports = identity_suite(model.field(),
                             config.get('identities.samples', as_type=int),
                             config.get('identities.tol', as_type=float),
                             window=config.get('identities.window', as_type=float),
                             seed=config.get('seed', as_type=int),
                             settings=JacobiSettings.from_configuration(config))
    for report in reports:
        record.measure(report.tag.value, 'identities.identity_suite',
                       lambda report=report: {'residual': report.residual, 'budget': report.budget,
                                              'passed': report.passed})
    record.measure('passed', 'identities.identity_suite',
                   lambda: f'{sum(report.passed for report in reports)}/{len(reports)}')
    return record


def equivalence_row(model: Model, config: Configuration) -> SummaryRecord:
    """
    The four legs of the equivalence for one model: rank one, purely
    exponential volume growth, an Anosov flow and Gromov hyperbolicity.
    """
    record = _new_record('equivalence', model)
    settings = JacobiSettings.from_configuration(config)

    rank = rank_of(model, eps=config.get('rank.eps', as_type=float), radii=[1.0], settings=settings).rank
    record.measure('rank_one', 'rank.rank_of', lambda: rank == 1)

    grid = default_density_grid(config.get('density.tmin', as_type=float),
                                max(20.0, config.get('density.tmax', as_type=float)),
                                config.get('density.step', as_type=float))
    growth = volume_growth_class(density_profile(model, grid=grid, settings=settings)).growth
    record.measure('purely_exponential', 'rank.volume_growth_class',
                   lambda: growth is GrowthClass.PURELY_EXPONENTIAL)

    certificate = anosov_certificate(model, [None, *_directions(model, config)],
                                     config.get('anosov.rho_tol', as_type=float), settings=settings)
    record.measure('anosov', 'rank.anosov_certificate', lambda: certificate.verdict is AnosovVerdict.ANOSOV)

    section = config.hyperbolicity
    verdict = record.measure('hyperbolicity_verdict', 'hyperbolicity.delta_four_point',
                             lambda: delta_four_point(model, section.get('scales', as_type=list),
                                                      section.get('quadruples', as_type=int),
                                                      config.get('seed', as_type=int)).verdict)
    if verdict is None:
        record.entries['hyperbolic'] = record.entries['hyperbolicity_verdict']
    else:
        record.measure('hyperbolic', 'hyperbolicity.delta_four_point',
                       lambda: verdict is HyperbolicityVerdict.HYPERBOLIC)

    legs = [record.entries[leg]['value'] for leg in EQUIVALENCE_LEGS if 'value' in record.entries[leg]]
    # an inconclusive hyperbolicity verdict is never agreement
    agree = len(set(legs)) == 1 and verdict is not HyperbolicityVerdict.INCONCLUSIVE
    record.entries['agree'] = measured(agree, 'runner.equivalence_row')
    return record


COMMANDS: typing.Mapping[str, typing.Callable[[Model, Configuration], SummaryRecord]] = {
    'density': cmd_density,
    'rank': cmd_rank,
    'anosov': cmd_anosov,
    'flow': cmd_flow,
    'hyperbolicity': cmd_hyperbolicity,
    'identities': cmd_identities,
    'equivalence': equivalence_row,
}


def _job(command: str, spec: typing.Mapping[str, typing.Any],
         config: typing.Mapping[str, typing.Any]) -> typing.Tuple[SummaryRecord, float]:
    # jobs share nothing: the model is rebuilt from its canonical mapping in the worker
    start = time.monotonic()
    record = COMMANDS[command](build_model(spec), Configuration(config))
    return record, time.monotonic() - start


def run_jobs(command: str,
             models: typing.Sequence[Model],
             config: Configuration) -> typing.List[typing.Tuple[SummaryRecord, float]]:
    """
    Run *command* on every model, fanned out to at most ``threads`` worker
    processes; results come back in the order of *models*.
    """
    plain = unwrap(config)
    jobs = [(command, model.spec.to_mapping(), plain) for model in models]
    threads = min(config.get('threads', 1, as_type=int), len(jobs))
    if threads <= 1:
        return [_job(*job) for job in jobs]

    LOG.debug(f'running {len(jobs)} {command} jobs on {threads} workers')
    with ProcessPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(_job, *zip(*jobs)))


def write_record(record: SummaryRecord, config: Configuration, wall_clock: float, out: str) -> str:
    """
    Write a summary record and its curves into *out*.

    :returns: the path of the summary record
    """
    makedirs(out, exist_ok=True)
    base = path.join(out, f'{record.command}-{_file_label(record.label)}')
    metadata = {'model': record.model, 'version': __version__}
    for name, columns in record.curves.items():
        write_columns(f'{base}-{name}.txt', columns, metadata)
    dumpf(record.to_mapping(config, wall_clock), f'{base}.yaml')
    return f'{base}.yaml'


def gallery(config: Configuration) -> typing.List[Model]:
    names = config.get('gallery', DEFAULT_GALLERY)
    if isinstance(names, str):
        names = DEFAULT_GALLERY if names == 'default' else names.split(',')
    return [build_model(parse_model(name.strip())) for name in names]


def cmd_equivalence(config: Configuration) -> int:
    rows = run_jobs('equivalence', gallery(config), config)
    out = config.get('out', as_type=str)

    columns = EQUIVALENCE_LEGS
    print(f'{"model":<16}' + ''.join(f'{column:>20}' for column in columns) + f'{"agree":>8}')
    mismatches = []
    for record, wall_clock in rows:
        write_record(record, config, wall_clock, out)
        cells = [record.entries[column].get('value', 'Skipped') for column in columns]
        agree = record.entries['agree']['value']
        print(f'{record.label:<16}' + ''.join(f'{str(cell):>20}' for cell in cells) + f'{str(agree):>8}')
        if not agree:
            mismatches.append(record.label)

    if mismatches:
        raise EquivalenceMismatch(f'equivalence legs disagree for {", ".join(mismatches)}', rows=mismatches)
    return 0


def cmd_report(config: Configuration) -> int:
    """
    Print one row per summary record found in the output directory.
    """
    for fname in sorted(glob.glob(path.join(config.get('out', as_type=str), '*.yaml'))):
        record = loadf(fname)
        values = []
        for name, entry in sorted(unwrap(record.get('entries', {})).items()):
            value = entry.get('value', 'Skipped') if isinstance(entry, Mapping) else entry
            if isinstance(value, float):
                value = f'{value:.6g}'
            values.append(f'{name}={value}')
        print(f'{record.get("command", "?"):<14} {path.basename(fname):<40} {"  ".join(values)}')
    return 0


def cmd_gallery(config: Configuration) -> int:
    for model in gallery(config):
        print(f'{model.spec.label:<16} ' + canonical_text(model.spec).strip().replace('\n', ', '))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='harmonic-rank',
                                     description='numerical rank, volume growth, Anosov and hyperbolicity '
                                                 'diagnostics of harmonic manifold models')
    parser.add_argument('command', choices=[*COMMANDS, 'report', 'gallery'])
    parser.add_argument('--model', help='model specification, e.g. h2, twoblock21, dr:2,1, h2*flat1')
    parser.add_argument('--config', help='YAML run configuration file')
    parser.add_argument('--seed', type=int, help='seed of sampled directions and Monte Carlo estimates')
    parser.add_argument('--seeds', type=int, help='number of sampled directions')
    parser.add_argument('--tol', type=float, help='main tolerance of the command')
    parser.add_argument('--tmax', type=float, help='end of the density grid')
    parser.add_argument('--gallery', help='"default" or a comma separated list of model specifications')
    parser.add_argument('--threads', type=int, help='number of worker processes')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='override any configuration key, e.g. jacobi.rtol=1e-11')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    return parser


def load_run_config(args: argparse.Namespace) -> Configuration:
    """
    Assemble the run configuration: defaults, named configuration sources,
    ``--config`` and flags, in increasing precedence.
    """
    flags: typing.Dict[str, typing.Any] = {key: value for key, value in (
        ('model', args.model),
        ('seed', args.seed),
        ('seeds', args.seeds),
        ('threads', args.threads),
        ('out', args.out),
        ('gallery', args.gallery),
        ('density.tmax', args.tmax),
    ) if value is not None}
    if args.tol is not None and args.command in TOL_KEYS:
        flags[TOL_KEYS[args.command]] = args.tol

    sources = [DEFAULTS, load_name('harmonic_rank')]
    if args.config:
        sources.append(loadf(args.config))
    sources.extend([flags, parse_overrides(args.set)])
    return validate_run_config(Configuration(*sources))


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        config = load_run_config(args)
        model = None
        if args.command not in ('equivalence', 'report', 'gallery'):
            model = build_model(parse_model(str(config.get('model'))))
    except (ConfigurationError, InvalidSpec, OracleUnavailable) as e:
        LOG.error(f'configuration error: {e}')
        return 2

    LOG.info(f'running {args.command}' + (f' on {model.spec.label}' if model else ''))
    try:
        if args.command == 'equivalence':
            return cmd_equivalence(config)
        if args.command == 'report':
            return cmd_report(config)
        if args.command == 'gallery':
            return cmd_gallery(config)

        (record, wall_clock), = run_jobs(args.command, [model], config)
        written = write_record(record, config, wall_clock, config.get('out', as_type=str))
        print(written)
        return 0
    except EquivalenceMismatch as e:
        LOG.error(str(e))
        return 4
    except (NumericalError, GridMismatch) as e:
        LOG.error(f'numerical failure: {e}')
        return 3
    except (ConfigurationError, InvalidSpec, OracleUnavailable) as e:
        LOG.error(f'configuration error: {e}')
        return 2
    finally:
        LOG.info(f'finished {args.command}')


if __name__ == '__main__':
    sys.exit(main())

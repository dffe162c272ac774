from enum import IntEnum
from itertools import product
import logging
from os import environ, path, PathLike
import typing

import numpy as np
import yaml

from harmonic_rank.configuration import Configuration, Missing, NoDefault, NotConfigured, unwrap
from harmonic_rank.utils import load_yaml


LOG = logging.getLogger(__name__)

FileName = typing.Union[str, PathLike]


def _read_yaml(fname: FileName, default: typing.Any = NoDefault) -> typing.Any:
    fname = path.expanduser(fname)
    try:
        with open(fname, 'r') as fp:
            LOG.info(f'reading configuration from file {fname}')
            # an empty document loads as None
            return load_yaml(fp) or {}
    except OSError:
        if default is NoDefault:
            raise
        LOG.debug(f'no configuration in {fname}')
        return default


def read_xdg_config_dirs(name: str) -> Configuration:
    """
    Read ``name.yaml`` from every directory in ``XDG_CONFIG_DIRS`` (default
    ``/etc/xdg``), the first directory listed being the most significant.
    """
    config_dirs = environ.get('XDG_CONFIG_DIRS') or '/etc/xdg'
    return loadf(*(path.join(config_dir, f'{name}.yaml') for config_dir in reversed(config_dirs.split(path.pathsep))),
                 default=NotConfigured)


def read_xdg_config_home(name: str) -> Configuration:
    """
    Read ``name.yaml`` from ``XDG_CONFIG_HOME``, falling back to
    ``~/.config``.
    """
    config_home = environ.get('XDG_CONFIG_HOME') or path.expanduser('~/.config')
    return loadf(path.join(config_home, f'{name}.yaml'), default=NotConfigured)


def _setting_name(variable: str) -> str:
    # JACOBI_MAX__HORIZON -> jacobi.max_horizon: single underscores separate sections, doubled ones are kept
    return '_'.join(part.replace('_', '.') for part in variable.lower().split('__'))


def read_envvars(name: str) -> Configuration:
    """
    Read run settings from environment variables prefixed with ``NAME_``.

    ``HARMONIC_RANK_THREADS=4`` sets ``threads``,
    ``HARMONIC_RANK_JACOBI_RTOL=1e-10`` sets ``jacobi.rtol`` and
    ``HARMONIC_RANK_HYPERBOLICITY_BUSEMANN__TOL=1e-8`` sets
    ``hyperbolicity.busemann_tol``. Values are parsed as YAML, so numbers and
    lists arrive typed. ``NAME_CONFIG_FILE`` is left to `.read_envvar_file`.

    :param name: variable prefix, without the trailing underscore
    :returns: a `Configuration`, `NotConfigured` when no variable matches
    """
    prefix = f'{name.upper()}_'
    reserved = f'{prefix}CONFIG_FILE'
    values = {_setting_name(variable[len(prefix):]): load_yaml(value)
              for variable, value in environ.items()
              if variable.upper().startswith(prefix) and variable.upper() != reserved}
    if not values:
        return NotConfigured

    LOG.info(f'reading configuration from {len(values)} {prefix}* environment variables')
    return Configuration(values)


def read_envvar_file(name: str) -> Configuration:
    """
    Read the file named by ``NAME_CONFIG_FILE``, if that variable is set.
    """
    fname = environ.get(f'{name.upper()}_CONFIG_FILE')
    return loadf(fname) if fname else NotConfigured


class Locality(IntEnum):
    """
    Where run settings can come from, from least to most specific.
    """

    SYSTEM = 0  #: ``/etc`` and ``XDG_CONFIG_DIRS``
    USER = 1  #: ``XDG_CONFIG_HOME`` (``~/.config``)
    APPLICATION = 2  #: the current working directory
    ENVIRONMENT = 3  #: ``NAME_CONFIG_FILE`` and ``NAME_*`` variables


#: a file name template (``{name}`` is filled in) or a callable taking the name
Loadable = typing.Union[str, typing.Callable[[str], Configuration]]

_LOADERS: typing.Mapping[Locality, typing.Tuple[Loadable, ...]] = {
    Locality.SYSTEM: ('/etc/{name}.yaml', read_xdg_config_dirs),
    Locality.USER: (read_xdg_config_home,),
    Locality.APPLICATION: ('./{name}.yaml',),
    Locality.ENVIRONMENT: (read_envvar_file, read_envvars),
}


def loaders(*specifiers: typing.Union[Locality, Loadable]) -> typing.Iterator[Loadable]:
    """
    Expand *specifiers* into an ordered sequence of loaders: a `Locality`
    stands for all of its sources, templates and callables pass through.
    """
    for specifier in specifiers:
        if isinstance(specifier, Locality):
            yield from _LOADERS[specifier]
        else:
            yield specifier


DEFAULT_LOAD_ORDER = tuple(loaders(*Locality))


def load(*fps: typing.IO, missing: typing.Any = Missing.SILENT) -> Configuration:
    """
    Read run settings from open YAML streams, later streams taking
    precedence.
    """
    return Configuration(*(load_yaml(fp) for fp in fps), missing=missing)


def loadf(*fnames: FileName, default: typing.Any = NoDefault, missing: typing.Any = Missing.SILENT) -> Configuration:
    """
    Read run settings from YAML files, later files taking precedence.

    :param fnames: paths of the files to read, ``~`` is expanded
    :param default: used in place of a file that cannot be read; without it,
        the error propagates
    :param missing: policy of the result for unconfigured keys
    :returns: a `Configuration` combining *fnames*
    :raises FileNotFoundError: for a missing file when *default* is not given
    """
    return Configuration(*(_read_yaml(fname, default) for fname in fnames), missing=missing)


def loads(*documents: str, missing: typing.Any = Missing.SILENT) -> Configuration:
    """
    Read run settings from YAML documents, later documents taking
    precedence.
    """
    return Configuration(*(load_yaml(document) for document in documents), missing=missing)


def load_name(*names: str,
              load_order: typing.Iterable[Loadable] = DEFAULT_LOAD_ORDER,
              missing: typing.Any = Missing.SILENT) -> Configuration:
    """
    Collect run settings for *names* from every source in *load_order*,
    later sources taking precedence. For each source, all names are read
    before moving on to the next source.

    :param names: configuration names, like ``harmonic_rank``
    :param load_order: file name templates and loader callables, least
        significant first
    :param missing: policy of the result for unconfigured keys
    :returns: a `Configuration`, empty when no source provided anything
    """
    sources = (loader(name) if callable(loader) else loadf(loader.format(name=name), default=NotConfigured)
               for loader, name in product(load_order, names))
    return Configuration(*sources, missing=missing)


def dump(value: typing.Any, fp: typing.IO, encoding: str = 'utf-8') -> None:
    """
    Write *value* (settings, a summary record, …) to *fp* as YAML.
    """
    yaml.safe_dump(unwrap(value), fp, encoding=encoding, default_flow_style=False)


def dumpf(value: typing.Any, fname: FileName, encoding: str = 'utf-8') -> None:
    """
    Write *value* to the YAML file *fname*.
    """
    with open(fname, 'wb') as fp:
        dump(value, fp, encoding=encoding)
    LOG.info(f'wrote {fname}')


def dumps(value: typing.Any) -> str:
    """
    Serialize *value* as a YAML string, without the explicit document end
    marker YAML adds to plain scalars.
    """
    encoded = yaml.safe_dump(unwrap(value), default_flow_style=False)
    if encoded.endswith('...\n'):
        encoded = encoded[:-4]
    return encoded


def write_columns(fname: FileName,
                  columns: typing.Mapping[str, typing.Any],
                  metadata: typing.Optional[typing.Mapping[str, typing.Any]] = None) -> None:
    """
    Write equally long columns to a whitespace-separated text file, preceded
    by a ``#``-prefixed YAML header carrying *metadata* and the column names.

    :param fname: name or path of the file to write to
    :param columns: ordered mapping of column name to one-dimensional values
    :param metadata: provenance to include in the header (canonical model
        spec, version, …)
    :raises ValueError: when columns differ in length
    """
    names = list(columns)
    arrays = [np.asarray(columns[name], dtype=float).ravel() for name in names]
    if len({len(array) for array in arrays}) > 1:
        raise ValueError(f'columns of unequal length: {", ".join(names)}')

    header = dumps({**unwrap(metadata or {}), 'columns': names}).rstrip('\n')
    np.savetxt(fname, np.column_stack(arrays) if arrays else np.empty((0, 0)), header=header, fmt='%.17g')
    LOG.info(f'wrote {len(names)} columns to {fname}')


def read_columns(fname: FileName) -> typing.Tuple[Configuration, typing.Dict[str, np.ndarray]]:
    """
    Read a file written by `.write_columns`.

    :param fname: name or path of the file to read
    :returns: a tuple of the header metadata (as a `Configuration`) and a
        mapping of column name to values
    """
    with open(fname, 'r') as fp:
        lines = fp.read().splitlines()

    header = '\n'.join(line[2:] for line in lines if line.startswith('# '))
    metadata = loads(header)
    names = list(metadata.get('columns', default=()))
    data = np.loadtxt(fname, ndmin=2)
    return metadata, {name: data[:, index] for index, name in enumerate(names)}

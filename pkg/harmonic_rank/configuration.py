from collections.abc import Mapping, Sequence
import dataclasses
from enum import Enum
import typing

import numpy as np

from harmonic_rank.exceptions import NotConfiguredError
from harmonic_rank.utils import Conflict, merge_into, split_keys


class Missing(Enum):
    SILENT = 'silent'  #: return `NotConfigured` for unconfigured keys, avoiding errors
    ERROR = 'error'  #: raise an `AttributeError` for unconfigured keys


class _NoDefault:
    # shows up as '(raise)' in generated documentation
    def __repr__(self) -> str:
        return '(raise)'

    __str__ = __repr__


#: default for `Configuration.get`, raising `NotConfiguredError` for missing keys
NoDefault = _NoDefault()


def unwrap(source: typing.Any) -> typing.Any:
    """
    Turn *source* into plain builtins that YAML can represent: `Configuration`
    objects and dataclass instances (settings, reports) become `dict` s,
    numpy arrays and tuples become `list` s, numpy scalars become `int` or
    `float` and enum members (verdicts, growth classes) become their values.

    :param source: the object to be unwrapped
    :return: *source* as builtins
    """
    if isinstance(source, Configuration):
        return unwrap(source._source)
    if isinstance(source, Enum):
        return unwrap(source.value)
    if isinstance(source, np.generic):
        return source.item()
    if isinstance(source, np.ndarray):
        return source.tolist()
    if isinstance(source, Mapping):
        return {unwrap(key): unwrap(value) for key, value in source.items()}
    if isinstance(source, (list, tuple)):
        return [unwrap(item) for item in source]
    if dataclasses.is_dataclass(source) and not isinstance(source, type):
        return {field.name: unwrap(getattr(source, field.name)) for field in dataclasses.fields(source)}
    return source


class Configuration(Mapping):
    """
    Read-only, layered run settings.

    Values are looked up by dotted path (``config.get('jacobi.rtol')``) or as
    attributes of nested sections (``config.jacobi.rtol``). Sources given
    later override earlier ones leaf by leaf; lists (scales, radii, the
    gallery) are replaced as a whole.

    :param sources: settings trees, least significant first; dotted keys are
        expanded into sections
    :param missing: what attribute access yields for unconfigured keys: a
        `Missing` policy or a default value
    """

    def __init__(self, *sources: typing.Mapping[str, typing.Any], missing: typing.Any = Missing.SILENT):
        self._missing = missing
        self._source: typing.MutableMapping[str, typing.Any] = {}
        for source in filter(None, sources):
            merge_into(self._source, split_keys(unwrap(source), colliding=_COLLIDING_KEYS),
                       conflict=Conflict.OVERWRITE)

    @property
    def _fallback(self) -> typing.Any:
        if self._missing is Missing.SILENT:
            return NotConfigured
        if self._missing is Missing.ERROR:
            return NoDefault
        return self._missing

    def _section(self, values: typing.Mapping[str, typing.Any]) -> 'Configuration':
        section = type(self)(missing=self._missing)
        section._source = values  # type: ignore[assignment]
        return section

    def get(self,
            path: str,
            default: typing.Any = NoDefault,
            *,
            as_type: typing.Optional[typing.Callable] = None) -> typing.Any:
        """
        Look up the value at a dotted *path*.

        :param path: dotted key, like ``hyperbolicity.scales``
        :param default: returned when nothing is configured at *path*
        :param as_type: conversion applied to the value found (``float`` for
            tolerances YAML reads as strings, ``list`` for scales)
        :returns: the value, a `Configuration` for sections, a `tuple` for
            sequences
        :raises NotConfiguredError: when *path* is unconfigured and no
            *default* is given
        """
        steps = path.split('.')
        value: typing.Any = self._source
        for depth, step in enumerate(steps, start=1):
            try:
                value = value[step]
            except (KeyError, TypeError) as e:
                if default is not NoDefault:
                    return default
                key = '.'.join(steps[:depth])
                raise NotConfiguredError(f'no configuration for key {key}', key=key) from e

        if as_type:
            return as_type(value)
        if isinstance(value, Mapping):
            return self._section(value)
        if isinstance(value, Sequence) and not isinstance(value, (str, bytes)):
            # gallery entries may be inline model mappings
            return tuple(self._section(item) if isinstance(item, Mapping) else item for item in value)
        return value

    def __getattr__(self, attr: str) -> typing.Any:
        if attr.startswith('_'):
            # private state and the dunders probed by copy and pickle, never configured values
            raise AttributeError(attr)
        try:
            return self.get(attr, default=self._fallback)
        except NotConfiguredError as e:
            raise AttributeError(attr) from e

    def __setattr__(self, name: str, value: typing.Any) -> None:
        if not name.startswith('_'):
            raise AttributeError(f'run settings are read-only ({name})')
        super().__setattr__(name, value)

    def __getitem__(self, item: str) -> typing.Any:
        return self.get(item)

    def __iter__(self) -> typing.Iterator[str]:
        return iter(self._source)

    def __len__(self) -> int:
        return len(self._source)

    def __repr__(self) -> str:
        return f'{type(self).__module__}.{type(self).__name__}(keys={list(self._source)!r})'


class _NotConfigured(Configuration):
    """
    Sentinel value to signal there is no value for a requested key.
    """

    def __bool__(self) -> bool:
        return False

    def __hash__(self) -> int:
        return hash((type(self), None))

    def __repr__(self) -> str:
        return '(not configured)'

    __str__ = __repr__


#: falsy, empty `Configuration` returned for unconfigured keys under `Missing.SILENT`
NotConfigured = _NotConfigured()

# names of Configuration members, configured keys with these names are unavailable as attributes
_COLLIDING_KEYS = frozenset(dir(Configuration))

from collections.abc import Mapping
from enum import IntEnum
import logging
import re
import typing

import yaml

from harmonic_rank.exceptions import InvalidConfigurationError, MergeConflictError


LOG = logging.getLogger(__name__)


class SettingsLoader(yaml.SafeLoader):
    """
    Safe YAML loader that also reads exponent notation without a dot (``1e-10``,
    common for tolerances) as a `float` rather than a `str`.
    """


SettingsLoader.add_implicit_resolver(
    'tag:yaml.org,2002:float',
    re.compile(r'^[-+]?(?:[0-9][0-9_]*(?:\.[0-9_]*)?|\.[0-9_]+)[eE][-+]?[0-9]+$'),
    list('-+0123456789.'),
)


def load_yaml(stream: typing.Union[str, typing.IO]) -> typing.Any:
    """
    Parse a YAML document using `SettingsLoader`.
    """
    return yaml.load(stream, Loader=SettingsLoader)


class Conflict(IntEnum):
    OVERWRITE = 0
    ERROR = 1


def merge_into(left: typing.MutableMapping[str, typing.Any],
               right: typing.Mapping[str, typing.Any],
               path: typing.Optional[typing.List[str]] = None,
               conflict: Conflict = Conflict.ERROR) -> typing.Mapping[str, typing.Any]:
    """
    Merge the settings tree *right* into *left*, in place. Sections present
    on both sides are merged recursively; leaves (tolerances, grids, lists
    of scales) are never combined.

    :param left: settings tree to update
    :param right: settings tree to take values from
    :param path: section names leading up to *left*, used in error messages
    :param conflict: whether differing leaves raise or get replaced by the
        value from *right*
    :returns: *left*
    :raises MergeConflictError: when leaves differ and *conflict* is
        `Conflict.ERROR`
    """
    path = path or []
    overwrite = Conflict(conflict) is Conflict.OVERWRITE

    for key, value in right.items():
        current = left.get(key, value)
        if isinstance(current, Mapping) and isinstance(value, Mapping) and current is not value:
            merge_into(current, value, [*path, key], conflict=conflict)  # type: ignore[arg-type]
            continue
        if key in left and current != value and not overwrite:
            dotted = '.'.join([*path, key])
            raise MergeConflictError(f'conflicting values for {dotted}: {current!r} and {value!r}', key=dotted)
        left[key] = value

    return left


def split_keys(mapping: typing.Mapping[str, typing.Any],
               colliding: typing.Optional[typing.Container] = None) -> typing.Mapping[str, typing.Any]:
    """
    Expand dotted keys into nested sections, ``{'jacobi.rtol': 1e-10}``
    becoming ``{'jacobi': {'rtol': 1e-10}}``.

    :param mapping: settings tree, possibly containing dotted keys at any
        level
    :param colliding: names that cannot be reached as attributes; a warning
        is logged for top-level keys among them
    :returns: a new settings tree without dotted keys
    :raises ValueError: for keys that are not strings
    """
    result: typing.MutableMapping[str, typing.Any] = {}

    for key, value in mapping.items():
        if not isinstance(key, str):
            kind = type(key)
            raise ValueError(f'setting names should be str, got {key!r} ({kind.__module__}.{kind.__name__})')

        head, *tail = key.split('.')
        if isinstance(value, Mapping):
            value = split_keys(value)
        for step in reversed(tail):
            value = {step: value}

        if colliding and head in colliding:
            LOG.warning('setting "%s" collides with a Configuration member, use get() to retrieve it', head)

        merge_into(result, {head: value})

    return result


def dotted_items(mapping: typing.Mapping[str, typing.Any],
                 prefix: str = '') -> typing.Iterator[typing.Tuple[str, typing.Any]]:
    """
    Walk a nested settings tree, yielding ``(dotted.key, leaf)`` pairs.
    """
    for key, value in mapping.items():
        if isinstance(value, Mapping):
            yield from dotted_items(value, f'{prefix}{key}.')
        else:
            yield f'{prefix}{key}', value


def parse_overrides(assignments: typing.Iterable[str]) -> typing.Mapping[str, typing.Any]:
    """
    Turns ``key=value`` assignments (as given on the command line) into a
    nested mapping. Values are parsed as YAML, the same way values from
    environment variables are, so ``jacobi.rtol=1e-10`` yields a `float`.

    :param assignments: strings of the form ``dotted.key=value``
    :returns: a nested mapping of the assigned values, later assignments
        overwriting earlier ones
    :raises InvalidConfigurationError: when an assignment lacks a ``=`` or a key
    """
    result: typing.MutableMapping[str, typing.Any] = {}
    for assignment in assignments:
        key, separator, value = assignment.partition('=')
        key = key.strip()
        if not separator or not key:
            raise InvalidConfigurationError(f'override "{assignment}" is not of the form key=value', key=key)
        merge_into(result, split_keys({key: load_yaml(value)}), conflict=Conflict.OVERWRITE)

    return result

"""
Experiment configuration files.

A configuration is a JSON document (YAML is accepted as well, it is parsed with
ruamel.yaml) with a ``seed``, an ``out`` folder and exactly one experiment
section: ``profile``, ``gd``, ``sgd``, ``init``, ``interpolate`` or ``verify``.
The structure is validated against ``relulab/schemas/experiment.json``, and
every field missing from the document is filled with the default declared in
that schema, so a loaded config always carries the complete set of settings
used by the run.
"""
import copy
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import ruamel.yaml  # type: ignore[import-untyped] # Known bugfix under no-fix status: https://sourceforge.net/p/ruamel-yaml/tickets/328/
from jsonschema import Draft7Validator

from . import experimentSchema

#: names of the experiment sections, in the order they are documented.
SECTIONS = ['profile', 'gd', 'sgd', 'init', 'interpolate', 'verify']


class ConfigError(ValueError):
    """The configuration cannot be parsed or does not validate.

    :param message: what is wrong.
    :param path: dotted path of the offending field, if known.
    :param line: 1-based line of the offending field, if known.
    :param column: 1-based column, if known.
    """

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        if path:
            where.append(f"field '{path}'")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


def _resolve(schema: Dict[str, Any]) -> Dict[str, Any]:
    """Follow ``$ref``; keys next to the reference (e.g. ``default``) take precedence."""
    ref = schema.get('$ref')
    if ref is None:
        return schema
    node: Any = experimentSchema
    for part in ref.lstrip('#/').split('/'):
        node = node[part]
    local = {k: v for k, v in schema.items() if k != '$ref'}
    return {**_resolve(node), **local}


def fillDefaults(doc: Dict[str, Any], schema: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Add the schema's default for every missing property, recursively.

    Defaults are only added inside objects that are present (or were
    themselves filled in from a default).
    """
    schema = _resolve(experimentSchema if schema is None else schema)
    for name, sub in schema.get('properties', {}).items():
        if name in SECTIONS and schema is experimentSchema:
            if name not in doc:
                continue
        sub = _resolve(sub)
        if name not in doc and 'default' in sub:
            doc[name] = copy.deepcopy(sub['default'])
        if isinstance(doc.get(name), dict) and 'properties' in sub:
            fillDefaults(doc[name], sub)
    return doc


def _plain(node: Any) -> Any:
    """ruamel containers to plain dicts and lists."""
    if isinstance(node, dict):
        return {str(k): _plain(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_plain(v) for v in node]
    if isinstance(node, bool) or node is None:
        return node
    if isinstance(node, int):
        return int(node)
    if isinstance(node, float):
        return float(node)
    if isinstance(node, str):
        return str(node)
    return node


def _lineOf(raw: Any, path: List[Any]) -> Tuple[Optional[int], Optional[int]]:
    """Line and column (1-based) of the deepest existing node along ``path``."""
    node = raw
    line = col = None
    for key in path:
        try:
            if isinstance(node, dict):
                line, col = node.lc.key(key)
            elif isinstance(node, list):
                line, col = node.lc.item(key)
            node = node[key]
        except (AttributeError, KeyError, IndexError, TypeError):
            break
    if line is None:
        return None, None
    return line + 1, col + 1


def parseConfig(text: str, source: str = '<config>') -> Dict[str, Any]:
    """Parse, validate and complete a configuration document.

    :raises ConfigError: on syntax errors (with line and column), a missing or
        duplicated experiment section, or schema violations (with the dotted
        field path).
    """
    yaml = ruamel.yaml.YAML()
    try:
        raw = yaml.load(text)
    except ruamel.yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        problem = getattr(e, 'problem', None) or str(e)
        if mark is not None:
            raise ConfigError(f"{source}: cannot parse config: {problem}",
                              line=mark.line + 1, column=mark.column + 1) from e
        raise ConfigError(f"{source}: cannot parse config: {problem}") from e

    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: the config must be an object with one experiment section")

    present = [s for s in SECTIONS if s in raw]
    if len(present) == 0:
        raise ConfigError(f"{source}: missing experiment section, expected one of "
                          f"{', '.join(SECTIONS)}", path='|'.join(SECTIONS))
    if len(present) > 1:
        line, col = _lineOf(raw, [present[1]])
        raise ConfigError(f"{source}: exactly one experiment section allowed, found "
                          f"{', '.join(present)}", path=present[1], line=line, column=col)

    doc = fillDefaults(_plain(raw))
    errors = sorted(Draft7Validator(experimentSchema).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        line, col = _lineOf(raw, path)
        raise ConfigError(f"{source}: {err.message}",
                          path='.'.join(str(p) for p in path) or None, line=line, column=col)
    return doc


def loadConfig(configPath: str | Path) -> Dict[str, Any]:
    """Load an experiment config file; see :func:`parseConfig`."""
    configPath = Path(configPath)
    try:
        text = configPath.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {configPath}: {e}") from e
    return parseConfig(text, source=str(configPath))


def experimentSection(config: Dict[str, Any]) -> Tuple[str, Dict[str, Any]]:
    """Name and body of the (single) experiment section."""
    for name in SECTIONS:
        if name in config:
            return name, config[name]
    raise ConfigError("missing experiment section", path='|'.join(SECTIONS))


def buildConfig(section: str, body: Optional[Dict[str, Any]] = None,
                seed: int = 0, out: str = 'relulab-out') -> Dict[str, Any]:
    """Complete and validate a config assembled in code (e.g. from CLI flags)."""
    if section not in SECTIONS:
        raise ConfigError(f"unknown experiment section '{section}'", path=section)
    return parseConfig(json.dumps({'seed': seed, 'out': out, section: body or {}}),
                       source=f'<{section} options>')


def configToJson(config: Dict[str, Any]) -> str:
    """Serialize a loaded config; parsing the result gives back the same config."""
    return json.dumps(config, indent=2, sort_keys=True)

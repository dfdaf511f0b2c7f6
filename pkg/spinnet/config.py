"""Experiment configuration.

Configuration lives in config.json (nested JSON sections). Values missing from the
file fall back to DEFAULT_CONFIG. Command line overrides address flattened keys,
e.g. ``scan:h_max=12``. The worker count can also be set with the SPINNET_WORKERS
environment variable.
"""
import copy
import json
import logging
import math
import os

from flatdict import FlatDict
from frozendict import frozendict

from spinnet import ConfigError

DELIMITER = ':'
WORKERS_ENV = 'SPINNET_WORKERS'
DEFAULT_PATH = 'config.json'

DEFAULT_CONFIG = {
    'spinnet': {
        'experiments': [
            'spinnet.experiments.splitters.verify',
            'spinnet.experiments.protocols.curves',
            'spinnet.experiments.protocols.run_protocol',
            'spinnet.experiments.scattering.transmission_scan',
        ],
        'post': [
            'spinnet.post.resonance_argmax',
            'spinnet.post.curve_claims',
        ],
        'workers': 1,
        'seed': 0,
    },
    'output': {
        'dir': 'output',
        'cache': True,
    },
    'packet': {
        'alpha': 4 / 15,
        'momentum': None,
    },
    'geometry': {
        'J_perp': 1.0,
        'compact': False,
        'left': 120,
        'right': 120,
        'start': 30,
        'buffer': 3,
    },
    'propagator': {
        'method': 'chebyshev',
        'tolerance': 1e-10,
        'max_matvecs': 1000000,
    },
    'scan': {
        'h_min': 0.0,
        'h_max': 20.0,
        'h_points': 41,
        'jz_min': 0.0,
        'jz_max': 20.0,
        'jz_points': 41,
        'dd_state': 0,
        'max_failure_fraction': 0.05,
    },
    'protocol': {
        'kind': 'GHZ',
        'n': 2,
        'engine': 'closed-form',
        'alpha': None,
        'beta': None,
        'alpha_out': None,
        'beta_out': None,
        'optimal': False,
        'h': 10.0,
        'Jz': 10.0,
        'dd': None,
        't_override': None,
        'r_override': None,
        'tail_eps': 1e-6,
        'detector': False,
    },
    'curves': {
        'kind': 'both',
        'T_values': [1.0, 0.9, 0.8, 0.7],
        'n_min': 2,
        'n_max': 8,
    },
    'verify': {
        'alpha': 0.6,
        'beta': 0.8,
        'ns': [2, 3, 4, 5],
        'dynamical': True,
    },
    'evolve': {
        'kind': 'chain',
        'sites': 100,
        'dd_position': 50,
        'h': 10.0,
        'Jz': 10.0,
        'center': 20.0,
        'duration': 60.0,
        'sample_every': 1.0,
        'compress': False,
    },
}


def _number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _integer(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _optional_number(value):
    return value is None or _number(value)


def _complex_like(value):
    if value is None or _number(value):
        return True
    return isinstance(value, (list, tuple)) and len(value) == 2 and all(_number(v) for v in value)


def _dd_list(value):
    if value is None:
        return True
    return isinstance(value, (list, tuple)) and len(value) > 0 and all(
        isinstance(p, (list, tuple)) and len(p) == 2 and all(_number(v) for v in p) for p in value)


def _string_list(value):
    return isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value)


# Flattened key -> (check, description)
SCHEMA = {
    'spinnet:experiments': (_string_list, 'list of module names'),
    'spinnet:post': (_string_list, 'list of module names'),
    'spinnet:workers': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'spinnet:seed': (_integer, 'integer'),
    'output:dir': (lambda v: isinstance(v, str) and v != '', 'non-empty string'),
    'output:cache': (lambda v: isinstance(v, bool), 'boolean'),
    'packet:alpha': (lambda v: _number(v) and 0 < v < 2, 'number in (0, 2)'),
    'packet:momentum': (_optional_number, 'number or null (direction from the sign of J_perp)'),
    'geometry:J_perp': (lambda v: _number(v) and v != 0, 'nonzero number'),
    'geometry:compact': (lambda v: isinstance(v, bool), 'boolean'),
    'geometry:left': (lambda v: _integer(v) and v >= 2, 'integer >= 2'),
    'geometry:right': (lambda v: _integer(v) and v >= 2, 'integer >= 2'),
    'geometry:start': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'geometry:buffer': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'propagator:method': (lambda v: v in ('chebyshev', 'krylov', 'dense-expm'), 'chebyshev|krylov|dense-expm'),
    'propagator:tolerance': (lambda v: _number(v) and 0 < v < 1e-3, 'number in (0, 1e-3)'),
    'propagator:max_matvecs': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'scan:h_min': (lambda v: _number(v) and 0 <= v <= 20, 'number in [0, 20]'),
    'scan:h_max': (lambda v: _number(v) and 0 <= v <= 20, 'number in [0, 20]'),
    'scan:h_points': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'scan:jz_min': (lambda v: _number(v) and 0 <= v <= 20, 'number in [0, 20]'),
    'scan:jz_max': (lambda v: _number(v) and 0 <= v <= 20, 'number in [0, 20]'),
    'scan:jz_points': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'scan:dd_state': (lambda v: v in (0, 1) and not isinstance(v, bool), '0 or 1'),
    'scan:max_failure_fraction': (lambda v: _number(v) and 0 <= v <= 1, 'number in [0, 1]'),
    'protocol:kind': (lambda v: v in ('GHZ', 'W'), 'GHZ or W'),
    'protocol:n': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'protocol:engine': (lambda v: v in ('closed-form', 'dynamics', 'both'), 'closed-form|dynamics|both'),
    'protocol:alpha': (_optional_number, 'number or null'),
    'protocol:beta': (_optional_number, 'number or null'),
    'protocol:alpha_out': (_optional_number, 'number or null'),
    'protocol:beta_out': (_optional_number, 'number or null'),
    'protocol:optimal': (lambda v: isinstance(v, bool), 'boolean'),
    'protocol:h': (lambda v: _number(v) and v > 0, 'positive number'),
    'protocol:Jz': (lambda v: _number(v) and v > 0, 'positive number'),
    'protocol:dd': (_dd_list, 'null or list of [h, Jz] pairs'),
    'protocol:t_override': (_complex_like, 'null, number or [re, im]'),
    'protocol:r_override': (_complex_like, 'null, number or [re, im]'),
    'protocol:tail_eps': (lambda v: _number(v) and 0 < v < 1e-2, 'number in (0, 1e-2)'),
    'protocol:detector': (lambda v: isinstance(v, bool), 'boolean'),
    'curves:kind': (lambda v: v in ('GHZ', 'W', 'both'), 'GHZ|W|both'),
    'curves:T_values': (lambda v: isinstance(v, (list, tuple)) and len(v) > 0
                        and all(_number(x) and 0 < x <= 1 for x in v), 'list of numbers in (0, 1]'),
    'curves:n_min': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'curves:n_max': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'verify:alpha': (_number, 'number'),
    'verify:beta': (_number, 'number'),
    'verify:ns': (lambda v: isinstance(v, (list, tuple)) and len(v) > 0
                  and all(_integer(x) for x in v), 'list of integers'),
    'verify:dynamical': (lambda v: isinstance(v, bool), 'boolean'),
    'evolve:kind': (lambda v: v in ('chain', 'dd-chain', 'splitter'), 'chain|dd-chain|splitter'),
    'evolve:sites': (lambda v: _integer(v) and v >= 2, 'integer >= 2'),
    'evolve:dd_position': (lambda v: _integer(v) and v >= 1, 'integer >= 1'),
    'evolve:h': (lambda v: _number(v) and v > 0, 'positive number'),
    'evolve:Jz': (lambda v: _number(v) and v > 0, 'positive number'),
    'evolve:center': (lambda v: _number(v) and v >= 0, 'non-negative number'),
    'evolve:duration': (lambda v: _number(v) and 0 <= v <= 200, 'number in [0, 200]'),
    'evolve:sample_every': (lambda v: _number(v) and v > 0, 'positive number'),
    'evolve:compress': (lambda v: isinstance(v, bool), 'boolean'),
}


def _flatten(nested):
    return FlatDict(copy.deepcopy(nested), delimiter=DELIMITER)


def parse_override(text):
    """Split 'section:key=value' into (key, value); value is decoded as JSON when
    possible and kept as a string otherwise."""

    if '=' not in text:
        raise ConfigError(f'Override "{text}" is not of the form section:key=value')

    key, raw = text.split('=', 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw

    return key, value


def validate(flat):
    """Check every flattened key against SCHEMA. Raise ConfigError on the first
    problem found, naming the offending key."""

    for key in flat.keys():
        if key not in SCHEMA:
            raise ConfigError(f'Unknown configuration key "{key}"')

    for key, (check, description) in SCHEMA.items():
        if key not in flat:
            raise ConfigError(f'Missing configuration key "{key}"')
        if not check(flat[key]):
            raise ConfigError(f'Invalid value for "{key}": {flat[key]!r} (expected {description})')

    if flat['scan:h_min'] > flat['scan:h_max'] or flat['scan:jz_min'] > flat['scan:jz_max']:
        raise ConfigError('Scan ranges must satisfy min <= max')
    if flat['curves:n_min'] > flat['curves:n_max']:
        raise ConfigError('curves:n_min must not exceed curves:n_max')


def freeze(value):
    """Turn nested dicts and lists into frozendicts and tuples."""

    if isinstance(value, dict):
        return frozendict({k: freeze(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    return value


def _merge(flat, source, origin):
    for key, value in source.items():
        if key not in SCHEMA:
            raise ConfigError(f'Unknown configuration key "{key}" in {origin}')
        flat[key] = value


def load_config(path=DEFAULT_PATH, overrides=None, environ=None):
    """Load, merge and validate the configuration.

    path: JSON file to read. The default config.json is optional, any other path
    must exist. None skips reading a file.
    overrides: iterable of 'section:key=value' strings applied last.
    environ: mapping used for the SPINNET_WORKERS override (defaults to os.environ).

    return: validated configuration as a nested frozendict
    """

    flat = _flatten(DEFAULT_CONFIG)

    if path is not None:
        if os.path.exists(path):
            try:
                with open(path, 'r') as fp:
                    from_file = json.load(fp)
            except ValueError as e:
                raise ConfigError(f'Cannot parse {path}: {e}')
            if not isinstance(from_file, dict):
                raise ConfigError(f'{path} must contain a JSON object')
            _merge(flat, _flatten(from_file), path)
            logging.info(f'Loaded configuration from {path}')
        elif path != DEFAULT_PATH:
            raise ConfigError(f'Configuration file {path} does not exist')

    environ = os.environ if environ is None else environ
    if WORKERS_ENV in environ:
        try:
            flat['spinnet:workers'] = int(environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError(f'{WORKERS_ENV} must be an integer, got {environ[WORKERS_ENV]!r}')

    for text in overrides or []:
        key, value = parse_override(text)
        _merge(flat, {key: value}, 'command line')

    validate(flat)

    return freeze(flat.as_dict())


def default_config():
    return load_config(path=None, environ={})

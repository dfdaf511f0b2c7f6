import json

import pytest

from spinnet import ConfigError
from spinnet.config import DEFAULT_CONFIG, load_config, parse_override


def write_json(path, content):
    path.write_text(json.dumps(content) if not isinstance(content, str) else content)
    return str(path)


def test_defaults(config):
    assert config['scan']['h_points'] == 41
    assert config['packet']['alpha'] == pytest.approx(4 / 15)
    assert config['curves']['T_values'] == (1.0, 0.9, 0.8, 0.7)
    assert config['spinnet']['experiments'] == tuple(DEFAULT_CONFIG['spinnet']['experiments'])
    with pytest.raises(TypeError):
        config['scan']['h_max'] = 1.0


def test_missing_default_file_is_fine(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)

    assert load_config(environ={})['geometry']['left'] == 120


def test_file_values_override_defaults(tmp_path):
    path = write_json(tmp_path / 'conf.json', {'scan': {'h_max': 12.0}, 'geometry': {'compact': True}})
    config = load_config(path, environ={})

    assert config['scan']['h_max'] == 12.0
    assert config['scan']['h_min'] == 0.0
    assert config['geometry']['compact'] is True


def test_override_order(tmp_path):
    path = write_json(tmp_path / 'conf.json', {'spinnet': {'workers': 3}})

    assert load_config(path, environ={})['spinnet']['workers'] == 3
    assert load_config(path, environ={'SPINNET_WORKERS': '4'})['spinnet']['workers'] == 4
    assert load_config(path, ['spinnet:workers=2'], environ={'SPINNET_WORKERS': '4'})['spinnet']['workers'] == 2


def test_overrides():
    config = load_config(None, ['scan:h_max=12', 'protocol:kind="W"', 'evolve:kind=dd-chain',
                                'protocol:t_override=[0.5, 0.1]'], environ={})

    assert config['scan']['h_max'] == 12
    assert config['protocol']['kind'] == 'W'
    assert config['evolve']['kind'] == 'dd-chain'
    assert config['protocol']['t_override'] == (0.5, 0.1)


def test_parse_override():
    assert parse_override('a:b=1') == ('a:b', 1)
    assert parse_override('a:b = x=y') == ('a:b', ' x=y')
    with pytest.raises(ConfigError):
        parse_override('a:b')


@pytest.mark.parametrize('overrides, key', [
    (['scan:nope=1'], 'scan:nope'),
    (['packet:alpha=3'], 'packet:alpha'),
    (['spinnet:workers=0'], 'spinnet:workers'),
    (['propagator:method="rk4"'], 'propagator:method'),
    (['scan:dd_state=true'], 'scan:dd_state'),
    (['protocol:dd=[[10, 10, 1]]'], 'protocol:dd'),
])
def test_invalid_values_name_their_key(overrides, key):
    with pytest.raises(ConfigError) as info:
        load_config(None, overrides, environ={})
    assert key in info.value.message


def test_inconsistent_ranges():
    with pytest.raises(ConfigError):
        load_config(None, ['scan:h_min=12', 'scan:h_max=10'], environ={})
    with pytest.raises(ConfigError):
        load_config(None, ['curves:n_min=5', 'curves:n_max=4'], environ={})


def test_broken_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'), environ={})
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / 'bad.json', '{"scan": '), environ={})
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / 'list.json', '[1, 2]'), environ={})
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / 'unknown.json', {'scan': {'steps': 3}}), environ={})
    with pytest.raises(ConfigError):
        load_config(None, environ={'SPINNET_WORKERS': 'many'})

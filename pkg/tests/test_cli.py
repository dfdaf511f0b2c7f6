import json
import math
import os

import pandas as pd
import pytest

from spinnet.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main

SINGLE_POINT_SCAN = [
    '--set', 'geometry:compact=true', '--set', 'output:cache=false',
    '--set', 'scan:h_min=10', '--set', 'scan:h_max=10', '--set', 'scan:h_points=1',
    '--set', 'scan:jz_min=10', '--set', 'scan:jz_max=10', '--set', 'scan:jz_points=1',
]


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv('SPINNET_WORKERS', raising=False)
    return tmp_path


def read_summary(name, root='output'):
    with open(os.path.join(root, name, 'summary.json')) as fp:
        return json.load(fp)


def test_curves(capsys):
    assert main(['curves']) == EXIT_OK

    printed = capsys.readouterr().out.split()
    assert 'output/protocols.curves/curves.csv' in printed
    assert len(pd.read_csv('output/protocols.curves/curves.csv')) == 28
    assert os.path.isdir('log')


def test_curves_are_deterministic():
    assert main(['curves', '--output-dir', 'first']) == EXIT_OK
    assert main(['curves', '--output-dir', 'second']) == EXIT_OK

    with open('first/protocols.curves/curves.csv', 'rb') as a, open('second/protocols.curves/curves.csv', 'rb') as b:
        assert a.read() == b.read()


def test_malformed_config(capsys):
    with open('broken.json', 'w') as fp:
        fp.write('{"scan": ')

    assert main(['curves', '--config', 'broken.json']) == EXIT_CONFIG
    assert 'configuration error' in capsys.readouterr().err
    assert not os.path.exists('output')


@pytest.mark.parametrize('override', ['curves:n_min', 'curves:nope=1', 'curves:kind="GHZW"'])
def test_bad_overrides(override):
    assert main(['curves', '--set', override]) == EXIT_CONFIG
    assert not os.path.exists('output')


def test_unit_test_flag():
    assert main(['curves', '--unit-test']) == EXIT_OK


def test_refused_dynamics():
    code = main(['run-protocol', '--kind', 'ghz', '--n', '4', '--engine', 'dynamics'])

    assert code == EXIT_NUMERICAL
    assert 'refused' in read_summary('protocols.run_protocol')


def test_w_protocol_with_perfect_transmission():
    code = main(['run-protocol', '--kind', 'W', '--n', '8', '--set', 'protocol:t_override=1.0'])

    assert code == EXIT_OK
    summary = read_summary('protocols.run_protocol')
    assert summary['closed-form']['success_probability'] == pytest.approx(1 / 8)
    assert summary['closed-form']['fidelity'] == pytest.approx(1.0)

    registers = pd.read_csv('output/protocols.run_protocol/register.csv', dtype={'register': str})
    assert len(registers) == 2 ** 8
    populated = registers[registers['population [prob]'] > 1e-12]['register']
    assert sorted(populated) == sorted(format(1 << q, '08b') for q in range(8))


def test_verify_reports_unnormalized_splitter():
    code = main(['verify', '--set', 'verify:beta=0.7', '--set', 'verify:dynamical=false'])

    assert code == EXIT_NUMERICAL
    summary = read_summary('splitters.verify')
    assert summary['passed'] is False
    assert summary['failures'] == ['normalization:Y']


def test_single_point_scan():
    assert main(['scan-transmission'] + SINGLE_POINT_SCAN) == EXIT_OK

    surface = pd.read_csv('output/scattering.transmission_scan/surface.csv')
    assert len(surface) == 1
    assert surface['T [prob]'][0] >= 0.98
    assert not os.path.exists('output/scattering.transmission_scan/failures.csv')
    assert read_summary('scattering.transmission_scan')['failures'] == 0


def test_single_point_scan_with_negative_coupling():
    assert main(['scan-transmission'] + SINGLE_POINT_SCAN + ['--set', 'geometry:J_perp=-1.0']) == EXIT_OK

    surface = pd.read_csv('output/scattering.transmission_scan/surface.csv')
    assert surface['T [prob]'][0] >= 0.98
    summary = read_summary('scattering.transmission_scan')
    assert summary['packet']['momentum'] == pytest.approx(-math.pi / 2)


def test_scan_rejects_packet_moving_away(capsys):
    code = main(['scan-transmission'] + SINGLE_POINT_SCAN + ['--set', 'packet:momentum=-1.5707963267948966'])

    assert code == EXIT_CONFIG
    assert 'moves away from the DD qubit' in capsys.readouterr().err
    assert not os.path.exists('output')


def test_evolve_chain():
    code = main(['evolve', '--set', 'evolve:sites=30', '--set', 'evolve:center=10',
                 '--set', 'evolve:duration=5', '--set', 'evolve:sample_every=1'])

    assert code == EXIT_OK
    frame = pd.read_csv('output/scattering.trajectory/trajectory.csv')
    assert len(frame) == 6 * 30
    summary = read_summary('scattering.trajectory')
    assert summary['n_sites'] == 30
    assert summary['norm_drift'] < 1e-10


def test_evolve_rejects_packet_outside_chain():
    code = main(['evolve', '--set', 'evolve:sites=30', '--set', 'evolve:center=40'])

    assert code == EXIT_CONFIG

import math
import os

import numpy as np
import pandas as pd
import pytest

from spinnet import ConfigError, InvalidTopologyError, NotSeparatedError, SectorError
from spinnet.network import build_chain, build_chain_with_dd
from spinnet.scattering import (ScanGrid, ScatteringSetup, dd_switch_fidelity, packet_dd_concurrence,
                                resonance_argmax, scan_signature, scatter_off_dd, scatter_superposed_dd,
                                three_level_block, transfer_time, transmission_scan, transmitted_momentum)

ALPHA = 4 / 15


def test_three_level_transfer():
    net = build_chain_with_dd(1, 1, 1.0, 10.0, 10.0)
    indices, block = three_level_block(net)

    assert len(indices) == 3
    assert np.allclose(np.diag(block).real, 10.0)
    assert block[0, 1].real == pytest.approx(-0.5)
    assert block[1, 2].real == pytest.approx(-0.5)
    assert transfer_time(block) == pytest.approx(math.pi * math.sqrt(2))
    assert dd_switch_fidelity(net) >= 1 - 1e-10


def test_off_resonance_blocks_transfer():
    net = build_chain_with_dd(1, 1, 1.0, 8.0, 10.0)
    _, block = three_level_block(net)

    assert np.allclose(np.diag(block).real, [8.0, 12.0, 8.0])
    assert dd_switch_fidelity(net) < 0.5


def test_three_level_needs_neighbours():
    net = build_chain_with_dd(0, 3, 1.0, 10.0, 10.0)
    with pytest.raises(InvalidTopologyError):
        three_level_block(net)


def test_compact_geometry(compact):
    assert (compact.left, compact.right, compact.start) == (41, 40, 18)
    assert compact.network(10.0, 10.0).n_sites == 83
    assert compact.final_time(ALPHA) == pytest.approx(40 / math.exp(-ALPHA ** 2 / 4))

    packet = compact.packet(ALPHA)
    assert packet.center == 23
    assert packet.support == tuple(range(41))


def test_packet_direction_follows_coupling_sign(compact):
    assert compact.packet(ALPHA).momentum == pytest.approx(math.pi / 2)

    flipped = ScatteringSetup.compact(ALPHA, J_perp=-1.0)
    assert flipped.packet(ALPHA).momentum == pytest.approx(-math.pi / 2)
    assert flipped.packet(ALPHA, -math.pi / 2).momentum == pytest.approx(-math.pi / 2)

    with pytest.raises(ConfigError):
        flipped.packet(ALPHA, math.pi / 2)
    with pytest.raises(ConfigError):
        compact.packet(ALPHA, -math.pi / 2)
    with pytest.raises(ConfigError):
        compact.packet(ALPHA, 0.0)


def test_negative_coupling_resonant_transmission():
    setup = ScatteringSetup.compact(ALPHA, J_perp=-1.0)
    amplitudes = scatter_off_dd(setup.network(10.0, 10.0), setup.packet(ALPHA))

    assert amplitudes.transmission >= 0.98
    assert amplitudes.reflection < 0.02


def test_short_chains_are_rejected():
    with pytest.raises(InvalidTopologyError):
        ScatteringSetup(41, 40, 10).check(ALPHA)
    with pytest.raises(InvalidTopologyError):
        ScatteringSetup(30, 40, 18).check(ALPHA)
    with pytest.raises(InvalidTopologyError):
        ScatteringSetup(41, 30, 18).check(ALPHA)


@pytest.fixture(scope='module')
def resonant(compact):
    net = compact.network(10.0, 10.0)
    return net, compact.packet(ALPHA), scatter_off_dd(net, compact.packet(ALPHA), keep_state=True)


def test_resonant_transmission(resonant):
    _, _, amplitudes = resonant

    assert amplitudes.transmission >= 0.98
    assert amplitudes.transmission + amplitudes.reflection + amplitudes.leakage == pytest.approx(1.0)
    assert abs(amplitudes.t) ** 2 == pytest.approx(amplitudes.transmission)
    assert amplitudes.interference <= 1e-3


def test_transmitted_packet_keeps_its_momentum(resonant):
    net, _, amplitudes = resonant

    assert transmitted_momentum(amplitudes.final_state, net) == pytest.approx(math.pi / 2, abs=0.05)


def test_packet_dd_entanglement_is_small(resonant):
    _, _, amplitudes = resonant

    assert packet_dd_concurrence(amplitudes) < 0.02


def test_dd_in_one_reflects(resonant):
    net, packet, _ = resonant

    amplitudes = scatter_off_dd(net, packet, dd_state=1)
    assert amplitudes.reflection >= 0.99


def test_scattering_errors(compact, resonant):
    net, packet, _ = resonant

    with pytest.raises(SectorError):
        scatter_off_dd(net, packet, dd_state=2)
    with pytest.raises(SectorError):
        scatter_off_dd(build_chain(83, 1.0), packet)
    with pytest.raises(NotSeparatedError) as info:
        scatter_off_dd(net, packet, t_final=10.0)
    assert info.value.suggested_time > 10.0


def test_superposed_dd_is_linear(compact, resonant):
    net, packet, _ = resonant

    final, residue = scatter_superposed_dd(net, packet, 0.6, 0.8j, compact.final_time(ALPHA))
    assert final.norm() == pytest.approx(1.0)
    assert residue < 1e-10


def test_scan_grid():
    grid = ScanGrid([1.0, 2.0], [3.0, 4.0, 5.0])

    assert len(grid) == 6
    assert grid.points()[:3] == [(1.0, 3.0), (1.0, 4.0), (1.0, 5.0)]
    with pytest.raises(ConfigError):
        ScanGrid([], [1.0])
    with pytest.raises(ConfigError):
        ScanGrid([21.0], [1.0])

    grid = ScanGrid.from_config({'h_min': 0.0, 'h_max': 20.0, 'h_points': 41,
                                 'jz_min': 0.0, 'jz_max': 20.0, 'jz_points': 41})
    assert len(grid) == 1681
    assert grid.h_values[20] == 10.0


def test_scan_records_failures_and_uses_cache(compact, tmp_path):
    cache_dir = str(tmp_path) + '/'
    grid = ScanGrid([10.0], [0.0, 10.0])

    surface = transmission_scan(grid, setup=compact, alpha=ALPHA, cache_dir=cache_dir)

    assert [(row['h'], row['Jz']) for row in surface.rows] == [(10.0, 0.0), (10.0, 10.0)]
    assert surface.failure_fraction() == 0.5
    assert surface.rows[0]['error']
    assert len(surface.to_frame()) == 1
    assert len(surface.failures_frame()) == 1
    assert surface.value(10.0, 10.0) >= 0.98
    assert len(os.listdir(tmp_path)) == 1

    again = transmission_scan(grid, setup=compact, alpha=ALPHA, cache_dir=cache_dir)
    assert again.value(10.0, 10.0, 'T') == surface.value(10.0, 10.0, 'T')
    assert again.value(10.0, 10.0, 't') == surface.value(10.0, 10.0, 't')


def test_scan_signature_covers_run_parameters(compact):
    packet = compact.packet(ALPHA)
    t_final = compact.final_time(ALPHA)
    signature = scan_signature(compact, packet, t_final)

    assert scan_signature(compact, compact.packet(ALPHA), t_final) == signature
    assert scan_signature(compact, compact.packet(0.5), t_final) != signature
    assert scan_signature(ScatteringSetup(45, 40, 18), packet, t_final) != signature
    assert scan_signature(compact, packet, t_final + 1.0) != signature
    assert scan_signature(compact, packet, t_final, {'method': 'krylov'}) != signature


def test_scan_cache_is_not_shared_across_parameters(compact, tmp_path):
    cache_dir = str(tmp_path) + '/'
    grid = ScanGrid([10.0], [10.0])

    transmission_scan(grid, setup=compact, alpha=ALPHA, cache_dir=cache_dir)
    assert len(os.listdir(tmp_path)) == 1

    wide = transmission_scan(grid, setup=compact, alpha=0.5, cache_dir=cache_dir)
    uncached = transmission_scan(grid, setup=compact, alpha=0.5)

    assert len(os.listdir(tmp_path)) == 2
    assert wide.value(10.0, 10.0) == pytest.approx(uncached.value(10.0, 10.0), abs=1e-12)


def test_resonance_argmax():
    frame = pd.DataFrame([
        (9.0, 10.0, 0.5, 0.0, 0.0, 0.5, 0.0),
        (10.0, 10.0, 0.99, 0.0, 0.0, 0.01, 0.0),
        (5.0, 5.0, 0.9, 0.0, 0.0, 0.1, 0.0),
        (6.0, 5.0, 0.3, 0.0, 0.0, 0.7, 0.0),
    ], columns=['h [J_perp]', 'Jz [J_perp]', 'T [prob]', 'Re t', 'Im t', '|r|^2 [prob]', 'leakage [prob]'])

    table = resonance_argmax(frame)

    assert list(table['Jz [J_perp]']) == [5.0, 10.0]
    assert list(table['h_argmax [J_perp]']) == [5.0, 10.0]
    assert list(table['|h-Jz| [J_perp]']) == [0.0, 0.0]


@pytest.mark.slow
def test_default_geometry_resonance():
    setup = ScatteringSetup.default()
    amplitudes = scatter_off_dd(setup.network(10.0, 10.0), setup.packet(ALPHA))

    assert amplitudes.transmission >= 0.98


@pytest.mark.slow
def test_argmax_follows_resonance(compact):
    grid = ScanGrid([9.0, 9.5, 10.0, 10.5, 11.0], [10.0])
    surface = transmission_scan(grid, setup=compact, alpha=ALPHA, workers=2)

    table = surface.argmax_table()
    assert table['h_argmax [J_perp]'].iloc[0] == 10.0


@pytest.mark.slow
def test_transmission_along_resonance_diagonal(compact):
    fields = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]
    packet = compact.packet(ALPHA)
    T = [scatter_off_dd(compact.network(h, h), packet).transmission for h in fields]

    assert T[0] >= 0.95
    assert T[fields.index(10.0)] >= 0.98
    assert np.all(np.diff(T) >= 0)


@pytest.mark.slow
@pytest.mark.parametrize('jz', [6.0, 8.0, 10.0, 12.0])
def test_argmax_on_quarter_grid(compact, jz):
    grid = ScanGrid(np.arange(jz - 1.0, jz + 1.125, 0.25), [jz])
    surface = transmission_scan(grid, setup=compact, alpha=ALPHA)

    assert surface.argmax_table()['h_argmax [J_perp]'].iloc[0] == jz

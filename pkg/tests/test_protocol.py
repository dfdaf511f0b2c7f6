import math

import numpy as np
import pytest

from spinnet import ConfigError, DynamicsRefusedError, InvalidDensityError, ZeroProbabilityError
from spinnet.dynamics import packet_tail
from spinnet.protocol import (BUFFER, ProtocolConfig, build_protocol_network, concurrence, curve_claims,
                              flying_qubit_density, ghz_optimality_search, ghz_state, ghz_success_probability,
                              optimal_ghz_parameters, optimal_ghz_success_probability, probability_curves,
                              run_ghz_closed_form, run_protocol, run_protocol_full_dynamics, run_w_closed_form,
                              single_splitter_operation, w_state, w_success_probability)


@pytest.mark.parametrize('alpha', np.linspace(0.0, 1.0, 50))
def test_flying_qubit_concurrence(alpha):
    beta = math.sqrt(1 - alpha ** 2)

    assert concurrence(flying_qubit_density(alpha, beta)) == pytest.approx(2 * alpha * beta, abs=1e-9)


def test_mixed_state_concurrence():
    bell = np.zeros(4)
    bell[0] = bell[3] = 1 / math.sqrt(2)
    werner = 0.8 * np.outer(bell, bell) + 0.2 * np.eye(4) / 4

    assert concurrence(werner) == pytest.approx(0.7, abs=1e-9)
    assert concurrence(np.eye(4) / 4) == pytest.approx(0.0, abs=1e-12)


def test_invalid_densities():
    with pytest.raises(InvalidDensityError):
        concurrence(np.eye(4) / 2)
    with pytest.raises(InvalidDensityError):
        concurrence(np.eye(3) / 3)
    with pytest.raises(InvalidDensityError):
        concurrence(np.diag([1.5, -0.5, 0, 0]))


def test_target_states():
    assert np.linalg.norm(ghz_state(3)) == pytest.approx(1.0)
    assert ghz_state(3)[0] == ghz_state(3)[7]
    assert np.flatnonzero(w_state(3)).tolist() == [1, 2, 4]


def test_balanced_ghz_with_perfect_transmission():
    outcome = run_ghz_closed_form(ProtocolConfig('GHZ', 3, t_override=1.0))

    assert outcome.success_probability == pytest.approx(0.5)
    assert outcome.fidelity == pytest.approx(1.0)
    assert outcome.ledger_total() == pytest.approx(1.0)
    assert np.allclose(outcome.post_state, ghz_state(3))
    assert set(outcome.to_summary()['amplitudes']['output']) == {'000', '111'}


@pytest.mark.parametrize('t, n', [(0.9, 3), (0.8, 2), (0.95, 1)])
def test_optimal_ghz(t, n):
    outcome = run_ghz_closed_form(ProtocolConfig('GHZ', n, optimal=True, t_override=t))

    assert outcome.fidelity == pytest.approx(1.0)
    assert outcome.success_probability == pytest.approx(optimal_ghz_success_probability(t, n))
    assert outcome.success_probability == pytest.approx(ghz_success_probability(t, n))

    alpha, beta, _, _ = optimal_ghz_parameters(t, n)
    assert alpha ** 2 + beta ** 2 == pytest.approx(1.0)
    assert outcome.parameters['alpha'] == pytest.approx(alpha)


def test_ghz_search_finds_the_optimum():
    for t in (0.8, 0.9):
        result = ghz_optimality_search(t, 2)
        alpha, beta, alpha_out, beta_out = optimal_ghz_parameters(t, 2)

        assert result.probability == pytest.approx(optimal_ghz_success_probability(t, 2), rel=1e-9)
        assert result.alpha == pytest.approx(alpha, abs=1e-6)
        assert result.beta_out == pytest.approx(beta_out, abs=1e-6)

    with pytest.raises(ZeroProbabilityError):
        ghz_optimality_search(0.0, 2)


def test_unbalanced_ghz_needs_both_arms():
    outcome = run_ghz_closed_form(ProtocolConfig('GHZ', 2, alpha=1.0, beta=0.0, t_override=1.0))

    assert outcome.success_probability == pytest.approx(1.0)
    assert outcome.fidelity == pytest.approx(0.5)


def test_ghz_ledger_with_reflection():
    outcome = run_ghz_closed_form(ProtocolConfig('GHZ', 2, t_override=0.9))

    assert outcome.ledger_total() == pytest.approx(1.0, abs=1e-12)
    assert outcome.branches['dd_reflected:A:0'] == pytest.approx(0.5 * 0.19)
    assert outcome.success_probability < 0.5


@pytest.mark.parametrize('n', [2, 3, 5, 8])
@pytest.mark.parametrize('t', [1.0, 0.9])
def test_w_closed_form(n, t):
    outcome = run_w_closed_form(ProtocolConfig('W', n, t_override=t))

    assert outcome.success_probability == pytest.approx(w_success_probability(t, n))
    assert outcome.success_probability == pytest.approx(t ** 2 / n)
    assert outcome.fidelity == pytest.approx(1.0)
    assert outcome.ledger_total() == pytest.approx(1.0)


def test_zero_and_excess_transmission():
    with pytest.raises(ZeroProbabilityError):
        run_ghz_closed_form(ProtocolConfig('GHZ', 2, t_override=0.0))
    with pytest.raises(ZeroProbabilityError):
        run_w_closed_form(ProtocolConfig('W', 3, t_override=0.0))
    with pytest.raises(ConfigError):
        run_ghz_closed_form(ProtocolConfig('GHZ', 2, t_override=1.2))
    assert ghz_success_probability(0, 3) == 0.0


@pytest.mark.parametrize('arguments', [
    {'kind': 'X'},
    {'kind': 'GHZ', 'n': 0},
    {'kind': 'W', 'n': 1},
    {'kind': 'GHZ', 'n': 2, 'dd': [(10.0, 10.0)]},
    {'kind': 'GHZ', 'n': 1, 'dd': [(0.0, 10.0)]},
    {'kind': 'W', 'n': 3, 'alpha': 0.6, 'beta': 0.8},
    {'kind': 'GHZ', 'n': 2, 'alpha': 0.6, 'beta': 0.7},
    {'kind': 'GHZ', 'n': 2, 't_override': 'abc'},
])
def test_invalid_protocol_configs(arguments):
    with pytest.raises(ConfigError):
        ProtocolConfig(**arguments)


def test_protocol_config_from_config(config):
    cfg = ProtocolConfig.from_config(config, n=3, t_override=[0.5, 0.5])

    assert cfg.kind == 'GHZ'
    assert cfg.n == 3
    assert cfg.dd == ((10.0, 10.0),) * 3
    assert cfg.t_override == complex(0.5, 0.5)
    assert cfg.alpha == pytest.approx(1 / math.sqrt(2))
    assert cfg.packet_alpha == pytest.approx(4 / 15)
    assert cfg.replace(engine='both').engine == 'both'
    assert cfg.replace(engine='both').t_override == cfg.t_override


def test_single_splitter_operation():
    operation = single_splitter_operation(0.6, 0.8, 0.6, 0.8, 0.9)

    assert np.allclose(operation @ [1, 0], [0.64, 0.36 * 0.9])
    assert np.allclose(operation @ [0, 1], [0, 0.64])


def test_run_protocol_engines():
    results = run_protocol(ProtocolConfig('W', 3, t_override=1.0))

    assert list(results) == ['closed-form']
    assert results['closed-form'].engine == 'closed-form'


def test_ghz_protocol_network():
    geometry = build_protocol_network(ProtocolConfig('GHZ', 2, t_override=1.0))
    net = geometry.net
    arm_a, arm_b = net.region('arm:A'), net.region('arm:B')

    assert len(net.dd_qubits) == 2
    assert all(q.d in arm_a and q.d_plus_1 in arm_a for q in net.dd_qubits)
    assert all(q.h == 10.0 and q.Jz == 10.0 for q in net.dd_qubits)
    assert len(arm_a) - len(arm_b) == 2
    assert set(geometry.output_sites) < set(net.region('out'))
    assert geometry.packet.support == tuple(net.region('lead')[:-1])
    assert geometry.measure_time > 0


def test_output_region_is_lead_past_node_buffer():
    cfg = ProtocolConfig('GHZ', 1, t_override=1.0)
    geometry = build_protocol_network(cfg)
    out = geometry.net.region('out')
    tail = packet_tail(cfg.packet_alpha, cfg.tail_eps)

    assert geometry.output_sites == tuple(out[BUFFER + 1:])
    assert len(geometry.output_sites) >= 2 * tail + 1
    assert len(geometry.output_sites) > len(out) // 4


def test_w_protocol_network_with_detector():
    geometry = build_protocol_network(ProtocolConfig('W', 3, detector=True))
    net = geometry.net
    detector = net.dd_qubits[-1]

    assert len(net.dd_qubits) == 4
    assert detector.d in net.region('out')
    assert min(geometry.output_sites) > detector.d_plus_1
    assert geometry.detector


def test_dynamics_refuses_large_registers():
    with pytest.raises(DynamicsRefusedError):
        run_protocol_full_dynamics(ProtocolConfig('GHZ', 4, t_override=1.0, engine='dynamics'))


def test_probability_curves():
    frame = probability_curves()
    top = frame[(frame['T [prob]'] == 1.0) & (frame['n'] == 2)]

    assert len(frame) == 28
    assert top['P_GHZ [prob]'].iloc[0] == pytest.approx(0.5)
    assert top['P_W [prob]'].iloc[0] == pytest.approx(0.5)
    assert all(claim.passed for claim in curve_claims(frame))

    ghz_only = probability_curves('GHZ', (1.0, 0.5), range(1, 4))
    assert 'P_W [prob]' not in ghz_only
    assert [claim.name for claim in curve_claims(ghz_only)] == ['P_GHZ nonincreasing in n']

    with pytest.raises(ConfigError):
        probability_curves('X')
    with pytest.raises(ConfigError):
        probability_curves('both', (0.0,))


def test_tampered_curves_fail_their_claims():
    frame = probability_curves()
    mask = (frame['T [prob]'] == 1.0) & (frame['n'] == 3)
    frame.loc[mask, 'P_W [prob]'] = 0.9

    failed = [claim.name for claim in curve_claims(frame) if not claim.passed]
    assert 'P_W decreasing in n' in failed


@pytest.mark.slow
def test_ghz_full_dynamics_single_dd():
    outcome = run_protocol_full_dynamics(ProtocolConfig('GHZ', 1, engine='dynamics'))

    assert outcome.ledger_total() == pytest.approx(1.0, abs=1e-8)
    assert outcome.success_probability == pytest.approx(0.5, abs=0.03)
    assert outcome.fidelity >= 0.97
    assert np.trace(outcome.density).real == pytest.approx(1.0)


@pytest.mark.slow
def test_w_full_dynamics_is_symmetric():
    outcome = run_protocol_full_dynamics(ProtocolConfig('W', 2, engine='dynamics'))

    assert outcome.ledger_total() == pytest.approx(1.0, abs=1e-8)
    assert outcome.success_probability == pytest.approx(0.5, abs=0.03)
    assert outcome.fidelity >= 0.97


@pytest.mark.slow
def test_ghz_engines_agree_for_two_qubits():
    results = run_protocol(ProtocolConfig('GHZ', 2, engine='both'))
    closed, dynamics = results['closed-form'], results['dynamics']

    assert dynamics.success_probability == pytest.approx(closed.success_probability, abs=0.05)
    assert dynamics.fidelity >= 0.95
    assert results['consistency']['delta_P'] <= 0.05

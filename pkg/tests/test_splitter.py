import math

import numpy as np
import pytest

from spinnet import InvalidTopologyError, SpinNetError, UnnormalizedSplitterError
from spinnet.dynamics import PacketSpec
from spinnet.hilbert import SectorBasis, assemble_hamiltonian
from spinnet.network import SplitterSpec, build_chain, build_splitter_network
from spinnet.splitter import (NodeScatteringMatrix, PortAmplitudes, compose_y_from_primitives, decompose_one_to_n,
                              one_to_n_node_matrix, run_identity_suite, verification_network,
                              verify_node_matrix_dynamically, y_node_matrix)


def test_y_node_matrix():
    y = y_node_matrix(0.6, 0.8)

    assert y.ports == ('lead', 'A', 'B')
    assert y.unitarity_error() < 1e-12
    response = y.response('lead')
    assert response['lead'] == 0
    assert response['A'] == pytest.approx(0.6)
    assert response['B'] == pytest.approx(0.8)
    assert y.response('A')['A'] == pytest.approx(0.64)
    assert y.response('A')['B'] == pytest.approx(-0.48)


def test_y_from_primitives():
    for alpha in (0.6, 1 / math.sqrt(2), 0.1):
        beta = math.sqrt(1 - alpha ** 2)
        composed = compose_y_from_primitives(alpha, beta)
        assert np.max(np.abs(composed.matrix - y_node_matrix(alpha, beta).matrix)) < 1e-12


def test_antisymmetric_arm_input_never_reaches_lead():
    y = y_node_matrix(0.6, 0.8)
    out = y.apply(PortAmplitudes({'A': 0.8, 'B': -0.6}))

    assert abs(out['lead']) < 1e-15
    assert out.total_probability() == pytest.approx(1.0)


def test_unnormalized_splitters():
    with pytest.raises(UnnormalizedSplitterError):
        y_node_matrix(0.6, 0.7)
    with pytest.raises(UnnormalizedSplitterError):
        NodeScatteringMatrix([[1, 0], [0, 2]], ('lead', 'A'))
    with pytest.raises(InvalidTopologyError):
        NodeScatteringMatrix(np.eye(3), ('lead', 'A'))


@pytest.mark.parametrize('n', [2, 3, 4, 5])
def test_one_to_n_node_matrix(n):
    matrix = one_to_n_node_matrix(n)
    arms = matrix.ports[1:]

    assert len(arms) == n
    assert matrix.unitarity_error() < 1e-12
    assert matrix.response('lead').probabilities() == pytest.approx({'lead': 0.0, **{p: 1 / n for p in arms}})

    symmetric = matrix.apply(PortAmplitudes({p: 1 / math.sqrt(n) for p in arms}))
    assert abs(symmetric['lead']) ** 2 == pytest.approx(1.0)


def test_one_to_two_is_balanced_y(balanced):
    difference = one_to_n_node_matrix(2).matrix - y_node_matrix(balanced, balanced).matrix

    assert np.max(np.abs(difference)) < 1e-15
    with pytest.raises(InvalidTopologyError):
        one_to_n_node_matrix(1)


@pytest.mark.parametrize('n', [2, 3, 4])
def test_star_decomposes_into_chains(n):
    decomposition = decompose_one_to_n(build_splitter_network(SplitterSpec('OneToN', 6, 5, n=n)))

    assert decomposition.block_sizes == [11] + [5] * (n - 1)
    assert decomposition.off_block_residue() < 1e-12
    assert decomposition.unitarity_error() < 1e-13
    assert decomposition.commutator_error() < 1e-12
    assert np.allclose(sum(decomposition.sub_hamiltonians()), decomposition.H, atol=1e-12)

    chains = decomposition.chains()
    long_chain = assemble_hamiltonian(build_chain(11, 1.0), SectorBasis(11, 1)).to_dense()
    short_chain = assemble_hamiltonian(build_chain(5, 1.0), SectorBasis(5, 1)).to_dense()
    assert np.allclose(chains[0], long_chain, atol=1e-12)
    for chain in chains[1:]:
        assert np.allclose(chain, short_chain, atol=1e-12)


def test_decomposition_needs_a_uniform_star():
    with pytest.raises(InvalidTopologyError):
        decompose_one_to_n(build_splitter_network(SplitterSpec('Y', 5, 5, alpha=0.6, beta=0.8)))
    with pytest.raises(InvalidTopologyError):
        decompose_one_to_n(build_splitter_network(SplitterSpec('OneToN', 5, (4, 5), n=2)))
    with pytest.raises(InvalidTopologyError):
        decompose_one_to_n(build_chain(5, 1.0))


def test_identity_suite_algebra():
    report = run_identity_suite(dynamical=False)
    identities = [row['identity'] for row in report.rows]

    assert report.passed
    assert report.failures == []
    for identity in ('unitarity:Y', 'composition:Y', 'destructive:Y', 'reduction:1x2', 'decomposition:1x5',
                     'commutators:1x4', 'blocks:1x3'):
        assert identity in identities
    assert report.max_deviation() < 1e-12
    assert report.to_text().endswith(f'{len(report.rows)}/{len(report.rows)} identities passed\n')


def test_identity_suite_reports_unnormalized_parameters():
    report = run_identity_suite(0.6, 0.7, ns=(2,), dynamical=False)

    assert not report.passed
    assert report.failures == ['normalization:Y']
    assert any(note.startswith('normalization:Y') for note in report.notes)
    assert len(report.to_frame()) == len(report.rows)


def test_identity_suite_dynamics():
    report = run_identity_suite(ns=(2, 3), dynamical=True)
    identities = {row['identity'] for row in report.rows}

    assert report.passed, report.to_text()
    assert 'dynamics:lead in' in identities
    assert 'phase:lead in' in identities


def test_dynamical_verification_needs_narrow_packets():
    matrix = one_to_n_node_matrix(3)
    net = verification_network(matrix)

    with pytest.raises(SpinNetError):
        verify_node_matrix_dynamically(net, matrix, PacketSpec(0.5, 0.0, support=(0,)))

import math

import numpy as np
import pytest
from scipy.special import comb

from spinnet import DimensionMismatchError, NormalizationError, SectorError
from spinnet.hilbert import (SectorBasis, SparseOperator, StateVector, assemble_hamiltonian, check_same_basis,
                             enumerate_sector, expectation, full_space_hamiltonian, sector_embedding)
from spinnet.network import build_chain, build_chain_with_dd


@pytest.mark.parametrize('n, k', [(7, 0), (7, 1), (7, 3), (9, 4), (5, 5)])
def test_sector_size_and_ranking(n, k):
    basis = SectorBasis(n, k)

    assert basis.size == comb(n, k, exact=True)
    for index, flips in enumerate(basis):
        assert basis.index_of(flips) == index


def test_colex_order():
    basis = SectorBasis(6, 3)

    assert basis[0] == (0, 1, 2)
    assert basis[1] == (0, 1, 3)
    assert basis[2] == (0, 2, 3)
    assert basis[basis.size - 1] == (3, 4, 5)


def test_enumerate_sector_of_a_network():
    basis = enumerate_sector(build_chain_with_dd(2, 2, 1.0, 10.0, 10.0), 2)

    assert basis.n_sites == 6
    assert basis.size == 15


def test_invalid_sectors():
    with pytest.raises(SectorError):
        SectorBasis(4, 5)
    with pytest.raises(SectorError):
        SectorBasis(4, 2).index_of((1, 1))
    with pytest.raises(SectorError):
        SectorBasis(4, 2).index_of((1, 4))


def test_single_flip_hopping():
    H = assemble_hamiltonian(build_chain(2, 1.0), SectorBasis(2, 1)).to_dense()

    assert np.allclose(H, [[0, -0.5], [-0.5, 0]])


def test_dd_diagonal_energies():
    """Configuration energies around a DD qubit with h = 3, Jz = 2."""

    net = build_chain_with_dd(1, 1, 1.0, 2.0, 3.0)
    basis = SectorBasis(4, 2)
    diagonal = assemble_hamiltonian(net, basis).diagonal().real

    # one flip on the DD qubit: antiparallel Ising pair, fields cancel
    assert diagonal[basis.index_of((0, 2))] == pytest.approx(2.0)
    # both DD sites flipped
    assert diagonal[basis.index_of((1, 2))] == pytest.approx(2 * 3.0 - 2.0)
    # DD qubit empty
    assert diagonal[basis.index_of((0, 3))] == pytest.approx(-2.0 - 2 * 3.0)


def test_three_level_spectrum():
    net = build_chain_with_dd(1, 1, 1.0, 10.0, 10.0)
    basis = SectorBasis(4, 2)
    H = assemble_hamiltonian(net, basis)
    block = H.restrict([basis.index_of(c) for c in ((0, 2), (1, 2), (1, 3))])

    eigenvalues = np.linalg.eigvalsh(block) - 10.0
    assert np.allclose(eigenvalues, [-1 / math.sqrt(2), 0, 1 / math.sqrt(2)], atol=1e-12, rtol=0)


@pytest.mark.parametrize('k', range(0, 8))
def test_sector_matches_full_space(k):
    net = build_chain_with_dd(3, 2, 0.7, 2.5, 1.5).replace(fields={0: 0.3, 3: 1.5, 4: 1.5})
    full = full_space_hamiltonian(net).matrix
    basis = SectorBasis(net.n_sites, k)
    H = assemble_hamiltonian(net, basis)

    embedding = sector_embedding(basis)
    assert np.max(np.abs(full[embedding][:, embedding].toarray() - H.to_dense())) < 1e-12


def test_sector_is_closed():
    """The full-space Hamiltonian never couples different flip numbers."""

    net = build_chain_with_dd(2, 2, 1.0, 4.0, 4.0)
    full = full_space_hamiltonian(net).matrix.toarray()
    flips = np.array([net.n_sites - bin(i).count('1') for i in range(2 ** net.n_sites)])

    rows, cols = np.nonzero(np.abs(full) > 0)
    assert np.all(flips[rows] == flips[cols])


def test_hermitian_and_expectation():
    net = build_chain_with_dd(5, 5, 1.0, 10.0, 10.0)
    basis = SectorBasis(net.n_sites, 2)
    H = assemble_hamiltonian(net, basis)

    assert H.hermiticity_error() == 0.0
    index = basis.index_of((0, 6))
    amplitudes = np.zeros(basis.size)
    amplitudes[index] = 1
    assert expectation(H, StateVector(basis, amplitudes)) == pytest.approx(H.diagonal()[index].real)

    lower, upper = H.gershgorin_bounds()
    eigenvalues = np.linalg.eigvalsh(H.to_dense())
    assert lower <= eigenvalues[0] and eigenvalues[-1] <= upper


def test_state_vector_checks():
    basis = SectorBasis(5, 1)

    with pytest.raises(NormalizationError):
        StateVector(basis, np.ones(5))
    with pytest.raises(DimensionMismatchError):
        StateVector(basis, np.ones(4) / 2)

    part = StateVector(basis, np.ones(5), unnormalized=True)
    assert part.norm() == pytest.approx(math.sqrt(5))

    v = StateVector(basis, np.ones(5) / math.sqrt(5))
    assert v.fidelity(v) == pytest.approx(1.0)
    with pytest.raises(DimensionMismatchError):
        v.overlap(StateVector(SectorBasis(5, 2), np.eye(10)[0]))


def test_dense_and_full_space_limits():
    with pytest.raises(SectorError):
        SparseOperator.identity(SectorBasis(100, 2)).to_dense()
    with pytest.raises(SectorError):
        full_space_hamiltonian(build_chain(13, 1.0))
    with pytest.raises(SectorError):
        assemble_hamiltonian(build_chain(5, 1.0), SectorBasis(6, 1))


def test_check_same_basis():
    check_same_basis(SectorBasis(5, 2), SectorBasis(5, 2))
    with pytest.raises(DimensionMismatchError):
        check_same_basis(SectorBasis(5, 2), SectorBasis(6, 2))

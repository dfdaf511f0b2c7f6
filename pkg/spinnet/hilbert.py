"""Fixed flip-number sectors and the network Hamiltonian restricted to them.

Sign conventions: a flipped site (spin up on the all-down background) has s=+1,
an unflipped site s=-1. The hopping element between configurations that differ
by one flip moving across bond (i, j) is -J_perp/2. The diagonal is
sum over bonds of -Jz s_i s_j plus sum over sites of h_i s_i, constant offsets
included.
"""
import logging
from itertools import chain, combinations

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix, csr_matrix, diags, identity, kron

from spinnet import DimensionMismatchError, NormalizationError, SectorError

DENSE_LIMIT = 4096
FULL_SPACE_LIMIT = 12
HERMITICITY_TOLERANCE = 1e-14
NORM_TOLERANCE = 1e-10


class SectorBasis(object):
    """All configurations with exactly k flipped sites out of n_sites.

    States are sorted k-subsets in colexicographic order: subsets compare by their
    largest element first. The index of a subset c_0 < c_1 < ... < c_{k-1} is then
    sum_i C(c_i, i+1), so index_of needs no lookup table.
    """

    def __init__(self, n_sites, k):
        if not 0 <= k <= n_sites:
            raise SectorError(f'Flip count k={k} out of range 0..{n_sites}')

        self.n_sites = int(n_sites)
        self.k = int(k)
        self._binomial = _binomial_table(self.n_sites, self.k)
        self.size = int(self._binomial[self.n_sites, self.k])
        self.states = self._enumerate()

    def _enumerate(self):
        combos = np.fromiter(chain.from_iterable(combinations(range(self.n_sites), self.k)),
                             dtype=np.int64, count=self.size * self.k).reshape(self.size, self.k)
        states = np.empty_like(combos)
        states[self.rank(combos)] = combos
        return states

    def rank(self, configurations):
        """Colex index of each row of a (m, k) array of sorted flip sets."""

        configurations = np.asarray(configurations, dtype=np.int64).reshape(-1, self.k)
        if self.k == 0:
            return np.zeros(len(configurations), dtype=np.int64)
        return self._binomial[configurations, np.arange(1, self.k + 1)].sum(axis=1)

    def index_of(self, flips):
        flips = tuple(sorted(int(s) for s in flips))
        if len(flips) != self.k or len(set(flips)) != self.k:
            raise SectorError(f'{flips} is not a set of {self.k} flips')
        if flips and not (0 <= flips[0] and flips[-1] < self.n_sites):
            raise SectorError(f'{flips} references sites outside 0..{self.n_sites - 1}')
        return int(self.rank(np.array([flips]))[0])

    def occupation(self, site):
        """Boolean mask of the states where `site` is flipped."""

        return np.any(self.states == site, axis=1)

    def __len__(self):
        return self.size

    def __getitem__(self, index):
        return tuple(int(s) for s in self.states[index])

    def __iter__(self):
        for row in self.states:
            yield tuple(int(s) for s in row)

    def __repr__(self):
        return f'SectorBasis(n_sites={self.n_sites}, k={self.k}, size={self.size})'


def _binomial_table(n, k):
    table = np.zeros((n + 1, k + 2), dtype=np.int64)
    table[:, 0] = 1
    for m in range(1, n + 1):
        table[m, 1:] = table[m - 1, 1:] + table[m - 1, :-1]
    return table


def enumerate_sector(net, k):
    return SectorBasis(net.n_sites, k)


class SparseOperator(object):
    """Hermitian operator stored row-compressed, acting on a SectorBasis."""

    def __init__(self, matrix, basis=None):
        matrix = csr_matrix(matrix, dtype=np.complex128)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f'Operator must be square, got {matrix.shape}')
        if basis is not None and matrix.shape[0] != basis.size:
            raise DimensionMismatchError(f'Operator dimension {matrix.shape[0]} != basis size {basis.size}')
        matrix.sort_indices()
        self.matrix = matrix
        self.basis = basis

    @classmethod
    def identity(cls, basis):
        return cls(identity(basis.size, dtype=np.complex128, format='csr'), basis)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def dot(self, amplitudes):
        return self.matrix @ amplitudes

    def diagonal(self):
        return self.matrix.diagonal()

    def max_abs(self):
        return float(np.max(np.abs(self.matrix.data))) if self.matrix.nnz else 0.0

    def hermiticity_error(self):
        difference = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(difference.data))) if difference.nnz else 0.0

    def gershgorin_bounds(self):
        """Lower and upper spectral bounds from Gershgorin discs."""

        center = self.diagonal().real
        radius = np.asarray(abs(self.matrix).sum(axis=1)).ravel() - np.abs(self.diagonal())
        return float(np.min(center - radius)), float(np.max(center + radius))

    def to_dense(self):
        if self.dim > DENSE_LIMIT:
            raise SectorError(f'Dense fallback is limited to dimension {DENSE_LIMIT}, got {self.dim}')
        return self.matrix.toarray()

    def restrict(self, indices):
        """Dense block of the operator on the given basis indices."""

        indices = np.asarray(indices)
        return self.matrix[indices][:, indices].toarray()

    def eigh(self):
        return scipy.linalg.eigh(self.to_dense())

    def __repr__(self):
        return f'SparseOperator(dim={self.dim}, nnz={self.matrix.nnz})'


class StateVector(object):
    """Complex amplitudes over a SectorBasis.

    The norm is 1 within NORM_TOLERANCE unless the vector is tagged unnormalized
    (a component of a larger state). Non-fatal issues found while building the
    state are kept in `warnings`.
    """

    def __init__(self, basis, amplitudes, unnormalized=False, warnings=()):
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape != (basis.size,):
            raise DimensionMismatchError(f'{amplitudes.shape[0]} amplitudes for a basis of size {basis.size}')

        self.basis = basis
        self.amplitudes = amplitudes
        self.unnormalized = unnormalized
        self.warnings = tuple(warnings)

        if not unnormalized and abs(self.norm() - 1) > NORM_TOLERANCE:
            raise NormalizationError(f'State norm {self.norm():.15f} differs from 1')

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other):
        check_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other):
        return abs(self.overlap(other)) ** 2

    def __repr__(self):
        return f'StateVector(size={self.basis.size}, norm={self.norm():.12f})'


def check_same_basis(a, b):
    if a is not b and (a.n_sites != b.n_sites or a.k != b.k):
        raise DimensionMismatchError(f'{a} and {b} are different bases')


def assemble_hamiltonian(net, basis):
    """Network Hamiltonian restricted to the sector of `basis`."""

    if basis.n_sites != net.n_sites:
        raise SectorError(f'Basis built for {basis.n_sites} sites, network has {net.n_sites}')

    states = basis.states
    rows, cols, values = [], [], []

    occupied = {}

    def occupation(site):
        if site not in occupied:
            occupied[site] = basis.occupation(site)
        return occupied[site]

    # diagonal: h_i s_i = -h_i for every site, +2 h_i for flipped ones
    h = np.zeros(net.n_sites)
    for site, value in net.fields.items():
        h[site] = value
    diagonal = np.full(basis.size, -h.sum())
    if basis.k > 0:
        diagonal += 2 * h[states].sum(axis=1)

    for b in net.ising_bonds:
        antiparallel = occupation(b.i) ^ occupation(b.j)
        diagonal += -b.Jz * np.where(antiparallel, -1.0, 1.0)

    rows.append(np.arange(basis.size))
    cols.append(np.arange(basis.size))
    values.append(diagonal.astype(np.complex128))

    if basis.k > 0:
        for b in net.transport_bonds:
            for src, dst in ((b.i, b.j), (b.j, b.i)):
                movable = occupation(src) & ~occupation(dst)
                if not movable.any():
                    continue
                moved = states[movable].copy()
                moved[moved == src] = dst
                moved.sort(axis=1)
                rows.append(np.flatnonzero(movable))
                cols.append(basis.rank(moved))
                values.append(np.full(len(moved), -b.J_perp / 2, dtype=np.complex128))

        # memory for the larger sectors
        occupied.clear()

    matrix = coo_matrix((np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(basis.size, basis.size)).tocsr()
    operator = SparseOperator(matrix, basis)

    error = operator.hermiticity_error()
    if error > HERMITICITY_TOLERANCE:
        raise SectorError(f'Assembled Hamiltonian is not Hermitian (max deviation {error})')
    logging.debug(f'Assembled {operator} for {net}')

    return operator


def expectation(op, v):
    """Real expectation value <v|op|v> of a Hermitian operator."""

    if op.dim != v.basis.size:
        raise DimensionMismatchError(f'Operator dimension {op.dim} != state dimension {v.basis.size}')

    value = complex(np.vdot(v.amplitudes, op.dot(v.amplitudes)))
    scale = max(1.0, op.max_abs())
    if abs(value.imag) > 1e-12 * scale:
        logging.warning(f'Expectation value has imaginary residue {value.imag:.3e}')

    return value.real


_SIGMA_PLUS = csr_matrix(np.array([[0, 1], [0, 0]], dtype=np.complex128))
_SIGMA_MINUS = csr_matrix(np.array([[0, 0], [1, 0]], dtype=np.complex128))
_SIGMA_Z = csr_matrix(np.array([[1, 0], [0, -1]], dtype=np.complex128))


def _site_operator(op, site, n_sites):
    result = identity(1, dtype=np.complex128, format='csr')
    for s in range(n_sites):
        factor = op if s == site else identity(2, dtype=np.complex128, format='csr')
        result = kron(result, factor, format='csr')
    return result


def full_space_hamiltonian(net):
    """Network Hamiltonian on the full 2^n space built from Kronecker products.

    Local basis per site: index 0 = flipped (up), index 1 = unflipped (down). Site 0 is
    the most significant tensor factor. Limited to FULL_SPACE_LIMIT sites.
    """

    n = net.n_sites
    if n > FULL_SPACE_LIMIT:
        raise SectorError(f'Full-space Hamiltonian is limited to {FULL_SPACE_LIMIT} sites, got {n}')

    dim = 2 ** n
    H = csr_matrix((dim, dim), dtype=np.complex128)
    plus = [_site_operator(_SIGMA_PLUS, s, n) for s in range(n)]
    minus = [_site_operator(_SIGMA_MINUS, s, n) for s in range(n)]
    z = [_site_operator(_SIGMA_Z, s, n) for s in range(n)]

    for b in net.bonds:
        if b.J_perp != 0:
            H = H - (b.J_perp / 2) * (plus[b.i] @ minus[b.j] + minus[b.i] @ plus[b.j])
        if b.Jz != 0:
            H = H - b.Jz * (z[b.i] @ z[b.j])
    for site, h in net.fields.items():
        H = H + h * z[site]

    return SparseOperator(H)


def sector_embedding(basis):
    """Full-space index of every sector state (see full_space_hamiltonian)."""

    n = basis.n_sites
    weights = 2 ** (n - 1 - np.arange(n, dtype=np.int64))
    flipped = weights[basis.states].sum(axis=1) if basis.k > 0 else np.zeros(basis.size, dtype=np.int64)
    return (2 ** n - 1) - flipped


def diagonal_operator(basis, values):
    return SparseOperator(diags(np.asarray(values, dtype=np.complex128), format='csr'), basis)

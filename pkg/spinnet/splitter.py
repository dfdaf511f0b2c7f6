"""Beam-splitter node algebra.

A node scattering matrix M[out, in] maps the amplitudes of packets arriving at a
node through each port (the lead, then the arms in label order) to the amplitudes
leaving through each port. Matrices act on packet envelopes; propagation phases
along the arms are left to the caller.
"""
import logging
import math

import numpy as np
import pandas as pd

from spinnet import InvalidTopologyError, NotSeparatedError, SpinNetError, UnnormalizedSplitterError
from spinnet.dynamics import PacketSpec, Propagator, group_velocity, make_packet, packet_tail
from spinnet.hilbert import SectorBasis, assemble_hamiltonian
from spinnet.network import SplitterSpec, build_chain, build_splitter_network, check_normalized

UNITARITY_TOLERANCE = 1e-12
BASIS_TOLERANCE = 1e-13
DYNAMICAL_TOLERANCE = 0.02
REFLECTION_TOLERANCE = 0.01
PHASE_TOLERANCE = 0.02
SEPARATION_TOLERANCE = 1e-3
TAIL_EPS = 1e-8
BUFFER = 3

REPORT_COLUMNS = ['identity', 'ports', 'expected', 'observed', 'deviation', 'tolerance', 'passed']


class PortAmplitudes(object):
    """Complex amplitude per port label."""

    def __init__(self, amplitudes):
        self.amplitudes = {str(port): complex(a) for port, a in amplitudes.items()}

    @property
    def ports(self):
        return tuple(self.amplitudes)

    def __getitem__(self, port):
        return self.amplitudes[port]

    def probabilities(self):
        return {port: abs(a) ** 2 for port, a in self.amplitudes.items()}

    def total_probability(self):
        return sum(self.probabilities().values())

    def __repr__(self):
        return f'PortAmplitudes({self.amplitudes})'


class NodeScatteringMatrix(object):
    """M[out, in] over `ports` ('lead' first). Raises UnnormalizedSplitterError when
    M is not unitary within UNITARITY_TOLERANCE."""

    def __init__(self, matrix, ports):
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.shape != (len(ports), len(ports)):
            raise InvalidTopologyError(f'Node matrix of shape {matrix.shape} for ports {ports}')
        self.matrix = matrix
        self.ports = tuple(ports)

        error = self.unitarity_error()
        if error > UNITARITY_TOLERANCE:
            raise UnnormalizedSplitterError(f'Node matrix is not unitary (deviation {error:.2e})')

    def unitarity_error(self):
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(len(self.ports)))))

    def index(self, port):
        return self.ports.index(port)

    def apply(self, incoming):
        """Outgoing PortAmplitudes for incoming PortAmplitudes (missing ports are empty)."""

        vector = np.array([incoming.amplitudes.get(port, 0) for port in self.ports], dtype=np.complex128)
        return PortAmplitudes(dict(zip(self.ports, self.matrix @ vector)))

    def response(self, port):
        """Outgoing amplitudes for a unit packet arriving through `port`."""

        return PortAmplitudes(dict(zip(self.ports, self.matrix[:, self.index(port)])))

    def __repr__(self):
        return f'NodeScatteringMatrix(ports={self.ports})'


def y_node_matrix(alpha, beta, arm_labels=('A', 'B')):
    """Y node with couplings alpha (arm A) and beta (arm B).

    lead in  -> alpha A + beta B
    A in     -> alpha lead + beta^2 A - alpha beta B
    B in     -> beta lead - alpha beta A + alpha^2 B
    """

    check_normalized(alpha, beta)
    matrix = [
        [0, alpha, beta],
        [alpha, beta ** 2, -alpha * beta],
        [beta, -alpha * beta, alpha ** 2],
    ]
    return NodeScatteringMatrix(matrix, ('lead',) + tuple(arm_labels))


def one_to_n_node_matrix(n, arm_labels=None):
    """1xn node with all couplings 1/sqrt(n).

    lead in -> (1/sqrt(n)) sum_j arm_j
    arm_l in -> (1/sqrt(n)) lead + arm_l - (1/n) sum_j arm_j
    """

    if n < 2:
        raise InvalidTopologyError(f'1xn splitter needs n >= 2, got {n}')
    if arm_labels is None:
        arm_labels = SplitterSpec('OneToN', 1, 1, n=n).arm_labels

    matrix = np.zeros((n + 1, n + 1))
    matrix[0, 1:] = matrix[1:, 0] = 1 / math.sqrt(n)
    matrix[1:, 1:] = np.eye(n) - 1 / n
    return NodeScatteringMatrix(matrix, ('lead',) + tuple(arm_labels))


def compose_y_from_primitives(alpha, beta):
    """Assemble the Y node matrix from its two defining maps.

    The lead packet goes to alpha A + beta B and, reversed, alpha A + beta B goes to
    the lead. The orthogonal arm combination beta A - alpha B does not reach the
    lead and comes back unchanged. Arm inputs follow by linearity.
    """

    check_normalized(alpha, beta)
    lead = np.array([1, 0, 0])
    symmetric = np.array([0, alpha, beta])
    antisymmetric = np.array([0, beta, -alpha])

    inputs = np.column_stack([lead, symmetric, antisymmetric])
    outputs = np.column_stack([symmetric, lead, antisymmetric])
    return NodeScatteringMatrix(outputs @ np.linalg.inv(inputs), ('lead', 'A', 'B'))


class ChainDecomposition(object):
    """Independent chains of a 1xn splitter.

    unitary: columns are the new single-flip modes, lead sites first, then the
    symmetric arm modes, then the n-1 Fourier arm modes (mode by mode).
    blocks: (first column, size) of every independent chain.
    """

    def __init__(self, unitary, transformed, blocks, H):
        self.unitary = unitary
        self.transformed = transformed
        self.blocks = blocks
        self.H = H

    @property
    def block_sizes(self):
        return [size for _, size in self.blocks]

    def chains(self):
        return [self.transformed[s:s + size, s:s + size] for s, size in self.blocks]

    def off_block_residue(self):
        mask = np.ones(self.transformed.shape, dtype=bool)
        for s, size in self.blocks:
            mask[s:s + size, s:s + size] = False
        return float(np.max(np.abs(self.transformed[mask]))) if mask.any() else 0.0

    def unitarity_error(self):
        return float(np.max(np.abs(self.unitary.conj().T @ self.unitary - np.eye(len(self.unitary)))))

    def sub_hamiltonians(self):
        """Every chain Hamiltonian mapped back to site space."""

        result = []
        for s, size in self.blocks:
            U = self.unitary[:, s:s + size]
            result.append(U @ self.transformed[s:s + size, s:s + size] @ U.conj().T)
        return result

    def commutator_error(self):
        parts = self.sub_hamiltonians()
        error = 0.0
        for a in range(len(parts)):
            for b in range(a + 1, len(parts)):
                error = max(error, float(np.max(np.abs(parts[a] @ parts[b] - parts[b] @ parts[a]))))
        return error


def decompose_one_to_n(net):
    """Split the single-flip Hamiltonian of a 1xn star splitter into n chains: one of
    lead + arm length and n-1 of arm length."""

    layout = net.layout
    if layout.get('kind') != 'splitter' or layout.get('splitter') != 'OneToN' or layout.get('output_length'):
        raise InvalidTopologyError('decompose_one_to_n needs a 1xn star splitter network')
    if len(set(layout['arm_lengths'])) != 1:
        raise InvalidTopologyError(f'Arm lengths must be uniform, got {layout["arm_lengths"]}')

    n = layout['n']
    lead = list(net.region('lead'))
    arms = [list(net.region(f'arm:{label}')) for label in layout['arm_labels']]
    lb = len(arms[0])

    unitary = np.zeros((net.n_sites, net.n_sites), dtype=np.complex128)
    column = 0
    for site in lead:
        unitary[site, column] = 1
        column += 1
    for i in range(lb):
        for arm in arms:
            unitary[arm[i], column] = 1 / math.sqrt(n)
        column += 1
    for m in range(1, n):
        for i in range(lb):
            for j, arm in enumerate(arms):
                unitary[arm[i], column] = np.exp(-2j * math.pi * m * j / n) / math.sqrt(n)
            column += 1

    H = assemble_hamiltonian(net, SectorBasis(net.n_sites, 1)).to_dense()
    transformed = unitary.conj().T @ H @ unitary

    blocks = [(0, len(lead) + lb)] + [(len(lead) + lb * m, lb) for m in range(1, n)]
    return ChainDecomposition(unitary, transformed, blocks, H)


def verification_network(matrix, J_perp=1.0, alpha=4 / 15):
    """Star splitter whose ports are long enough for dynamical verification of
    `matrix` with packets of inverse width alpha."""

    tail = packet_tail(alpha, TAIL_EPS)
    length = 2 * tail + BUFFER + 4
    arms = matrix.ports[1:]
    if len(arms) == 2 and not np.allclose(matrix.matrix, one_to_n_node_matrix(2, arms).matrix):
        spec = SplitterSpec('Y', length + 1, length, alpha=matrix.matrix[1, 0].real,
                            beta=matrix.matrix[2, 0].real, arm_labels=arms, J_perp=J_perp)
    else:
        spec = SplitterSpec('OneToN', length + 1, length, n=len(arms), arm_labels=arms, J_perp=J_perp)
    return build_splitter_network(spec)


def _port_paths(net):
    """Sites of every port ordered away from the node (the node itself excluded)."""

    paths = {'lead': list(reversed(net.region('lead')[:-1]))}
    for label in net.layout['arm_labels']:
        paths[label] = list(net.region(f'arm:{label}'))
    return paths


def verify_node_matrix_dynamically(net, matrix, packet, in_ports=None, propagator=None):
    """Launch a packet through each input port of the star splitter `net` and compare
    the outgoing per-port probabilities and relative arm phases with `matrix`.

    packet: supplies alpha and momentum; the packet is placed on the input port.
    return: VerificationReport
    """

    if packet.alpha > 0.3:
        raise SpinNetError(f'Dynamical verification needs a narrow-band packet (alpha <= 0.3), got {packet.alpha}')

    node = net.region('node:in')[0]
    paths = _port_paths(net)
    J = net.layout['J_perp']
    tail = packet_tail(packet.alpha, TAIL_EPS)
    start = tail + 1
    hops = start + tail + BUFFER + 2
    t_final = hops / group_velocity(packet.alpha, J)

    near = [node]
    for path in paths.values():
        near += path[:BUFFER]

    basis = SectorBasis(net.n_sites, 1)
    prop = Propagator(assemble_hamiltonian(net, basis), **dict(propagator or {}))

    report = VerificationReport()
    for in_port in in_ports or matrix.ports:
        support = list(reversed(paths[in_port]))
        m = len(support)
        spec = packet.replace(center=m - start, support=support)
        final = prop.evolve(make_packet(basis, spec, net=net), t_final)
        probabilities = final.probabilities()

        residual = float(probabilities[near].sum())
        if residual > SEPARATION_TOLERANCE:
            raise NotSeparatedError(f'{residual:.2e} of the weight is still at the node', 1.25 * t_final)

        # reference: the same packet on a straight chain through the node
        length = max(len(p) for p in paths.values())
        free = build_chain(m + 1 + length, J)
        free_basis = SectorBasis(free.n_sites, 1)
        reference = Propagator(assemble_hamiltonian(free, free_basis), **dict(propagator or {})).evolve(
            make_packet(free_basis, spec.replace(support=range(m))), t_final).amplitudes[m + 1:]

        expected = matrix.response(in_port)
        amplitudes = {}
        for port, path in paths.items():
            observed = float(probabilities[path].sum())
            target = abs(expected[port]) ** 2
            tolerance = REFLECTION_TOLERANCE if port == in_port and target == 0 else DYNAMICAL_TOLERANCE
            report.add(f'dynamics:{in_port} in', port, target, observed, tolerance)
            ref = reference[:len(path)]
            amplitudes[port] = np.vdot(ref, final.amplitudes[path]) / np.vdot(ref, ref)

        arms = [p for p in matrix.ports[1:] if abs(expected[p]) > 0.1]
        for port in arms[1:]:
            target = np.angle(expected[port] / expected[arms[0]])
            observed = np.angle(amplitudes[port] / amplitudes[arms[0]])
            deviation = abs(np.angle(np.exp(1j * (observed - target))))
            report.add(f'phase:{in_port} in', f'{port}/{arms[0]}', target, observed, PHASE_TOLERANCE,
                       deviation=deviation)
        if abs(expected['lead']) > 0.1 and arms:
            # lead phase is recorded only
            lead_phase = float(np.angle(amplitudes['lead'] / amplitudes[arms[0]]))
            report.notes.append(f'{in_port} in: lead/{arms[0]} phase {lead_phase:.4f} rad')

    return report


class VerificationReport(object):
    """Named identity checks with their deviations."""

    def __init__(self):
        self.rows = []
        self.notes = []

    def add(self, identity, ports, expected, observed, tolerance, deviation=None, passed=None):
        if deviation is None:
            deviation = abs(observed - expected) if np.isfinite(observed) else math.inf
        if passed is None:
            passed = bool(deviation <= tolerance)
        self.rows.append({'identity': identity, 'ports': ports, 'expected': float(expected),
                          'observed': float(observed), 'deviation': float(deviation),
                          'tolerance': float(tolerance), 'passed': bool(passed)})

    def fail(self, identity, message):
        self.rows.append({'identity': identity, 'ports': '', 'expected': math.nan, 'observed': math.nan,
                          'deviation': math.inf, 'tolerance': 0.0, 'passed': False})
        self.notes.append(f'{identity}: {message}')

    def extend(self, other):
        self.rows += other.rows
        self.notes += other.notes

    @property
    def passed(self):
        return all(row['passed'] for row in self.rows)

    @property
    def failures(self):
        return [row['identity'] for row in self.rows if not row['passed']]

    def max_deviation(self):
        deviations = [row['deviation'] for row in self.rows]
        return max(deviations) if deviations else 0.0

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def to_text(self):
        lines = [self.to_frame().to_string(index=False)]
        lines += self.notes
        lines.append(f'{len(self.rows) - len(self.failures)}/{len(self.rows)} identities passed')
        return '\n'.join(lines) + '\n'


def _algebraic_checks(report, matrix, name):
    report.add(f'unitarity:{name}', 'all', 0.0, matrix.unitarity_error(), UNITARITY_TOLERANCE)


def run_identity_suite(alpha=0.6, beta=0.8, ns=(2, 3, 4, 5), packet_alpha=4 / 15, dynamical=True,
                       propagator=None):
    """Check the node matrix identities and, when dynamical, compare them with
    single-flip dynamics.

    An unnormalized (alpha, beta) shows up as a failed 'normalization:Y' row.
    """

    report = VerificationReport()

    try:
        y = y_node_matrix(alpha, beta)
    except UnnormalizedSplitterError as e:
        logging.error(e.message)
        report.fail('normalization:Y', e.message)
        y = None

    if y is not None:
        _algebraic_checks(report, y, 'Y')
        composed = compose_y_from_primitives(alpha, beta)
        report.add('composition:Y', 'all', 0.0, float(np.max(np.abs(composed.matrix - y.matrix))),
                   UNITARITY_TOLERANCE)
        destructive = y.apply(PortAmplitudes({'A': beta, 'B': -alpha}))
        report.add('destructive:Y', 'lead', 0.0, abs(destructive['lead']), UNITARITY_TOLERANCE)

    for n in ns:
        name = f'1x{n}'
        try:
            matrix = one_to_n_node_matrix(n)
        except SpinNetError as e:
            report.fail(f'unitarity:{name}', e.message)
            continue
        _algebraic_checks(report, matrix, name)

        if n == 2:
            balanced = y_node_matrix(1 / math.sqrt(2), 1 / math.sqrt(2))
            report.add('reduction:1x2', 'all', 0.0, float(np.max(np.abs(matrix.matrix - balanced.matrix))),
                       UNITARITY_TOLERANCE)

        symmetric = matrix.apply(PortAmplitudes({p: 1 / math.sqrt(n) for p in matrix.ports[1:]}))
        report.add(f'symmetric:{name}', 'lead', 1.0, abs(symmetric['lead']) ** 2, UNITARITY_TOLERANCE)

        star = build_splitter_network(SplitterSpec('OneToN', 6, 5, n=n))
        decomposition = decompose_one_to_n(star)
        report.add(f'decomposition:{name}', 'off-block', 0.0, decomposition.off_block_residue(),
                   UNITARITY_TOLERANCE)
        report.add(f'basis:{name}', 'U^dagger U', 0.0, decomposition.unitarity_error(), BASIS_TOLERANCE)
        report.add(f'commutators:{name}', 'chains', 0.0, decomposition.commutator_error(), UNITARITY_TOLERANCE)
        expected_sizes = [6 + 5] + [5] * (n - 1)
        report.add(f'blocks:{name}', 'sizes', 0.0, float(decomposition.block_sizes != expected_sizes), 0.0)

    if dynamical:
        packet = PacketSpec(packet_alpha, 0.0, math.pi / 2, (0,))
        matrices = [] if y is None else [(y, None)]
        matrices += [(one_to_n_node_matrix(n), ('lead',)) for n in ns if n >= 2]
        for matrix, in_ports in matrices:
            net = verification_network(matrix, alpha=packet_alpha)
            try:
                report.extend(verify_node_matrix_dynamically(net, matrix, packet, in_ports, propagator))
            except SpinNetError as e:
                logging.error(f'Dynamical verification failed: {e.message}')
                report.fail(f'dynamics:{matrix.ports}', e.message)

    logging.info(f'Identity suite: {len(report.rows) - len(report.failures)}/{len(report.rows)} passed')
    return report

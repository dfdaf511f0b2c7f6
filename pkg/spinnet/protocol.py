"""GHZ and W state generation with a flying qubit and DD-qubit registers.

Both protocols send one packet through two connected splitters. Arm DD qubits
start in |0> and switch to |1> when the packet passes them. Detecting the packet
in the output lead post-selects the register state.

Two engines compute the outcome: a closed form that composes node matrices with
per-DD transmission amplitudes, and full dynamics in the sector with one mobile
flip plus one flip per DD qubit.
"""
import logging
import math
from collections import namedtuple

import numpy as np
import pandas as pd
import scipy.optimize
from scipy.special import comb

from spinnet import (ConfigError, DynamicsRefusedError, InvalidDensityError, SpinNetError,
                     UnnormalizedSplitterError, ZeroProbabilityError)
from spinnet.dynamics import (PacketSpec, Propagator, RegionProjector, classify_configurations,
                              forward_momentum, group_velocity, make_packet, packet_tail, region_probability)
from spinnet.hilbert import SectorBasis, assemble_hamiltonian
from spinnet.network import DDPlacement, SplitterSpec, build_splitter_network, check_normalized
from spinnet.scattering import ScatteringSetup, scatter_off_dd
from spinnet.splitter import one_to_n_node_matrix, y_node_matrix

DENSITY_TOLERANCE = 1e-12
PURITY_TOLERANCE = 1e-10
LEDGER_TOLERANCE = 1e-6
EDGE_EPS = 1e-8
BUFFER = 3
MAX_DYNAMICS_N = 3
# Largest sector the dynamics engine accepts
MAX_SECTOR_SIZE = 5 * 10 ** 6

T_CONVENTION = ('t phase measured against a free-chain packet advanced by one site, '
                'corrected by the dressed DD energy; r = sqrt(1 - |t|^2)')

CURVE_COLUMNS = {'T': 'T [prob]', 'n': 'n', 'GHZ': 'P_GHZ [prob]', 'W': 'P_W [prob]', 'gap': 'gap [prob]'}

_SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_SPIN_FLIP = np.kron(_SIGMA_Y, _SIGMA_Y)


class TwoQubitDensity(object):
    """4x4 density matrix, validated on construction."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.shape != (4, 4):
            raise InvalidDensityError(f'Two-qubit density must be 4x4, got {matrix.shape}')
        if np.max(np.abs(matrix - matrix.conj().T)) > DENSITY_TOLERANCE:
            raise InvalidDensityError('Density matrix is not Hermitian')
        if abs(np.trace(matrix).real - 1) > DENSITY_TOLERANCE:
            raise InvalidDensityError(f'Density matrix trace is {np.trace(matrix).real}')
        if np.min(np.linalg.eigvalsh(matrix)) < -DENSITY_TOLERANCE:
            raise InvalidDensityError('Density matrix has negative eigenvalues')
        self.matrix = matrix

    def purity(self):
        return float(np.trace(self.matrix @ self.matrix).real)


def concurrence(rho):
    """Two-qubit concurrence from the spin-flipped density rho (sy x sy) rho* (sy x sy).

    Pure states use sqrt(tr R) directly, mixed states the decreasing square roots of
    the eigenvalues of R.
    """

    if not isinstance(rho, TwoQubitDensity):
        rho = TwoQubitDensity(rho)
    p = rho.matrix
    R = p @ _SPIN_FLIP @ p.conj() @ _SPIN_FLIP

    if abs(rho.purity() - 1) <= PURITY_TOLERANCE:
        return float(min(1.0, math.sqrt(max(np.trace(R).real, 0.0))))

    L = np.sqrt(np.sort(np.abs(np.linalg.eigvals(R).real))[::-1])
    return float(min(1.0, max(0.0, L[0] - L[1] - L[2] - L[3])))


def flying_qubit_density(alpha, beta):
    """DD qubit and flying qubit after a flying qubit alpha|packet> + beta|vacuum>
    passes a resonant DD qubit in |0>.

    Basis order: (DD 1, vacuum), (DD 1, packet), (DD 0, vacuum), (DD 0, packet).
    """

    check_normalized(alpha, beta)
    rho = np.zeros((4, 4))
    rho[1, 1] = alpha ** 2
    rho[1, 2] = rho[2, 1] = alpha * beta
    rho[2, 2] = beta ** 2
    return TwoQubitDensity(rho)


def _complex_or_none(value, key):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    try:
        return complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f'{key} must be a number or [re, im], got {value!r}')


class ProtocolConfig(object):
    """Parameters of one GHZ or W run.

    dd: (h, Jz) per DD qubit, in arm order.
    alpha, beta / alpha_out, beta_out: Y splitter couplings (GHZ and W with n=2).
    t_override, r_override: complex amplitudes replacing the measured ones.
    """

    def __init__(self, kind='GHZ', n=2, alpha=None, beta=None, alpha_out=None, beta_out=None, optimal=False,
                 dd=None, h=10.0, Jz=10.0, t_override=None, r_override=None, packet_alpha=4 / 15,
                 J_perp=1.0, tail_eps=1e-6, detector=False, engine='closed-form', propagator=None):
        if kind not in ('GHZ', 'W'):
            raise ConfigError(f'Protocol kind must be GHZ or W, got {kind!r}')
        if kind == 'GHZ' and n < 1:
            raise ConfigError(f'GHZ needs n >= 1, got {n}')
        if kind == 'W' and n < 2:
            raise ConfigError(f'W needs n >= 2, got {n}')

        self.kind = kind
        self.n = int(n)
        self.optimal = bool(optimal)
        self.engine = engine
        self.packet_alpha = float(packet_alpha)
        self.J_perp = float(J_perp)
        self.tail_eps = float(tail_eps)
        self.detector = bool(detector)
        self.propagator = dict(propagator or {})
        self.t_override = _complex_or_none(t_override, 't_override')
        self.r_override = _complex_or_none(r_override, 'r_override')

        dd = [(h, Jz)] * self.n if dd is None else [tuple(p) for p in dd]
        if len(dd) != self.n:
            raise ConfigError(f'{len(dd)} DD parameter pairs for n={self.n}')
        for dd_h, dd_jz in dd:
            if dd_h <= 0 or dd_jz <= 0:
                raise ConfigError(f'DD qubits need h > 0 and Jz > 0, got h={dd_h}, Jz={dd_jz}')
        self.dd = tuple((float(a), float(b)) for a, b in dd)

        if kind == 'W' and self.n > 2:
            if any(v is not None for v in (alpha, beta, alpha_out, beta_out)):
                raise ConfigError('W with n > 2 uses symmetric 1xn splitters, splitter couplings are not accepted')
            self.alpha = self.beta = self.alpha_out = self.beta_out = None
        else:
            balanced = 1 / math.sqrt(2)
            self.alpha = balanced if alpha is None else float(alpha)
            self.beta = balanced if beta is None else float(beta)
            self.alpha_out = self.alpha if alpha_out is None else float(alpha_out)
            self.beta_out = self.beta if beta_out is None else float(beta_out)
            try:
                check_normalized(self.alpha, self.beta)
                check_normalized(self.alpha_out, self.beta_out)
            except UnnormalizedSplitterError as e:
                raise ConfigError(e.message)

    @classmethod
    def from_config(cls, config, **changes):
        """Build from a loaded configuration (protocol, packet, geometry and
        propagator sections); keyword arguments replace protocol values."""

        section = dict(config['protocol'])
        section.update(changes)
        return cls(kind=section['kind'], n=section['n'], alpha=section['alpha'], beta=section['beta'],
                   alpha_out=section['alpha_out'], beta_out=section['beta_out'], optimal=section['optimal'],
                   dd=section['dd'], h=section['h'], Jz=section['Jz'], t_override=section['t_override'],
                   r_override=section['r_override'], packet_alpha=config['packet']['alpha'],
                   J_perp=config['geometry']['J_perp'], tail_eps=section['tail_eps'],
                   detector=section['detector'], engine=section['engine'],
                   propagator=dict(config['propagator']))

    def replace(self, **changes):
        arguments = {
            'kind': self.kind, 'n': self.n, 'alpha': self.alpha, 'beta': self.beta,
            'alpha_out': self.alpha_out, 'beta_out': self.beta_out, 'optimal': self.optimal,
            'dd': self.dd, 't_override': self.t_override, 'r_override': self.r_override,
            'packet_alpha': self.packet_alpha, 'J_perp': self.J_perp, 'tail_eps': self.tail_eps,
            'detector': self.detector, 'engine': self.engine, 'propagator': self.propagator,
        }
        arguments.update(changes)
        return ProtocolConfig(**arguments)

    def as_dict(self):
        return {
            'kind': self.kind, 'n': self.n, 'alpha': self.alpha, 'beta': self.beta,
            'alpha_out': self.alpha_out, 'beta_out': self.beta_out, 'optimal': self.optimal,
            'dd': self.dd, 't_override': self.t_override, 'r_override': self.r_override,
            'packet_alpha': self.packet_alpha, 'J_perp': self.J_perp, 'detector': self.detector,
        }


class ProtocolOutcome(object):
    """Result of a protocol run.

    density: post-selected register density matrix (2^n x 2^n).
    branches: probability per ledger branch ('output' is the post-selected one).
    amplitudes: closed-form engine only, register amplitudes per branch.
    """

    def __init__(self, kind, n, engine, success_probability, density, fidelity, branches,
                 amplitudes=None, transmissions=(), parameters=None):
        self.kind = kind
        self.n = n
        self.engine = engine
        self.success_probability = float(success_probability)
        self.density = density
        self.fidelity = float(fidelity)
        self.branches = dict(branches)
        self.amplitudes = amplitudes
        self.transmissions = tuple(transmissions)
        self.parameters = dict(parameters or {})

    @property
    def post_state(self):
        """Register state vector when the post-selected state is pure, else None."""

        eigenvalues, eigenvectors = np.linalg.eigh(self.density)
        if eigenvalues[-1] < 1 - PURITY_TOLERANCE:
            return None
        vector = eigenvectors[:, -1]
        pivot = np.argmax(np.abs(vector))
        return vector * np.exp(-1j * np.angle(vector[pivot]))

    def ledger_total(self):
        return sum(self.branches.values())

    def to_summary(self):
        summary = {
            'kind': self.kind,
            'n': self.n,
            'engine': self.engine,
            'success_probability': self.success_probability,
            'fidelity': self.fidelity,
            'branches': self.branches,
            'ledger_total': self.ledger_total(),
            'transmissions': [{'t': t, 'r': r} for t, r in self.transmissions],
            't_convention': T_CONVENTION,
            'parameters': self.parameters,
            'density_diagonal': np.real(np.diag(self.density)),
        }
        if self.amplitudes is not None:
            summary['amplitudes'] = {branch: {format(reg, f'0{self.n}b'): a for reg, a in registers.items()}
                                     for branch, registers in self.amplitudes.items()}
        return summary

    def __repr__(self):
        return (f'ProtocolOutcome({self.kind} n={self.n} {self.engine}: P={self.success_probability:.6f}, '
                f'fidelity={self.fidelity:.6f})')


def ghz_state(n):
    state = np.zeros(2 ** n, dtype=np.complex128)
    state[0] = state[-1] = 1 / math.sqrt(2)
    return state


def w_state(n):
    state = np.zeros(2 ** n, dtype=np.complex128)
    for q in range(n):
        state[1 << (n - 1 - q)] = 1 / math.sqrt(n)
    return state


def ghz_success_probability(t, n):
    """2 / |1 + t^-n|^2"""

    if t == 0:
        return 0.0
    return 2 / abs(1 + complex(t) ** (-n)) ** 2


def w_success_probability(t, n):
    return abs(t) ** 2 / n


def optimal_ghz_parameters(t, n):
    """alpha = alpha' = sqrt(1 / (1 + |t|^n)), beta = beta' = sqrt(|t|^n / (1 + |t|^n))."""

    s = abs(t) ** n
    alpha = math.sqrt(1 / (1 + s))
    beta = math.sqrt(s / (1 + s))
    return alpha, beta, alpha, beta


def optimal_ghz_success_probability(t, n):
    """Post-selection probability with optimal_ghz_parameters, 2 s^2 / (1 + s)^2 for s = |t|^n."""

    s = abs(t) ** n
    return 2 * s ** 2 / (1 + s) ** 2


def single_splitter_operation(alpha, beta, alpha_out, beta_out, t):
    """Register map of a one-DD GHZ interferometer, post-selected on the output lead.

    |0> -> alpha' alpha t |1> + beta' beta |0>; a DD already in |1> blocks its arm,
    |1> -> beta' beta |1>. Columns are the input register states.
    """

    return np.array([[beta_out * beta, 0], [alpha_out * alpha * t, beta_out * beta]], dtype=np.complex128)


GHZSearchResult = namedtuple('GHZSearchResult', ['alpha', 'beta', 'alpha_out', 'beta_out', 'probability',
                                                 'grid_step'])


def ghz_optimality_search(t, n, grid=400, seed=0):
    """Maximize the post-selection probability over splitter angles keeping the
    output register state an exact GHZ state.

    With alpha = cos(a), beta = sin(a), alpha' = cos(b), beta' = sin(b) the two output
    amplitudes have equal magnitude when tan(a) tan(b) = |t|^n; the probability is
    then 2 sin(a)^2 sin(b)^2. A jittered grid over a is refined with a bounded
    scalar search.
    """

    s = abs(t) ** n
    if s == 0:
        raise ZeroProbabilityError('No transmitted branch for t = 0')

    def probability(a):
        b = math.atan(s / math.tan(a))
        return 2 * (math.sin(a) * math.sin(b)) ** 2

    rng = np.random.default_rng(seed)
    step = (math.pi / 2) / grid
    angles = (np.arange(grid) + rng.uniform(0.1, 0.9)) * step
    values = [probability(a) for a in angles]
    best = int(np.argmax(values))

    bounds = (max(angles[best] - step, 1e-9), min(angles[best] + step, math.pi / 2 - 1e-9))
    refined = scipy.optimize.minimize_scalar(lambda a: -probability(a), bounds=bounds, method='bounded',
                                             options={'xatol': 1e-12})
    a = refined.x if -refined.fun >= values[best] else angles[best]
    b = math.atan(s / math.tan(a))
    return GHZSearchResult(math.cos(a), math.sin(a), math.cos(b), math.sin(b), probability(a), step)


_TRANSMISSIONS = {}


def resolve_transmission(cfg):
    """(t, r) per DD qubit: the overrides when given, otherwise measured with
    scatter_off_dd on the compact scattering geometry (cached per (h, Jz))."""

    if cfg.t_override is not None:
        t = cfg.t_override
        if abs(t) > 1 + 1e-12:
            raise ConfigError(f't_override has |t| = {abs(t)} > 1')
        r = cfg.r_override if cfg.r_override is not None else math.sqrt(max(0.0, 1 - abs(t) ** 2))
        return [(t, r)] * cfg.n

    result = []
    for h, Jz in cfg.dd:
        key = (h, Jz, cfg.packet_alpha, cfg.J_perp)
        if key not in _TRANSMISSIONS:
            setup = ScatteringSetup.compact(cfg.packet_alpha, cfg.J_perp)
            amplitudes = scatter_off_dd(setup.network(h, Jz), setup.packet(cfg.packet_alpha), 0,
                                        setup.final_time(cfg.packet_alpha), cfg.propagator, setup.buffer)
            logging.info(f'Measured transmission at h={h} Jz={Jz}: {amplitudes}')
            _TRANSMISSIONS[key] = amplitudes.t
        t = _TRANSMISSIONS[key]
        r = cfg.r_override if cfg.r_override is not None else math.sqrt(max(0.0, 1 - abs(t) ** 2))
        result.append((t, r))
    return result


def _pipeline(node_in, node_out, arms):
    """Register amplitudes per branch for one packet through two nodes.

    arms: (label, [(t, r, bit), ...]) per arm; every DD qubit flips register bit
    `bit` when the packet passes it.
    """

    branches = {'output': {}}
    for label, dds in arms:
        c = node_in.matrix[node_in.index(label), 0]
        amplitude = c
        register = 0
        for j, (t, r, bit) in enumerate(dds):
            branch = branches.setdefault(f'dd_reflected:{label}:{j}', {})
            branch[register] = branch.get(register, 0) + amplitude * r
            amplitude = amplitude * t
            register |= bit

        column = node_out.index(label)
        for port, weight in zip(node_out.ports, node_out.matrix[:, column]):
            name = 'output' if port == 'lead' else f'reflected:{port}'
            branch = branches.setdefault(name, {})
            branch[register] = branch.get(register, 0) + amplitude * weight

    return branches


def _probabilities(branches):
    return {name: float(sum(abs(a) ** 2 for a in registers.values())) for name, registers in branches.items()}


def _post_select(branches, n):
    output = branches['output']
    vector = np.zeros(2 ** n, dtype=np.complex128)
    for register, amplitude in output.items():
        vector[register] += amplitude
    probability = float(np.vdot(vector, vector).real)
    if probability == 0:
        raise ZeroProbabilityError('Nothing reaches the output lead')
    vector /= math.sqrt(probability)
    return probability, np.outer(vector, vector.conj())


def _closed_form_outcome(cfg, node_in, node_out, arms, transmissions, target, parameters):
    branches = _pipeline(node_in, node_out, arms)
    probability, density = _post_select(branches, cfg.n)
    fidelity = float(np.vdot(target, density @ target).real)

    outcome = ProtocolOutcome(cfg.kind, cfg.n, 'closed-form', probability, density, fidelity,
                              _probabilities(branches), branches, transmissions, parameters)
    total = outcome.ledger_total()
    unitary = all(abs(abs(t) ** 2 + abs(r) ** 2 - 1) < 1e-12 for t, r in transmissions)
    if unitary and abs(total - 1) > LEDGER_TOLERANCE:
        raise SpinNetError(f'Closed-form ledger sums to {total}')
    return outcome


def run_ghz_closed_form(cfg, transmissions=None):
    """GHZ interferometer: arm A holds the n DD qubits, arm B is empty."""

    if cfg.kind != 'GHZ':
        raise ConfigError(f'run_ghz_closed_form needs kind GHZ, got {cfg.kind}')
    transmissions = transmissions or resolve_transmission(cfg)
    if any(t == 0 for t, _ in transmissions):
        raise ZeroProbabilityError('t = 0: the DD arm never transmits')

    alpha, beta, alpha_out, beta_out = cfg.alpha, cfg.beta, cfg.alpha_out, cfg.beta_out
    if cfg.optimal:
        s = abs(np.prod([t for t, _ in transmissions]))
        alpha, beta, alpha_out, beta_out = optimal_ghz_parameters(s, 1)

    n = cfg.n
    arms = [('A', [(t, r, 1 << (n - 1 - j)) for j, (t, r) in enumerate(transmissions)]), ('B', [])]
    parameters = dict(cfg.as_dict(), alpha=alpha, beta=beta, alpha_out=alpha_out, beta_out=beta_out)
    return _closed_form_outcome(cfg, y_node_matrix(alpha, beta), y_node_matrix(alpha_out, beta_out), arms,
                                transmissions, ghz_state(n), parameters)


def _w_nodes(cfg):
    if cfg.n == 2:
        return y_node_matrix(cfg.alpha, cfg.beta), y_node_matrix(cfg.alpha_out, cfg.beta_out)
    node = one_to_n_node_matrix(cfg.n)
    return node, node


def run_w_closed_form(cfg, transmissions=None):
    """W interferometer: one DD qubit in each of the n arms."""

    if cfg.kind != 'W':
        raise ConfigError(f'run_w_closed_form needs kind W, got {cfg.kind}')
    transmissions = transmissions or resolve_transmission(cfg)
    if any(t == 0 for t, _ in transmissions):
        raise ZeroProbabilityError('t = 0: no arm transmits')

    n = cfg.n
    node_in, node_out = _w_nodes(cfg)
    arms = [(label, [(t, r, 1 << (n - 1 - q))])
            for q, (label, (t, r)) in enumerate(zip(node_in.ports[1:], transmissions))]
    return _closed_form_outcome(cfg, node_in, node_out, arms, transmissions, w_state(n), cfg.as_dict())


ProtocolGeometry = namedtuple('ProtocolGeometry', ['net', 'packet', 'measure_time', 'output_sites', 'detector'])


def build_protocol_network(cfg):
    """Network, packet and measurement time for the full-dynamics engine.

    The packet starts on the input lead with its 1e-8 tail inside the lead. DD qubits
    sit at least a packet tail (at tail_eps) away from the nodes and from each other.
    In the GHZ interferometer arm B is shorter than arm A by one site per DD qubit,
    matching the one-site advance of a transmitted packet. The packet is measured
    when its center has moved a tail plus the buffer into the output lead.
    Post-selection covers the output lead past the node buffer, and past the
    detector DD qubit when there is one.
    """

    alpha = cfg.packet_alpha
    edge = packet_tail(alpha, EDGE_EPS)
    tail = packet_tail(alpha, cfg.tail_eps)
    spacing = tail + 2
    lead_length = edge + spacing
    reach = tail + BUFFER + 1

    detector_offset = BUFFER + 1
    out_length = reach + tail + 2
    if cfg.detector:
        out_length += detector_offset + 2

    placements = []
    if cfg.kind == 'GHZ':
        arm_a = (cfg.n + 1) * spacing + 2 * cfg.n
        arm_lengths = (arm_a, arm_a - cfg.n)
        for j, (h, Jz) in enumerate(cfg.dd):
            placements.append(DDPlacement('A', spacing + j * (spacing + 2), Jz, h))
        spec = SplitterSpec('Y', lead_length, arm_lengths, out_length, cfg.alpha, cfg.beta, cfg.alpha_out,
                            cfg.beta_out, J_perp=cfg.J_perp)
        effective_arm = arm_lengths[1]
    else:
        arm = 2 * spacing + 2
        if cfg.n == 2:
            spec = SplitterSpec('Y', lead_length, arm, out_length, cfg.alpha, cfg.beta, cfg.alpha_out,
                                cfg.beta_out, J_perp=cfg.J_perp)
        else:
            spec = SplitterSpec('OneToN', lead_length, arm, out_length, n=cfg.n, J_perp=cfg.J_perp)
        for label, (h, Jz) in zip(spec.arm_labels, cfg.dd):
            placements.append(DDPlacement(label, spacing, Jz, h))
        effective_arm = arm - 1

    out_reach = reach
    if cfg.detector:
        h, Jz = cfg.dd[0]
        placements.append(DDPlacement('out', detector_offset, Jz, h))
        out_reach = reach + detector_offset + 1

    net = build_splitter_network(spec, placements)
    lead = net.region('lead')
    packet = PacketSpec(alpha, edge, forward_momentum(cfg.J_perp), lead[:-1])

    # lead center -> input node -> arm -> output node -> out_reach sites into the output lead
    hops = (lead_length - 1 - edge) + 1 + effective_arm + out_reach
    measure_time = hops / group_velocity(alpha, cfg.J_perp)

    out = net.region('out')
    first = detector_offset + 2 + BUFFER + 1 if cfg.detector else BUFFER + 1
    return ProtocolGeometry(net, packet, measure_time, tuple(out[first:]), cfg.detector)


def run_protocol_full_dynamics(cfg):
    """Evolve the packet through the interferometer and post-select on the output lead.

    return: ProtocolOutcome with the register density traced over the packet position
    """

    if cfg.n > MAX_DYNAMICS_N:
        raise DynamicsRefusedError(f'Full dynamics is limited to n <= {MAX_DYNAMICS_N} DD qubits, got n={cfg.n}')

    geometry = build_protocol_network(cfg)
    net = geometry.net
    k = 1 + len(net.dd_qubits)
    size = int(comb(net.n_sites, k, exact=True))
    if size > MAX_SECTOR_SIZE:
        raise DynamicsRefusedError(
            f'Sector C({net.n_sites}, {k}) = {size} exceeds the dynamics limit of {MAX_SECTOR_SIZE} states')
    logging.info(f'Full dynamics for {cfg.kind} n={cfg.n}: {net.n_sites} sites, sector size {size}')

    basis = SectorBasis(net.n_sites, k)
    H = assemble_hamiltonian(net, basis)
    frozen = [q.d_plus_1 for q in net.dd_qubits]
    initial = make_packet(basis, geometry.packet, frozen_flips=frozen, net=net)
    final = Propagator(H, **cfg.propagator).evolve(initial, geometry.measure_time)

    classification = classify_configurations(basis, net)
    register = classification.register
    if geometry.detector:
        passed = (register & 1) == 1
        register = register >> 1
    else:
        passed = np.ones(basis.size, dtype=bool)

    output = RegionProjector(basis, RegionProjector.mobile_in(
        basis, net, geometry.output_sites, classification=classification).mask & passed, 'output')
    probability = region_probability(final, output)
    if probability == 0:
        raise ZeroProbabilityError('Nothing reached the output lead')

    n = cfg.n
    mobile_sites = sorted(geometry.output_sites)
    position = {site: i for i, site in enumerate(mobile_sites)}
    psi = np.zeros((len(mobile_sites), 2 ** n), dtype=np.complex128)
    indices = np.flatnonzero(output.mask)
    for index in indices:
        psi[position[int(classification.mobile[index])], register[index]] += final.amplitudes[index]
    density = psi.T @ psi.conj() / probability

    target = ghz_state(n) if cfg.kind == 'GHZ' else w_state(n)
    fidelity = float(np.vdot(target, density @ target).real)

    branches = _dynamics_ledger(final, basis, net, classification, geometry, output)
    parameters = dict(cfg.as_dict(), n_sites=net.n_sites, sector_size=size, measure_time=geometry.measure_time,
                      norm_drift=abs(final.norm() - 1))
    return ProtocolOutcome(cfg.kind, n, 'dynamics', probability, density, fidelity, branches,
                           parameters=parameters)


def _dynamics_ledger(final, basis, net, classification, geometry, output):
    """Probability of the final state in output, input lead, arms, node buffers and
    leakage (everything else)."""

    lead = list(net.region('lead')[:-1])
    arms = [s for label in net.layout['arm_labels'] for s in net.region(f'arm:{label}')]
    nodes = list(net.region('node:in')) + [s for s in net.region('out') if s not in geometry.output_sites]

    branches = {'output': region_probability(final, output)}
    taken = output.mask.copy()
    for name, sites in (('input_lead', lead), ('arms', arms), ('node_buffer', nodes)):
        mask = RegionProjector.mobile_in(basis, net, sites, classification=classification).mask & ~taken
        branches[name] = region_probability(final, RegionProjector(basis, mask, name))
        taken |= mask
    branches['leakage'] = region_probability(final, RegionProjector(basis, ~taken, 'leakage'))
    return branches


def run_protocol(cfg):
    """Run the engines selected by cfg.engine.

    return: dict with 'closed-form' and/or 'dynamics' outcomes and, for 'both', a
    'consistency' entry with the probability and fidelity differences
    """

    closed = run_ghz_closed_form if cfg.kind == 'GHZ' else run_w_closed_form
    results = {}
    if cfg.engine in ('closed-form', 'both'):
        results['closed-form'] = closed(cfg)
    if cfg.engine in ('dynamics', 'both'):
        results['dynamics'] = run_protocol_full_dynamics(cfg)
    if cfg.engine == 'both':
        a, b = results['closed-form'], results['dynamics']
        results['consistency'] = {
            'delta_P': abs(a.success_probability - b.success_probability),
            'delta_fidelity': abs(a.fidelity - b.fidelity),
        }
    return results


def probability_curves(kind='both', T_values=(1.0, 0.9, 0.8, 0.7), n_range=range(2, 9)):
    """Success probabilities per (T, n) with real t = sqrt(T).

    kind: 'GHZ', 'W' or 'both' (adds the P_GHZ - P_W gap column).
    """

    if kind not in ('GHZ', 'W', 'both'):
        raise ConfigError(f'Curve kind must be GHZ, W or both, got {kind!r}')

    records = []
    for T in T_values:
        if not 0 < T <= 1:
            raise ConfigError(f'Transmission coefficients must lie in (0, 1], got {T}')
        t = math.sqrt(T)
        for n in n_range:
            row = {CURVE_COLUMNS['T']: float(T), CURVE_COLUMNS['n']: int(n)}
            if kind in ('GHZ', 'both'):
                row[CURVE_COLUMNS['GHZ']] = ghz_success_probability(t, n)
            if kind in ('W', 'both'):
                row[CURVE_COLUMNS['W']] = w_success_probability(t, n)
            if kind == 'both':
                row[CURVE_COLUMNS['gap']] = row[CURVE_COLUMNS['GHZ']] - row[CURVE_COLUMNS['W']]
            records.append(row)

    return pd.DataFrame(records)


CurveClaim = namedtuple('CurveClaim', ['name', 'passed', 'detail'])


def curve_claims(frame):
    """Qualitative checks on a curves table.

    - at T = 1 the GHZ-W gap grows with n
    - at fixed n the gap does not grow as T decreases
    - P_GHZ does not grow with n, P_W strictly decreases with n
    """

    T, n = CURVE_COLUMNS['T'], CURVE_COLUMNS['n']
    claims = []

    def increasing(values, strict=True):
        steps = np.diff(values)
        return bool(np.all(steps > 0)) if strict else bool(np.all(steps >= -1e-15))

    if CURVE_COLUMNS['gap'] in frame:
        gap = CURVE_COLUMNS['gap']
        top = frame[frame[T] == frame[T].max()].sort_values(n)
        claims.append(CurveClaim(f'gap grows with n at T={frame[T].max()}', increasing(top[gap].values),
                                 f'gaps {np.round(top[gap].values, 6).tolist()}'))
        shrinking = all(increasing(group.sort_values(T)[gap].values, strict=False)
                        for _, group in frame.groupby(n))
        claims.append(CurveClaim('gap shrinks as T decreases', shrinking, 'signed gap per n, T descending'))

    for column, strict, name in ((CURVE_COLUMNS['GHZ'], False, 'P_GHZ nonincreasing in n'),
                                 (CURVE_COLUMNS['W'], True, 'P_W decreasing in n')):
        if column not in frame:
            continue
        ok = all(increasing(-group.sort_values(n)[column].values, strict=strict) for _, group in frame.groupby(T))
        claims.append(CurveClaim(name, ok, column))

    return claims

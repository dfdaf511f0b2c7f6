"""Single-flip packets scattering off a DD qubit on a chain.

A packet launched left of the DD qubit either passes it (and flips the register)
or bounces back. Probabilities are read from region projectors once the outgoing
packets have left the neighbourhood of the DD qubit.
"""
import hashlib
import json
import logging
import math
from multiprocessing import Pool

import numpy as np
import pandas as pd
import progressbar
import scipy.linalg

from spinnet import (CacheHandler, ConfigError, InvalidTopologyError, NotSeparatedError, SectorError,
                     SpinNetError)
from spinnet.dynamics import (PacketSpec, Propagator, RegionProjector, classify_configurations,
                              forward_momentum, group_velocity, make_packet, packet_tail, region_probability)
from spinnet.hilbert import SectorBasis, StateVector, assemble_hamiltonian
from spinnet.network import build_chain, build_chain_with_dd

# Weight allowed next to the DD qubit when the final state is read out
SEPARATION_TOLERANCE = 1e-3
DEFAULT_BUFFER = 3
TAIL_EPS = 1e-8

SURFACE_COLUMNS = ['h [J_perp]', 'Jz [J_perp]', 'T [prob]', 'Re t', 'Im t', '|r|^2 [prob]', 'leakage [prob]']
ARGMAX_COLUMNS = ['Jz [J_perp]', 'h_argmax [J_perp]', 'T_max [prob]', '|h-Jz| [J_perp]']


class ScatteringAmplitudes(object):
    """Outcome of one scattering run.

    transmission: probability of {mobile flip right of the DD qubit, register switched}.
    reflection: probability of {mobile flip left of the DD qubit, register unchanged}.
    t: complex transmission amplitude, |t|^2 = transmission, phase measured against a
    freely propagated packet advanced by one site (see shift_convention).
    r: sqrt(reflection), its phase is not referenced.
    """

    def __init__(self, t, r, leakage, transmission, reflection, shift_convention,
                 interference=0.0, final_state=None):
        self.t = complex(t)
        self.r = complex(r)
        self.leakage = float(leakage)
        self.transmission = float(transmission)
        self.reflection = float(reflection)
        self.shift_convention = dict(shift_convention)
        self.interference = float(interference)
        self.final_state = final_state

    def as_dict(self):
        return {
            't': self.t,
            'r': self.r,
            'T': self.transmission,
            'R': self.reflection,
            'leakage': self.leakage,
            'interference': self.interference,
            'shift_convention': self.shift_convention,
        }

    def __repr__(self):
        return (f'ScatteringAmplitudes(T={self.transmission:.6f}, R={self.reflection:.6f}, '
                f'leakage={self.leakage:.2e}, t={self.t:.6f})')


class ScatteringSetup(object):
    """Chain geometry for scattering runs: `left` sites, the DD pair, `right` sites.

    The packet starts `start` sites left of the DD qubit. `buffer` sites on each side
    of the DD qubit form the interference region, which must be empty at readout.
    """

    def __init__(self, left=120, right=120, start=30, buffer=DEFAULT_BUFFER, J_perp=1.0):
        self.left = int(left)
        self.right = int(right)
        self.start = int(start)
        self.buffer = int(buffer)
        self.J_perp = float(J_perp)

    @classmethod
    def default(cls, J_perp=1.0):
        return cls(120, 120, 30, DEFAULT_BUFFER, J_perp)

    @classmethod
    def compact(cls, alpha, J_perp=1.0, buffer=DEFAULT_BUFFER):
        """Shortest chains that keep the packet tails (|amplitude|^2 > 1e-8) away from the
        chain ends up to final_time."""

        tail = packet_tail(alpha, TAIL_EPS)
        return cls(2 * tail + buffer + 4, 2 * tail + buffer + 3, tail + 1, buffer, J_perp)

    @classmethod
    def from_config(cls, config):
        geometry = config['geometry']
        if geometry['compact']:
            return cls.compact(config['packet']['alpha'], geometry['J_perp'], geometry['buffer'])
        return cls(geometry['left'], geometry['right'], geometry['start'], geometry['buffer'],
                   geometry['J_perp'])

    @property
    def dd_position(self):
        return self.left

    def check(self, alpha):
        """Raise InvalidTopologyError when the chains are too short for this packet."""

        tail = packet_tail(alpha, TAIL_EPS)
        if self.start < tail + 1:
            raise InvalidTopologyError(f'Packet start {self.start} overlaps the DD qubit (tail {tail})')
        if self.left - self.start < tail:
            raise InvalidTopologyError(f'Left chain of {self.left} sites truncates the packet (tail {tail})')
        if self.left < 2 * tail + self.buffer + 2:
            raise InvalidTopologyError(f'Left chain of {self.left} sites too short for the reflected packet')
        if self.right < 2 * tail + self.buffer + 2:
            raise InvalidTopologyError(f'Right chain of {self.right} sites too short for the transmitted packet')

    def network(self, h, Jz):
        return build_chain_with_dd(self.left, self.right, self.J_perp, Jz, h)

    def packet(self, alpha, momentum=None):
        """Packet left of the DD qubit moving towards it. The default momentum follows
        the sign of J_perp; an explicit momentum moving away raises ConfigError."""

        self.check(alpha)
        if momentum is None:
            momentum = forward_momentum(self.J_perp)
        elif self.J_perp * math.sin(momentum) <= 0:
            raise ConfigError(f'Packet momentum {momentum} moves away from the DD qubit for J_perp={self.J_perp}')
        return PacketSpec(alpha, self.left - self.start, momentum, range(self.left))

    def final_time(self, alpha):
        """Time for the packet center to travel start + tail + buffer + 2 sites."""

        tail = packet_tail(alpha, TAIL_EPS)
        return (self.start + tail + self.buffer + 2) / group_velocity(alpha, self.J_perp)

    def as_dict(self):
        return {'left': self.left, 'right': self.right, 'start': self.start,
                'buffer': self.buffer, 'J_perp': self.J_perp}

    def __repr__(self):
        return f'ScatteringSetup({self.as_dict()})'


def _single_dd(net):
    if len(net.dd_qubits) != 1:
        raise SectorError(f'Scattering needs exactly one DD qubit, network has {len(net.dd_qubits)}')
    return net.dd_qubits[0]


def _sides(net, q, buffer):
    """Reflected, interference and transmitted sites around DD qubit q."""

    if 'left' in net.regions and 'right' in net.regions:
        left, right = list(net.region('left')), list(net.region('right'))
    else:
        left = [s for s in net.sites if s < q.d]
        right = [s for s in net.sites if s > q.d_plus_1]
    if len(left) <= buffer or len(right) <= buffer:
        raise InvalidTopologyError(f'Chains around the DD qubit must be longer than the buffer ({buffer})')

    reflected = left[:len(left) - buffer]
    transmitted = right[buffer:]
    interference = left[len(left) - buffer:] + right[:buffer]
    return reflected, interference, transmitted


def dd_bound_energy(net, site):
    """Energy of the single-flip eigenstate closest to a flip resting on `site`.

    The flip on a DD site is dressed by virtual hops into the neighbouring chain;
    the returned eigenvalue is the dressed energy of that configuration.
    """

    basis = SectorBasis(net.n_sites, 1)
    H = assemble_hamiltonian(net, basis)
    bare = H.diagonal()[basis.index_of((site,))].real
    eigenvalues = scipy.linalg.eigvalsh(H.to_dense())
    return float(eigenvalues[np.argmin(np.abs(eigenvalues - bare))])


def _propagator(H, propagator):
    return Propagator(H, **dict(propagator or {}))


def scatter_off_dd(net, packet, dd_state=0, t_final=None, propagator=None, buffer=DEFAULT_BUFFER,
                   keep_state=False):
    """Scatter `packet` off the single DD qubit of `net` prepared in `dd_state`.

    t_final: readout time, defaults to the transit time over the packet start,
    tail, buffer and two extra sites.
    propagator: keyword arguments for Propagator (method, tolerance, max_matvecs).

    Raises NotSeparatedError (carrying a longer suggested time) when more than
    SEPARATION_TOLERANCE of the weight is still next to the DD qubit.
    """

    if dd_state not in (0, 1):
        raise SectorError(f'dd_state must be 0 or 1, got {dd_state}')
    q = _single_dd(net)
    reflected, interference, transmitted = _sides(net, q, buffer)

    J = net.bond(packet.support[0], packet.support[1]).J_perp if len(packet.support) > 1 else 1.0
    if t_final is None:
        start = q.d - packet.support[int(round(packet.center))]
        t_final = (start + packet_tail(packet.alpha, TAIL_EPS) + buffer + 2) / group_velocity(packet.alpha, J)

    basis = SectorBasis(net.n_sites, 2)
    H = assemble_hamiltonian(net, basis)
    initial = make_packet(basis, packet, frozen_flips=(q.d if dd_state == 1 else q.d_plus_1,), net=net)
    final = _propagator(H, propagator).evolve(initial, t_final)

    classification = classify_configurations(basis, net)
    switched = 1 - dd_state
    T = region_probability(final, RegionProjector.mobile_in(
        basis, net, transmitted, register=switched, classification=classification, name='transmitted'))
    R = region_probability(final, RegionProjector.mobile_in(
        basis, net, reflected, register=dd_state, classification=classification, name='reflected'))

    near = RegionProjector.mobile_in(basis, net, interference, classification=classification)
    weight = region_probability(final, near) + float(
        np.sum(final.probabilities()[classification.doubly_occupied]))
    if weight > SEPARATION_TOLERANCE:
        suggested = t_final + (2 * buffer + 4) / group_velocity(packet.alpha, J)
        raise NotSeparatedError(
            f'{weight:.2e} of the weight is still next to the DD qubit at t={t_final:.3f}', suggested)

    # phase reference: the same packet on a pristine chain, advanced by one site
    register_site = q.d if switched == 1 else q.d_plus_1
    free = build_chain(net.n_sites, J)
    free_basis = SectorBasis(net.n_sites, 1)
    reference = _propagator(assemble_hamiltonian(free, free_basis), propagator).evolve(
        make_packet(free_basis, packet), t_final).amplitudes
    shifted = np.zeros_like(reference)
    shifted[1:] = reference[:-1]

    right = [s for s in net.sites if s > q.d_plus_1]
    configurations = np.sort(np.array([[s, register_site] for s in right]), axis=1)
    overlap = np.vdot(shifted[right], final.amplitudes[basis.rank(configurations)])

    bound_energy = dd_bound_energy(net, register_site)
    phase = np.angle(overlap * np.exp(1j * bound_energy * t_final)) if abs(overlap) > 0 else 0.0
    t = math.sqrt(T) * np.exp(1j * phase)

    convention = {
        'reference': 'free chain packet advanced by one site',
        'bound_energy': bound_energy,
        't_final': t_final,
        'overlap': complex(overlap),
    }
    logging.debug(f'scatter_off_dd {net}: T={T:.6f} R={R:.6f} t={t:.6f}')

    return ScatteringAmplitudes(t, math.sqrt(R), 1 - T - R, T, R, convention, weight,
                                final if keep_state else None)


def three_level_block(net):
    """Indices and 3x3 Hamiltonian block of the resonant transfer path
    {d-1, d+1} -> {d, d+1} -> {d, d+2} around the single DD qubit."""

    q = _single_dd(net)
    a, b = q.d - 1, q.d_plus_1 + 1
    if a < 0 or b >= net.n_sites or net.bond(a, q.d) is None or net.bond(q.d_plus_1, b) is None:
        raise InvalidTopologyError('The DD qubit needs a transport neighbour on both sides')

    basis = SectorBasis(net.n_sites, 2)
    indices = [basis.index_of(c) for c in ((a, q.d_plus_1), (q.d, q.d_plus_1), (q.d, b))]
    return indices, assemble_hamiltonian(net, basis).restrict(indices)


def transfer_time(block):
    """Half period of the outer-level oscillation, pi over half the spectral width."""

    eigenvalues = scipy.linalg.eigvalsh(block)
    return math.pi / ((eigenvalues[-1] - eigenvalues[0]) / 2)


def dd_switch_fidelity(net, packet=None, t_final=None, propagator=None, buffer=DEFAULT_BUFFER):
    """Probability that the DD qubit switches to |1> while the flip passes it.

    With a packet this is the transmission of scatter_off_dd. Without one the
    resonant three-level path is propagated exactly up to t_final (default: the
    transfer time of the block).
    """

    q = _single_dd(net)
    if q.h != q.Jz:
        logging.warning(f'DD qubit off resonance (h={q.h}, Jz={q.Jz}), switching is incomplete')

    if packet is not None:
        return scatter_off_dd(net, packet, 0, t_final, propagator, buffer).transmission

    _, block = three_level_block(net)
    t_final = transfer_time(block) if t_final is None else t_final
    propagated = scipy.linalg.expm(-1j * block * t_final)
    return float(abs(propagated[2, 0]) ** 2)


def scatter_superposed_dd(net, packet, a0, a1, t_final, propagator=None):
    """Scatter a packet off the DD qubit in a0|0> + a1|1>.

    return: (final state, max deviation from a0 * final_0 + a1 * final_1)
    """

    q = _single_dd(net)
    norm = math.sqrt(abs(a0) ** 2 + abs(a1) ** 2)
    if norm == 0:
        raise SectorError('DD superposition needs a nonzero amplitude')
    a0, a1 = a0 / norm, a1 / norm

    basis = SectorBasis(net.n_sites, 2)
    prop = _propagator(assemble_hamiltonian(net, basis), propagator)
    zero = make_packet(basis, packet, frozen_flips=(q.d_plus_1,), net=net)
    one = make_packet(basis, packet, frozen_flips=(q.d,), net=net)
    superposed = StateVector(basis, a0 * zero.amplitudes + a1 * one.amplitudes)

    final = prop.evolve(superposed, t_final)
    combined = a0 * prop.evolve(zero, t_final).amplitudes + a1 * prop.evolve(one, t_final).amplitudes
    return final, float(np.max(np.abs(final.amplitudes - combined)))


def transmitted_momentum(v, net, sites=None, register=1):
    """Mean momentum of the part of a k=2 state with the mobile flip on `sites`
    (default: right of the DD qubit) and the DD register equal to `register`.

    Estimated from the phase of sum_j conj(psi_j) psi_{j+1} along the sites.
    """

    q = _single_dd(net)
    if sites is None:
        sites = [s for s in net.sites if s > q.d_plus_1]
    register_site = q.d if register == 1 else q.d_plus_1
    configurations = np.sort(np.array([[s, register_site] for s in sites]), axis=1)
    psi = v.amplitudes[v.basis.rank(configurations)]
    return float(np.angle(np.vdot(psi[:-1], psi[1:])))


def packet_dd_concurrence(amplitudes):
    """Concurrence of the packet (left/right) and DD qubit (0/1) after scattering
    from |0>: the state r|L,0> + t|R,1>, renormalized."""

    r, t = abs(amplitudes.r), abs(amplitudes.t)
    norm = r ** 2 + t ** 2
    if norm == 0:
        return 0.0
    return 2 * r * t / norm


class ScanGrid(object):
    def __init__(self, h_values, jz_values):
        self.h_values = tuple(float(h) for h in h_values)
        self.jz_values = tuple(float(j) for j in jz_values)
        if not self.h_values or not self.jz_values:
            raise ConfigError('Scan grid must not be empty')
        for value in self.h_values + self.jz_values:
            if not 0 <= value <= 20:
                raise ConfigError(f'Scan values must lie in [0, 20] J_perp, got {value}')

    @classmethod
    def from_config(cls, scan):
        return cls(np.linspace(scan['h_min'], scan['h_max'], scan['h_points']),
                   np.linspace(scan['jz_min'], scan['jz_max'], scan['jz_points']))

    def points(self):
        """Grid points in output order: h outer, Jz inner."""

        return [(h, jz) for h in self.h_values for jz in self.jz_values]

    def __len__(self):
        return len(self.h_values) * len(self.jz_values)


def scan_signature(setup, packet, t_final, propagator=None):
    """Digest of everything a scan point depends on besides h, Jz and the DD state.

    Cached points are stored under this digest, so a cache directory never serves
    results computed with another geometry, packet, readout time or propagator.
    """

    parameters = {
        'setup': setup.as_dict(),
        'packet': [packet.alpha, packet.center, packet.momentum, list(packet.support)],
        't_final': t_final,
        'propagator': dict(propagator or {}),
    }
    text = json.dumps(parameters, sort_keys=True, default=str)
    return hashlib.sha1(text.encode('utf-8')).hexdigest()[:16]


def _scan_point(task):
    h, Jz, setup, packet, dd_state, t_final, propagator, cache_dir, signature = task
    row = {'h': h, 'Jz': Jz, 'T': np.nan, 't': complex(np.nan, np.nan), 'R': np.nan,
           'leakage': np.nan, 'error': ''}

    cache = CacheHandler(cache_dir, f'point_{signature}_') if cache_dir else None
    name = f'h{h:.6f}_jz{Jz:.6f}_s{dd_state}'
    if cache is not None and cache.cached_object_exists(name):
        return cache.load_cached_object(name)

    try:
        net = setup.network(h, Jz)
        try:
            amplitudes = scatter_off_dd(net, packet, dd_state, t_final, propagator, setup.buffer)
        except NotSeparatedError as e:
            logging.warning(f'h={h} Jz={Jz}: {e.message}, retrying with t={e.suggested_time:.3f}')
            amplitudes = scatter_off_dd(net, packet, dd_state, e.suggested_time, propagator, setup.buffer)
    except SpinNetError as e:
        logging.error(f'Scan point h={h} Jz={Jz} failed: {e.message}')
        row['error'] = e.message
        return row

    row.update({'T': amplitudes.transmission, 't': amplitudes.t, 'R': amplitudes.reflection,
                'leakage': amplitudes.leakage})
    if cache is not None:
        cache.save_cached_object(name, row)
    return row


def transmission_scan(grid, packet=None, setup=None, alpha=4 / 15, dd_state=0, workers=1,
                      propagator=None, cache_dir=None, progress=False):
    """Scattering amplitudes at every (h, Jz) of the grid.

    packet: PacketSpec built for `setup` (default: setup.packet(alpha)).
    workers: size of the process pool, 1 runs in-process.
    cache_dir: per-point results are cached there and reused on the next run with
    the same scan_signature.
    Failing points are recorded with their error and the scan continues.
    """

    setup = setup or ScatteringSetup.default()
    packet = packet or setup.packet(alpha)
    t_final = setup.final_time(packet.alpha)

    signature = scan_signature(setup, packet, t_final, propagator)
    tasks = [(h, jz, setup, packet, dd_state, t_final, propagator, cache_dir, signature)
             for h, jz in grid.points()]
    logging.info(f'Scanning {len(tasks)} points with {workers} workers')

    if workers > 1:
        with Pool(processes=workers) as p:
            results = p.imap(_scan_point, tasks)
            if progress:
                results = progressbar.progressbar(results, max_value=len(tasks))
            rows = list(results)
    else:
        iterator = progressbar.progressbar(tasks) if progress else tasks
        rows = [_scan_point(task) for task in iterator]

    return TransmissionSurface(rows, packet.alpha, dd_state, setup)


class TransmissionSurface(object):
    """Scan results in grid order."""

    def __init__(self, rows, alpha, dd_state=0, setup=None):
        self.rows = list(rows)
        self.alpha = alpha
        self.dd_state = dd_state
        self.setup = setup

    @property
    def failures(self):
        return [row for row in self.rows if row['error']]

    def failure_fraction(self):
        return len(self.failures) / len(self.rows) if self.rows else 0.0

    def value(self, h, Jz, key='T'):
        for row in self.rows:
            if abs(row['h'] - h) < 1e-9 and abs(row['Jz'] - Jz) < 1e-9:
                return row[key]
        raise KeyError((h, Jz))

    def to_frame(self):
        """Successful points as a table with unit headers."""

        records = [(row['h'], row['Jz'], row['T'], row['t'].real, row['t'].imag, row['R'], row['leakage'])
                   for row in self.rows if not row['error']]
        return pd.DataFrame(records, columns=SURFACE_COLUMNS)

    def failures_frame(self):
        return pd.DataFrame([(row['h'], row['Jz'], row['error']) for row in self.failures],
                            columns=['h [J_perp]', 'Jz [J_perp]', 'error'])

    def argmax_table(self):
        return resonance_argmax(self.to_frame())


def resonance_argmax(frame):
    """For every Jz of a surface table, the field h with the largest transmission."""

    records = []
    for jz, group in frame.groupby('Jz [J_perp]', sort=True):
        best = group.loc[group['T [prob]'].idxmax()]
        records.append((jz, best['h [J_perp]'], best['T [prob]'], abs(best['h [J_perp]'] - jz)))
    return pd.DataFrame(records, columns=ARGMAX_COLUMNS)

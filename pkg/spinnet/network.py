"""Spin network topologies.

A network is a graph of spin-1/2 sites. Every bond carries an XY coupling J_perp
and an Ising coupling Jz, every site an optional local field h. Double-dot (DD)
qubits are pairs of adjacent sites joined by a pure Ising bond, both under the
same field. Site ids are dense 0-based integers; named regions (lead, arms, output
lead) record which sites belong to which part of the network.
"""
import math
import string
from collections import namedtuple

import numpy as np
from frozendict import frozendict
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from spinnet import InvalidTopologyError, UnnormalizedSplitterError

NORMALIZATION_TOLERANCE = 1e-12

Bond = namedtuple('Bond', ['i', 'j', 'J_perp', 'Jz'])
DDQubitSpec = namedtuple('DDQubitSpec', ['d', 'd_plus_1', 'Jz', 'h'])
# DD qubit inside a splitter arm: its left site is arm site `offset` (0 = next to
# the input node). Arm 'out' addresses the output lead.
DDPlacement = namedtuple('DDPlacement', ['arm', 'offset', 'Jz', 'h'])


class SpinNetwork(object):
    """Immutable spin network. Builders below return new instances."""

    def __init__(self, n_sites, bonds, fields=None, dd_qubits=(), regions=None, layout=None):
        self.n_sites = int(n_sites)
        self.bonds = tuple(
            Bond(min(b[0], b[1]), max(b[0], b[1]), float(b[2]), float(b[3])) for b in bonds)
        self.fields = frozendict({int(s): float(h) for s, h in (fields or {}).items() if h != 0})
        self.dd_qubits = tuple(DDQubitSpec(int(q.d), int(q.d_plus_1), float(q.Jz), float(q.h))
                               for q in dd_qubits)
        self.regions = frozendict({name: tuple(int(s) for s in sites)
                                   for name, sites in (regions or {}).items()})
        self.layout = frozendict(layout or {})

        self._bond_index = {(b.i, b.j): b for b in self.bonds}
        adjacency = {}
        for b in self.bonds:
            adjacency.setdefault(b.i, []).append(b.j)
            adjacency.setdefault(b.j, []).append(b.i)
        self._adjacency = {s: tuple(sorted(n)) for s, n in adjacency.items()}

        self.validate()

    @property
    def sites(self):
        return range(self.n_sites)

    def bond(self, i, j):
        """Return the bond between i and j, (i, j) and (j, i) are the same bond."""

        return self._bond_index.get((min(i, j), max(i, j)))

    def neighbors(self, site):
        return self._adjacency.get(site, ())

    def field(self, site):
        return self.fields.get(site, 0.0)

    def region(self, name):
        if name not in self.regions:
            raise InvalidTopologyError(f'Network has no region "{name}" (known: {sorted(self.regions)})')
        return self.regions[name]

    @property
    def transport_bonds(self):
        return tuple(b for b in self.bonds if b.J_perp != 0)

    @property
    def ising_bonds(self):
        return tuple(b for b in self.bonds if b.Jz != 0)

    @property
    def dd_sites(self):
        return frozenset(s for q in self.dd_qubits for s in (q.d, q.d_plus_1))

    def validate(self):
        """Check the network invariants, raise InvalidTopologyError otherwise."""

        if self.n_sites < 2:
            raise InvalidTopologyError(f'A network needs at least 2 sites, got {self.n_sites}')

        seen = set()
        for b in self.bonds:
            if b.i == b.j:
                raise InvalidTopologyError(f'Self-loop on site {b.i}')
            if not (0 <= b.i < self.n_sites and 0 <= b.j < self.n_sites):
                raise InvalidTopologyError(f'Bond ({b.i}, {b.j}) references a site outside 0..{self.n_sites - 1}')
            if (b.i, b.j) in seen:
                raise InvalidTopologyError(f'Duplicate bond ({b.i}, {b.j})')
            seen.add((b.i, b.j))
            if not (math.isfinite(b.J_perp) and math.isfinite(b.Jz)):
                raise InvalidTopologyError(f'Non-finite coupling on bond ({b.i}, {b.j})')

        for site, h in self.fields.items():
            if not 0 <= site < self.n_sites:
                raise InvalidTopologyError(f'Field on unknown site {site}')
            if not math.isfinite(h):
                raise InvalidTopologyError(f'Non-finite field on site {site}')

        used = set()
        dd_bonds = set()
        for q in self.dd_qubits:
            check_dd_spec(q)
            if q.d_plus_1 != q.d + 1:
                raise InvalidTopologyError(f'DD qubit sites must be (d, d+1), got ({q.d}, {q.d_plus_1})')
            if used & {q.d, q.d_plus_1}:
                raise InvalidTopologyError(f'DD qubit at ({q.d}, {q.d_plus_1}) overlaps another DD qubit')
            used |= {q.d, q.d_plus_1}
            b = self.bond(q.d, q.d_plus_1)
            if b is None:
                raise InvalidTopologyError(f'DD qubit sites ({q.d}, {q.d_plus_1}) are not bonded')
            if b.J_perp != 0 or b.Jz != q.Jz:
                raise InvalidTopologyError(
                    f'DD qubit bond ({q.d}, {q.d_plus_1}) must have J_perp=0 and Jz={q.Jz}, got {b}')
            if self.field(q.d) != q.h or self.field(q.d_plus_1) != q.h:
                raise InvalidTopologyError(f'DD qubit sites ({q.d}, {q.d_plus_1}) must both carry field {q.h}')
            dd_bonds.add((b.i, b.j))

        for b in self.bonds:
            if (b.i, b.j) not in dd_bonds and b.J_perp == 0:
                raise InvalidTopologyError(f'Transport bond ({b.i}, {b.j}) has J_perp = 0')

        for name, sites in self.regions.items():
            if any(not 0 <= s < self.n_sites for s in sites):
                raise InvalidTopologyError(f'Region "{name}" references sites outside the network')

        rows = [b.i for b in self.bonds]
        cols = [b.j for b in self.bonds]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_sites, self.n_sites))
        n_components, _ = connected_components(graph, directed=False)
        if n_components != 1:
            raise InvalidTopologyError(f'Network is not connected ({n_components} components)')

    def replace(self, **changes):
        """Return a new network with some constructor arguments replaced."""

        arguments = {
            'n_sites': self.n_sites,
            'bonds': self.bonds,
            'fields': dict(self.fields),
            'dd_qubits': self.dd_qubits,
            'regions': dict(self.regions),
            'layout': dict(self.layout),
        }
        arguments.update(changes)
        return SpinNetwork(**arguments)

    def __repr__(self):
        return (f'SpinNetwork(n_sites={self.n_sites}, bonds={len(self.bonds)}, '
                f'dd_qubits={len(self.dd_qubits)}, layout={dict(self.layout)})')


def check_dd_spec(q):
    if not (math.isfinite(q.Jz) and math.isfinite(q.h)):
        raise InvalidTopologyError(f'DD qubit at {q.d} has non-finite parameters')
    if q.Jz <= 0 or q.h <= 0:
        raise InvalidTopologyError(f'DD qubit at {q.d} needs Jz > 0 and h > 0, got Jz={q.Jz}, h={q.h}')


def build_chain(length, J_perp):
    """Uniform open chain with XY coupling J_perp and no Ising couplings or fields."""

    if length < 2:
        raise InvalidTopologyError(f'A chain needs at least 2 sites, got {length}')
    if J_perp == 0:
        raise InvalidTopologyError('Chain coupling J_perp must be nonzero')

    bonds = [(i, i + 1, J_perp, 0.0) for i in range(length - 1)]
    return SpinNetwork(length, bonds, regions={'chain': range(length)},
                       layout={'kind': 'chain', 'J_perp': float(J_perp)})


def embed_dd_qubit(net, position, Jz, h):
    """Turn the bond (position, position+1) into a DD qubit.

    The bond loses its XY coupling and gets Ising coupling Jz, both sites get the
    field h added.
    """

    d = int(position)
    if not (0 <= d and d + 1 < net.n_sites):
        raise InvalidTopologyError(f'DD position {d} needs sites {d} and {d + 1} inside the network')
    if net.bond(d, d + 1) is None:
        raise InvalidTopologyError(f'Sites {d} and {d + 1} are not bonded')
    if net.dd_sites & {d, d + 1}:
        raise InvalidTopologyError(f'DD qubit at {d} would share a site with an existing DD qubit')

    spec = DDQubitSpec(d, d + 1, float(Jz), float(h))
    check_dd_spec(spec)

    bonds = [Bond(b.i, b.j, 0.0, spec.Jz) if (b.i, b.j) == (d, d + 1) else b for b in net.bonds]
    fields = dict(net.fields)
    for site in (d, d + 1):
        fields[site] = fields.get(site, 0.0) + spec.h

    return net.replace(bonds=bonds, fields=fields, dd_qubits=net.dd_qubits + (spec,))


def build_chain_with_dd(left, right, J_perp, Jz, h):
    """Chain of `left` sites, a DD qubit, then `right` sites."""

    net = embed_dd_qubit(build_chain(left + 2 + right, J_perp), left, Jz, h)
    regions = dict(net.regions)
    regions.update({
        'left': range(left),
        'dd': (left, left + 1),
        'right': range(left + 2, left + 2 + right),
    })
    return net.replace(regions=regions)


class SplitterSpec(object):
    """Geometry of a splitter network.

    kind: 'Y' (two arms, node couplings alpha and beta) or 'OneToN' (n arms, all node
    couplings 1/sqrt(n)).
    lead_length: sites of the input lead, its last site is the input node.
    arm_lengths: one length for all arms or a length per arm.
    output_length: 0 builds a star (single node); otherwise the arms join again at
    the first site of an output lead of this length.
    alpha_out, beta_out: couplings of the output node for 'Y' (default alpha, beta).
    """

    def __init__(self, kind, lead_length, arm_lengths, output_length=0, alpha=None, beta=None,
                 alpha_out=None, beta_out=None, n=None, arm_labels=None, J_perp=1.0):
        if kind not in ('Y', 'OneToN'):
            raise InvalidTopologyError(f'Unknown splitter kind {kind!r}')
        self.kind = kind

        if kind == 'Y':
            if alpha is None or beta is None:
                raise InvalidTopologyError('Y splitter needs alpha and beta')
            self.n = 2
            alpha_out = alpha if alpha_out is None else alpha_out
            beta_out = beta if beta_out is None else beta_out
            for a, b in ((alpha, beta), (alpha_out, beta_out)):
                check_normalized(a, b)
            self.couplings_in = (float(alpha), float(beta))
            self.couplings_out = (float(alpha_out), float(beta_out))
        else:
            if n is None or n < 2:
                raise InvalidTopologyError(f'1xn splitter needs n >= 2, got {n}')
            self.n = int(n)
            c = 1 / math.sqrt(self.n)
            self.couplings_in = (c,) * self.n
            self.couplings_out = (c,) * self.n

        if arm_labels is None:
            arm_labels = tuple(string.ascii_uppercase[:self.n])
        if len(arm_labels) != self.n or len(set(arm_labels)) != self.n:
            raise InvalidTopologyError(f'Need {self.n} distinct arm labels, got {arm_labels}')
        self.arm_labels = tuple(arm_labels)

        if np.isscalar(arm_lengths):
            arm_lengths = (arm_lengths,) * self.n
        if len(arm_lengths) != self.n or any(length < 1 for length in arm_lengths):
            raise InvalidTopologyError(f'Need {self.n} positive arm lengths, got {arm_lengths}')
        self.arm_lengths = tuple(int(length) for length in arm_lengths)

        if lead_length < 1 or output_length < 0:
            raise InvalidTopologyError('Lead length must be >= 1 and output length >= 0')
        self.lead_length = int(lead_length)
        self.output_length = int(output_length)
        self.J_perp = float(J_perp)


def check_normalized(alpha, beta):
    if abs(alpha ** 2 + beta ** 2 - 1) > NORMALIZATION_TOLERANCE:
        raise UnnormalizedSplitterError(
            f'Splitter parameters must satisfy alpha^2 + beta^2 = 1, got alpha={alpha}, beta={beta}')


def build_splitter_network(spec, dd_placements=()):
    """Build a star (single node) or theta (two nodes and output lead) network.

    Sites are numbered lead first (input node = last lead site), then arm by arm in
    label order starting next to the input node, then the output lead (output node
    = its first site). Regions: 'lead', 'arm:<label>', 'out', 'node:in', 'node:out'.
    """

    J = spec.J_perp
    bonds = []
    regions = {}

    lead = list(range(spec.lead_length))
    bonds += [(i, i + 1, J, 0.0) for i in lead[:-1]]
    node_in = lead[-1]
    regions['lead'] = lead
    regions['node:in'] = (node_in,)

    cursor = spec.lead_length
    arms = {}
    for label, length in zip(spec.arm_labels, spec.arm_lengths):
        arm = list(range(cursor, cursor + length))
        cursor += length
        arms[label] = arm
        regions[f'arm:{label}'] = arm
        bonds += [(i, i + 1, J, 0.0) for i in arm[:-1]]

    for label, c in zip(spec.arm_labels, spec.couplings_in):
        bonds.append((node_in, arms[label][0], c * J, 0.0))

    out = []
    if spec.output_length > 0:
        out = list(range(cursor, cursor + spec.output_length))
        cursor += spec.output_length
        bonds += [(i, i + 1, J, 0.0) for i in out[:-1]]
        regions['out'] = out
        regions['node:out'] = (out[0],)
        for label, c in zip(spec.arm_labels, spec.couplings_out):
            bonds.append((arms[label][-1], out[0], c * J, 0.0))

    layout = {
        'kind': 'splitter',
        'splitter': spec.kind,
        'n': spec.n,
        'arm_labels': spec.arm_labels,
        'lead_length': spec.lead_length,
        'arm_lengths': spec.arm_lengths,
        'output_length': spec.output_length,
        'couplings_in': spec.couplings_in,
        'couplings_out': spec.couplings_out,
        'J_perp': J,
    }
    net = SpinNetwork(cursor, bonds, regions=regions, layout=layout)

    segments = dict(arms)
    if out:
        segments['out'] = out
    for placement in dd_placements:
        if placement.arm not in segments:
            raise InvalidTopologyError(f'DD placement in unknown arm {placement.arm!r}')
        segment = segments[placement.arm]
        # the DD needs a regular site on both sides inside the same arm
        if not 1 <= placement.offset <= len(segment) - 3:
            raise InvalidTopologyError(
                f'DD placement at offset {placement.offset} is outside arm {placement.arm} '
                f'(valid offsets 1..{len(segment) - 3})')
        net = embed_dd_qubit(net, segment[placement.offset], placement.Jz, placement.h)

    return net

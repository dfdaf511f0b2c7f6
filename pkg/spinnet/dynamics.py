"""Wave packets, time evolution and region measurements."""
import logging
import math
from collections import namedtuple

import lz4.frame
import numpy as np
import pandas as pd
import scipy.linalg
from scipy.special import jv

from spinnet import (ConvergenceError, DimensionMismatchError, InvalidTopologyError, PropagationError,
                     SectorError, ZeroProbabilityError, format_frame)
from spinnet.hilbert import DENSE_LIMIT, NORM_TOLERANCE, StateVector, check_same_basis

METHODS = ('chebyshev', 'krylov', 'dense-expm')
MAX_MATVECS = 10 ** 6
TRUNCATION_WARNING = 1e-8
# Chebyshev steps are split so that half_width * dt stays below this value
CHEBYSHEV_MAX_ARGUMENT = 400.0
KRYLOV_DIM = 30


class PacketSpec(object):
    """Gaussian single-flip wave packet on an ordered path of sites.

    alpha: inverse width, 0 < alpha < 2.
    center: packet center as a coordinate along the support (0 = first support site).
    momentum: k0 in radians per site; the packet moves towards increasing support
    coordinates for k0 = pi/2 when J_perp > 0.
    support: ordered site ids forming a path.
    """

    def __init__(self, alpha, center, momentum=math.pi / 2, support=()):
        if not 0 < alpha < 2:
            raise SectorError(f'Packet alpha must lie in (0, 2), got {alpha}')
        if len(support) == 0 or len(set(support)) != len(support):
            raise SectorError('Packet support must be a non-empty list of distinct sites')

        self.alpha = float(alpha)
        self.center = float(center)
        self.momentum = float(momentum)
        self.support = tuple(int(s) for s in support)

    def check_path(self, net):
        for a, b in zip(self.support[:-1], self.support[1:]):
            if net.bond(a, b) is None:
                raise InvalidTopologyError(f'Packet support is not a path: sites {a} and {b} are not bonded')

    def replace(self, **changes):
        arguments = {'alpha': self.alpha, 'center': self.center,
                     'momentum': self.momentum, 'support': self.support}
        arguments.update(changes)
        return PacketSpec(**arguments)

    def __repr__(self):
        return (f'PacketSpec(alpha={self.alpha}, center={self.center}, momentum={self.momentum}, '
                f'support={self.support[0]}..{self.support[-1]})')


def packet_tail(alpha, eps=1e-8):
    """Smallest distance from the center where |amplitude|^2 drops below eps."""

    return int(math.ceil(math.sqrt(math.log(1 / eps)) / alpha))


def group_velocity(alpha, J_perp=1.0):
    """Mean group velocity of a k0 = pi/2 packet, |J_perp| <sin k> = |J_perp| exp(-alpha^2/4)."""

    return abs(J_perp) * math.exp(-alpha ** 2 / 4)


def forward_momentum(J_perp=1.0):
    """k0 that moves a packet towards increasing support coordinates (v = J_perp sin k0)."""

    return math.pi / 2 if J_perp > 0 else -math.pi / 2


def transit_time(hops, alpha, J_perp=1.0):
    return hops / group_velocity(alpha, J_perp)


def make_packet(basis, spec, frozen_flips=(), net=None):
    """Packet amplitudes exp(-alpha^2 (j - center)^2 / 2 + i k0 j) on the support,
    with the frozen flips added to every configuration. Normalized numerically.
    """

    frozen = tuple(sorted(set(int(s) for s in frozen_flips)))
    if set(frozen) & set(spec.support):
        raise SectorError('Frozen flips overlap the packet support')
    if basis.k != 1 + len(frozen):
        raise SectorError(f'Basis has k={basis.k}, packet with {len(frozen)} frozen flips needs k={1 + len(frozen)}')
    if net is not None:
        spec.check_path(net)

    coordinates = np.arange(len(spec.support), dtype=float)
    envelope = np.exp(-0.5 * spec.alpha ** 2 * (coordinates - spec.center) ** 2)

    # weight of the untruncated packet, summed far beyond the support
    reach = int(math.ceil(40 / spec.alpha))
    wide = np.arange(math.floor(spec.center) - reach, math.ceil(spec.center) + reach + 1, dtype=float)
    full_weight = np.sum(np.exp(-spec.alpha ** 2 * (wide - spec.center) ** 2))
    inside = np.sum(envelope ** 2)
    truncated = 1 - inside / full_weight

    warnings = []
    if truncated > TRUNCATION_WARNING:
        message = f'Packet support too short: {truncated:.2e} of the norm is truncated'
        logging.warning(message)
        warnings.append(message)
    if inside == 0:
        raise SectorError('Packet has no weight on its support')

    configurations = np.column_stack(
        [np.array(spec.support, dtype=np.int64)] + [np.full(len(spec.support), s, dtype=np.int64) for s in frozen])
    configurations.sort(axis=1)

    amplitudes = np.zeros(basis.size, dtype=np.complex128)
    amplitudes[basis.rank(configurations)] = envelope * np.exp(1j * spec.momentum * coordinates) / math.sqrt(inside)

    return StateVector(basis, amplitudes, warnings=warnings)


class Propagator(object):
    """Applies exp(-iHt) to states.

    method: 'chebyshev' (Bessel-weighted Chebyshev series on the Gershgorin-rescaled
    spectrum), 'krylov' (Lanczos with adaptive sub-steps) or 'dense-expm' (cached
    eigendecomposition, dimension <= DENSE_LIMIT).
    dt: optional upper bound on the step length.
    max_matvecs: per evolve call guard on matrix-vector products.
    """

    def __init__(self, H, method='chebyshev', dt=None, tolerance=1e-10, max_matvecs=MAX_MATVECS,
                 krylov_dim=KRYLOV_DIM):
        if method not in METHODS:
            raise PropagationError(f'Unknown propagation method {method!r}, use one of {METHODS}')

        self.H = H
        self.method = method
        self.dt = dt
        self.tolerance = tolerance
        self.max_matvecs = max_matvecs
        self.krylov_dim = krylov_dim
        self.matvecs = 0
        self.last_norm_drift = 0.0

        if method == 'chebyshev':
            lower, upper = H.gershgorin_bounds()
            self.center = (upper + lower) / 2
            self.half_width = max((upper - lower) / 2, 1e-12) * (1 + 1e-9)
        elif method == 'krylov':
            self._krylov_tau = None
        else:
            if H.dim > DENSE_LIMIT:
                raise PropagationError(f'dense-expm is limited to dimension {DENSE_LIMIT}, got {H.dim}')
            self._eigenvalues, self._eigenvectors = H.eigh()

    def _dot(self, amplitudes):
        self.matvecs += 1
        if self.matvecs > self.max_matvecs:
            raise ConvergenceError(f'Exceeded {self.max_matvecs} matrix-vector products in one evolve call')
        return self.H.dot(amplitudes)

    def evolve(self, v, t, observer=None, sample_every=None):
        """Return exp(-iHt) v.

        observer: optional callable(time, StateVector) called at t=0 and every
        sample_every time units (and at the final time).
        """

        if v.basis.size != self.H.dim:
            raise DimensionMismatchError(f'State dimension {v.basis.size} != operator dimension {self.H.dim}')
        if self.H.basis is not None:
            check_same_basis(v.basis, self.H.basis)

        self.matvecs = 0
        psi = v.amplitudes.copy()
        norm0 = np.linalg.norm(psi)

        checkpoints = [t]
        if observer is not None:
            observer(0.0, v)
            if sample_every is not None and sample_every > 0 and t > 0:
                count = int(math.floor(t / sample_every + 1e-9))
                checkpoints = [sample_every * (i + 1) for i in range(count)]
                if not checkpoints or abs(checkpoints[-1] - t) > 1e-12:
                    checkpoints.append(t)

        elapsed = 0.0
        for checkpoint in checkpoints:
            psi = self._advance(psi, checkpoint - elapsed)
            elapsed = checkpoint
            if observer is not None:
                observer(elapsed, StateVector(v.basis, psi, unnormalized=True))

        drift = abs(np.linalg.norm(psi) - norm0)
        self.last_norm_drift = float(drift)
        if drift > NORM_TOLERANCE * max(1.0, norm0):
            raise ConvergenceError(f'Norm drift {drift:.3e} exceeds {NORM_TOLERANCE} after t={t}')

        logging.debug(f'evolve t={t} method={self.method} matvecs={self.matvecs} drift={drift:.2e}')
        return StateVector(v.basis, psi, unnormalized=v.unnormalized, warnings=v.warnings)

    def _advance(self, psi, duration):
        if duration == 0:
            return psi
        if self.method == 'dense-expm':
            return self._dense_step(psi, duration)
        if self.method == 'chebyshev':
            max_step = CHEBYSHEV_MAX_ARGUMENT / self.half_width
            if self.dt is not None:
                max_step = min(max_step, self.dt)
            steps = int(math.ceil(abs(duration) / max_step))
            for _ in range(steps):
                psi = self._chebyshev_step(psi, duration / steps)
            return psi
        return self._krylov_advance(psi, duration)

    def _dense_step(self, psi, duration):
        coefficients = self._eigenvectors.conj().T @ psi
        return self._eigenvectors @ (np.exp(-1j * self._eigenvalues * duration) * coefficients)

    def _chebyshev_order(self, x):
        eps = self.tolerance * 1e-4
        ks = np.arange(int(abs(x) + 10 * abs(x) ** (1 / 3) + 40))
        coefficients = jv(ks, abs(x))
        significant = np.flatnonzero(np.abs(coefficients) > eps)
        return max(int(significant[-1]) + 1 if len(significant) else 1, 1)

    def _scaled_dot(self, amplitudes):
        return (self._dot(amplitudes) - self.center * amplitudes) / self.half_width

    def _chebyshev_step(self, psi, dt):
        x = self.half_width * dt
        order = self._chebyshev_order(x)
        coefficients = jv(np.arange(order + 1), x)

        phi_prev = psi
        phi = self._scaled_dot(psi)
        result = coefficients[0] * psi + 2 * (-1j) * coefficients[1] * phi
        phase = -1j
        for k in range(2, order + 1):
            phi_next = 2 * self._scaled_dot(phi) - phi_prev
            phase *= -1j
            result += (2 * coefficients[k] * phase) * phi_next
            phi_prev, phi = phi, phi_next

        return np.exp(-1j * self.center * dt) * result

    def _lanczos(self, psi):
        beta0 = np.linalg.norm(psi)
        m = min(self.krylov_dim, self.H.dim)
        V = np.zeros((len(psi), m + 1), dtype=np.complex128)
        V[:, 0] = psi / beta0
        alphas, betas = [], []
        for j in range(m):
            w = self._dot(V[:, j])
            a = np.vdot(V[:, j], w).real
            alphas.append(a)
            w = w - a * V[:, j]
            if j > 0:
                w = w - betas[j - 1] * V[:, j - 1]
            # full reorthogonalization
            w = w - V[:, :j + 1] @ (V[:, :j + 1].conj().T @ w)
            b = np.linalg.norm(w)
            if b < 1e-14 * max(1.0, abs(a)):
                return V[:, :j + 1], np.array(alphas), np.array(betas), 0.0, beta0
            betas.append(b)
            V[:, j + 1] = w / b
        return V[:, :m], np.array(alphas), np.array(betas[:m - 1]), betas[m - 1], beta0

    def _krylov_advance(self, psi, duration):
        sign = 1.0 if duration > 0 else -1.0
        remaining = abs(duration)
        while remaining > 0:
            V, alphas, betas, beta_last, beta0 = self._lanczos(psi)
            if len(alphas) == 1:
                evals, evecs = alphas, np.ones((1, 1))
            else:
                evals, evecs = scipy.linalg.eigh_tridiagonal(alphas, betas)

            tau = remaining if self._krylov_tau is None else min(remaining, self._krylov_tau)
            if self.dt is not None:
                tau = min(tau, self.dt)
            while True:
                c = evecs @ (np.exp(-1j * sign * evals * tau) * evecs[0, :])
                error = beta_last * abs(c[-1])
                if error <= 0.1 * self.tolerance:
                    break
                tau /= 2
                if tau < 1e-12:
                    raise ConvergenceError('Krylov step size underflow, increase krylov_dim')

            psi = beta0 * (V @ c)
            remaining -= tau
            if remaining < 1e-14:
                remaining = 0.0
            self._krylov_tau = 2 * tau

        return psi


def evolve(prop, v, t, observer=None, sample_every=None):
    return prop.evolve(v, t, observer=observer, sample_every=sample_every)


def energy_drift(H, before, after):
    """|<H>(after) - <H>(before)| relative to the largest matrix entry of H."""

    e0 = np.vdot(before.amplitudes, H.dot(before.amplitudes)).real
    e1 = np.vdot(after.amplitudes, H.dot(after.amplitudes)).real
    return abs(e1 - e0) / max(H.max_abs(), 1e-300)


SectorClassification = namedtuple(
    'SectorClassification', ['register', 'valid', 'mobile', 'doubly_occupied'])


def classify_configurations(basis, net):
    """Describe every state of the basis in terms of DD registers and mobile flips.

    register: integer whose bit for DD qubit q (most significant first, in
    net.dd_qubits order) is 1 when the flip sits on its left site d.
    valid: every DD qubit holds exactly one flip.
    mobile: site of the single flip outside all DD qubits, -1 when there is not
    exactly one.
    doubly_occupied: some DD qubit has both sites flipped.
    """

    states = basis.states
    n_dd = len(net.dd_qubits)
    register = np.zeros(basis.size, dtype=np.int64)
    valid = np.ones(basis.size, dtype=bool)
    doubly = np.zeros(basis.size, dtype=bool)

    for q, spec in enumerate(net.dd_qubits):
        left = basis.occupation(spec.d)
        right = basis.occupation(spec.d_plus_1)
        valid &= left ^ right
        doubly |= left & right
        register |= left.astype(np.int64) << (n_dd - 1 - q)

    dd_sites = np.array(sorted(net.dd_sites), dtype=np.int64)
    if basis.k > 0:
        outside = ~np.isin(states, dd_sites)
        count = outside.sum(axis=1)
        mobile = np.where(count == 1, np.where(outside, states, 0).sum(axis=1), -1)
    else:
        mobile = np.full(basis.size, -1, dtype=np.int64)

    return SectorClassification(register, valid, mobile, doubly)


class RegionProjector(object):
    """Diagonal projector on the configuration basis, stored as a boolean mask."""

    def __init__(self, basis, mask, name=''):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (basis.size,):
            raise DimensionMismatchError(f'Projector mask of shape {mask.shape} for basis size {basis.size}')
        self.basis = basis
        self.mask = mask
        self.name = name

    @classmethod
    def full(cls, basis):
        return cls(basis, np.ones(basis.size, dtype=bool), 'full')

    @classmethod
    def from_predicate(cls, basis, predicate, name=''):
        """predicate receives the flipped sites of a configuration as a tuple."""

        return cls(basis, np.fromiter((bool(predicate(c)) for c in basis), dtype=bool, count=basis.size), name)

    @classmethod
    def mobile_in(cls, basis, net, sites, register=None, classification=None, name=''):
        """Mobile flip on one of `sites`, every DD qubit singly occupied and, when
        given, the DD register equal to `register`."""

        classification = classification or classify_configurations(basis, net)
        mask = classification.valid & np.isin(classification.mobile, np.asarray(sites, dtype=np.int64))
        if register is not None:
            mask &= classification.register == register
        return cls(basis, mask, name)

    def complement(self):
        return RegionProjector(self.basis, ~self.mask, f'not {self.name}')

    def __or__(self, other):
        check_same_basis(self.basis, other.basis)
        return RegionProjector(self.basis, self.mask | other.mask, f'{self.name} | {other.name}')

    def __and__(self, other):
        check_same_basis(self.basis, other.basis)
        return RegionProjector(self.basis, self.mask & other.mask, f'{self.name} & {other.name}')

    def apply(self, amplitudes):
        return np.where(self.mask, amplitudes, 0)

    def __repr__(self):
        return f'RegionProjector({self.name!r}, rank={int(self.mask.sum())})'


def region_probability(v, P):
    if v.basis.size != P.basis.size:
        raise DimensionMismatchError(f'State dimension {v.basis.size} != projector dimension {P.basis.size}')
    return float(np.sum(np.abs(v.amplitudes[P.mask]) ** 2))


def project_and_renormalize(v, P):
    """Post-selected state P v / |P v| and its probability |P v|^2."""

    probability = region_probability(v, P)
    if probability <= 0:
        raise ZeroProbabilityError(f'Projection on {P.name or "region"} has zero probability')

    amplitudes = P.apply(v.amplitudes) / math.sqrt(probability)
    return StateVector(v.basis, amplitudes, warnings=v.warnings), probability


def site_densities(v):
    """Probability that each site is flipped."""

    basis = v.basis
    if basis.k == 0:
        return np.zeros(basis.n_sites)
    weights = np.repeat(np.abs(v.amplitudes) ** 2, basis.k)
    return np.bincount(basis.states.ravel(), weights=weights, minlength=basis.n_sites)


def packet_moments(v, support):
    """Mean and standard deviation of the flip position along `support`
    (single-flip states)."""

    density = site_densities(v)[list(support)]
    weight = density.sum()
    coordinates = np.arange(len(support))
    mean = float(np.sum(coordinates * density) / weight)
    width = float(math.sqrt(np.sum((coordinates - mean) ** 2 * density) / weight))
    return mean, width


TRAJECTORY_COLUMNS = ['t [1/J_perp]', 'site', 'density [prob]']


class TrajectoryRecorder(object):
    """Observer for Propagator.evolve collecting per-site flip densities."""

    def __init__(self, sites=None):
        self.sites = None if sites is None else tuple(sites)
        self.rows = []

    def __call__(self, t, v):
        density = site_densities(v)
        sites = range(len(density)) if self.sites is None else self.sites
        for site in sites:
            self.rows.append((float(t), int(site), float(density[site])))

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=TRAJECTORY_COLUMNS)


def write_trajectory(frame, path, compress=False):
    """Write a trajectory table, lz4-frame compressed when compress is set."""

    text = format_frame(frame).to_csv(index=False)
    if compress:
        with lz4.frame.open(path, 'wb') as fp:
            fp.write(text.encode('utf-8'))
    else:
        with open(path, 'w') as fp:
            fp.write(text)
    return path


def read_trajectory(path):
    if path.endswith('.lz4'):
        with lz4.frame.open(path, 'rb') as fp:
            return pd.read_csv(fp)
    return pd.read_csv(path)

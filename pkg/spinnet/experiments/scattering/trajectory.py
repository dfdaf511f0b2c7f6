import argparse
import logging
import math
import os
import sys

from spinnet import BaseExperiment, ConfigError
from spinnet.config import load_config
from spinnet.dynamics import (PacketSpec, Propagator, TrajectoryRecorder, forward_momentum, make_packet,
                              packet_moments, read_trajectory, write_trajectory)
from spinnet.hilbert import SectorBasis, assemble_hamiltonian
from spinnet.network import SplitterSpec, build_chain, build_chain_with_dd, build_splitter_network

NAME = 'scattering.trajectory'

UNIT_TEST_OVERRIDES = [
    'evolve:kind=dd-chain',
    'evolve:sites=80', 'evolve:dd_position=40', 'evolve:center=20',
    'evolve:duration=40', 'evolve:sample_every=10',
    'evolve:compress=true',
]


def trajectory_setup(evolve, J_perp, alpha, momentum):
    """Network, sector, packet and frozen flips for an evolve run.

    chain: uniform chain of `sites` sites.
    dd-chain: `dd_position` sites, a DD qubit in |0>, then the rest of the sites.
    splitter: balanced Y star with a lead and two arms of `sites` sites each.
    The packet runs on the first segment with its center at `center`. A null
    momentum moves it away from the first site whatever the sign of J_perp.
    """

    kind, sites = evolve['kind'], evolve['sites']
    frozen = ()
    if kind == 'chain':
        net = build_chain(sites, J_perp)
        support = range(sites)
    elif kind == 'dd-chain':
        position = evolve['dd_position']
        if position > sites - 3:
            raise ConfigError(f'evolve:dd_position={position} leaves no chain right of the DD qubit')
        net = build_chain_with_dd(position, sites - position - 2, J_perp, evolve['Jz'], evolve['h'])
        support = net.region('left')
        frozen = (position + 1,)
    else:
        balanced = 1 / math.sqrt(2)
        net = build_splitter_network(SplitterSpec('Y', sites, sites, alpha=balanced, beta=balanced,
                                                  J_perp=J_perp))
        support = net.region('lead')

    if evolve['center'] > len(support) - 1:
        raise ConfigError(f'evolve:center={evolve["center"]} lies beyond the {len(support)} packet sites')

    if momentum is None:
        momentum = forward_momentum(J_perp)
    packet = PacketSpec(alpha, evolve['center'], momentum, support)
    return net, SectorBasis(net.n_sites, 1 + len(frozen)), packet, frozen


class Experiment(BaseExperiment):
    def run(self):
        """Record per-site flip densities of a packet moving through a chain, a DD
        chain or a splitter."""

        evolve = self.config['evolve']
        net, basis, packet, frozen = trajectory_setup(
            evolve, self.config['geometry']['J_perp'], self.config['packet']['alpha'],
            self.config['packet']['momentum'])

        self.create_output_dir()

        H = assemble_hamiltonian(net, basis)
        initial = make_packet(basis, packet, frozen_flips=frozen, net=net)
        propagator = Propagator(H, **dict(self.config['propagator']))
        recorder = TrajectoryRecorder()
        final = propagator.evolve(initial, evolve['duration'], observer=recorder,
                                  sample_every=evolve['sample_every'])

        filename = 'trajectory.csv.lz4' if evolve['compress'] else 'trajectory.csv'
        path = write_trajectory(recorder.to_frame(), self.get_output_dir() + filename, evolve['compress'])
        self.outputs.append(path)
        logging.info(f'Wrote {len(recorder.rows)} trajectory rows to {path}')

        summary = {
            'kind': evolve['kind'],
            'n_sites': net.n_sites,
            'sector_size': basis.size,
            'duration': evolve['duration'],
            'norm_drift': propagator.last_norm_drift,
            'packet': {'alpha': packet.alpha, 'center': packet.center, 'momentum': packet.momentum},
            'warnings': list(initial.warnings),
        }
        if not frozen:
            summary['final_moments'] = packet_moments(final, packet.support)
        self.write_summary(summary)

    def unit_test(self, logging):
        super().unit_test(logging)

        frame = read_trajectory(self.get_output_dir() + 'trajectory.csv.lz4')
        totals = frame.groupby('t [1/J_perp]')['density [prob]'].sum()
        logging.info(f'Flip count per sample: {totals.to_dict()}')
        # one mobile flip plus the DD flip at every sample
        assert len(totals) == 5
        assert all(abs(total - 2) < 1e-8 for total in totals)


# Main program
def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument('--unit-test', action='store_true')
    parser.add_argument('--config', default='config.json')
    args = parser.parse_args()

    scriptname = os.path.basename(sys.argv[0]).replace('/', '_')[0:-3]
    FORMAT = '%(asctime)s %(levelname)s %(message)s'
    os.makedirs('log', exist_ok=True)
    logging.basicConfig(
        format=FORMAT,
        filename='log/' + scriptname + '.log',
        level=logging.INFO,
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    logging.info(f'Started: {sys.argv}')

    overrides = UNIT_TEST_OVERRIDES if args.unit_test else None
    experiment = Experiment(NAME, load_config(args.config, overrides))
    if args.unit_test:
        experiment.unit_test(logging)
    else:
        experiment.run()
        experiment.close()
    logging.info(f'Finished: {sys.argv}')
    sys.exit(experiment.exit_code)


if __name__ == '__main__':
    main()

import argparse
import logging
import os
import sys

import pandas as pd

from spinnet import BaseExperiment
from spinnet.config import load_config
from spinnet.scattering import ScanGrid, ScatteringSetup, transmission_scan

NAME = 'scattering.transmission_scan'

# Three fields around the resonance of a Jz = 10 DD qubit on the compact geometry
UNIT_TEST_OVERRIDES = [
    'geometry:compact=true',
    'scan:h_min=9.5', 'scan:h_max=10.5', 'scan:h_points=3',
    'scan:jz_min=10', 'scan:jz_max=10', 'scan:jz_points=1',
    'output:cache=false',
]


class Experiment(BaseExperiment):
    def run(self):
        """Scan the transmission of a packet through a DD qubit over the (h, Jz) grid
        and write the surface, the resonance argmax table and a summary."""

        scan = self.config['scan']
        grid = ScanGrid.from_config(scan)
        setup = ScatteringSetup.from_config(self.config)
        packet = setup.packet(self.config['packet']['alpha'], self.config['packet']['momentum'])

        self.create_output_dir()
        cache_dir = self.create_tmp_dir() if self.config['output']['cache'] else None

        surface = transmission_scan(grid, packet, setup, dd_state=scan['dd_state'],
                                    workers=self.config['spinnet']['workers'],
                                    propagator=dict(self.config['propagator']),
                                    cache_dir=cache_dir, progress=sys.stderr.isatty())

        frame = surface.to_frame()
        self.write_csv(frame, 'surface.csv')
        argmax = surface.argmax_table()
        self.write_csv(argmax, 'argmax.csv')
        if surface.failures:
            self.write_csv(surface.failures_frame(), 'failures.csv')

        fraction = surface.failure_fraction()
        if fraction > scan['max_failure_fraction']:
            logging.error(f'{len(surface.failures)} of {len(grid)} scan points failed ({fraction:.1%})')
            self.exit_code = 1

        self.write_summary({
            'grid': {'h': grid.h_values, 'Jz': grid.jz_values, 'points': len(grid)},
            'packet': {'alpha': packet.alpha, 'momentum': packet.momentum},
            'setup': setup.as_dict(),
            't_final': setup.final_time(packet.alpha),
            'dd_state': scan['dd_state'],
            'failures': len(surface.failures),
            'failure_fraction': fraction,
            'T_max': float(frame['T [prob]'].max()) if len(frame) else None,
            'resonance_argmax': argmax.to_dict('records'),
        })

    def unit_test(self, logging):
        super().unit_test(logging)

        argmax = pd.read_csv(self.get_output_dir() + 'argmax.csv')
        logging.info(f'Resonance argmax: {argmax.to_dict("records")}')
        assert len(argmax) == 1
        assert argmax['h_argmax [J_perp]'][0] == 10.0
        assert argmax['T_max [prob]'][0] >= 0.98


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

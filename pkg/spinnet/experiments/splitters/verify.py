import argparse
import logging
import os
import sys

import pandas as pd

from spinnet import BaseExperiment
from spinnet.config import load_config
from spinnet.splitter import run_identity_suite

NAME = 'splitters.verify'

UNIT_TEST_OVERRIDES = ['verify:alpha=0.6', 'verify:beta=0.8', 'verify:ns=[2, 3]', 'verify:dynamical=true']


class Experiment(BaseExperiment):
    def run(self):
        """Algebraic and dynamical checks of the Y and 1xn node matrices."""

        verify = self.config['verify']
        report = run_identity_suite(verify['alpha'], verify['beta'], tuple(verify['ns']),
                                    self.config['packet']['alpha'], verify['dynamical'],
                                    dict(self.config['propagator']))

        self.create_output_dir()
        self.write_csv(report.to_frame(), 'report.csv')
        self.write_text(report.to_text(), 'report.txt')
        self.write_summary({
            'passed': report.passed,
            'identities': len(report.rows),
            'failures': report.failures,
            'max_deviation': report.max_deviation(),
            'notes': report.notes,
        })

        if not report.passed:
            logging.error(f'Failed identities: {report.failures}')
            self.exit_code = 1

    def unit_test(self, logging):
        super().unit_test(logging)

        frame = pd.read_csv(self.get_output_dir() + 'report.csv')
        logging.info(f'{len(frame)} identities checked')
        assert frame['passed'].all()
        assert {'unitarity:Y', 'reduction:1x2', 'decomposition:1x3'} <= set(frame['identity'])


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

import argparse
import logging
import os
import sys

import pandas as pd

from spinnet import BaseExperiment
from spinnet.config import load_config
from spinnet.protocol import curve_claims, probability_curves

NAME = 'protocols.curves'

UNIT_TEST_OVERRIDES = [
    'curves:kind="both"', 'curves:T_values=[1.0, 0.9, 0.8, 0.7]', 'curves:n_min=2', 'curves:n_max=8',
]


class Experiment(BaseExperiment):
    def run(self):
        """GHZ and W success probabilities over the configured T values and register
        sizes."""

        curves = self.config['curves']
        frame = probability_curves(curves['kind'], curves['T_values'],
                                   range(curves['n_min'], curves['n_max'] + 1))

        self.create_output_dir()
        self.write_csv(frame, 'curves.csv')

        claims = curve_claims(frame)
        for claim in claims:
            logging.info(f'{claim.name}: {"passed" if claim.passed else "FAILED"} ({claim.detail})')
        self.write_summary({
            'kind': curves['kind'],
            'T_values': curves['T_values'],
            'n_range': [curves['n_min'], curves['n_max']],
            'claims': [claim._asdict() for claim in claims],
        })

    def unit_test(self, logging):
        super().unit_test(logging)

        frame = pd.read_csv(self.get_output_dir() + 'curves.csv')
        top = frame[(frame['T [prob]'] == 1.0) & (frame['n'] == 2)]
        logging.info(f'T=1, n=2 row: {top.to_dict("records")}')
        assert len(frame) == 4 * 7
        assert top['P_GHZ [prob]'].iloc[0] == 0.5
        assert top['P_W [prob]'].iloc[0] == 0.5


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

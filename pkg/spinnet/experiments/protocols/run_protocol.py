import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd

from spinnet import BaseExperiment, DynamicsRefusedError, ZeroProbabilityError
from spinnet.config import load_config
from spinnet.protocol import (ProtocolConfig, ghz_optimality_search, optimal_ghz_parameters,
                              optimal_ghz_success_probability, run_protocol)

NAME = 'protocols.run_protocol'

UNIT_TEST_OVERRIDES = [
    'protocol:kind="GHZ"', 'protocol:n=3', 'protocol:engine="closed-form"',
    'protocol:t_override=0.9', 'protocol:optimal=true',
]

REGISTER_COLUMNS = ['register', 'engine', 'population [prob]']
BRANCH_COLUMNS = ['engine', 'branch', 'probability [prob]']


def register_frame(results):
    """Post-selected register populations per engine."""

    records = []
    for engine in ('closed-form', 'dynamics'):
        if engine not in results:
            continue
        outcome = results[engine]
        for register, population in enumerate(np.real(np.diag(outcome.density))):
            records.append((format(register, f'0{outcome.n}b'), engine, float(population)))
    return pd.DataFrame(records, columns=REGISTER_COLUMNS)


def branch_frame(results):
    records = [(engine, branch, probability)
               for engine in ('closed-form', 'dynamics') if engine in results
               for branch, probability in sorted(results[engine].branches.items())]
    return pd.DataFrame(records, columns=BRANCH_COLUMNS)


class Experiment(BaseExperiment):
    def run(self):
        """Run the GHZ or W interferometer with the configured engines and write the
        register populations, the branch ledger and a summary."""

        cfg = ProtocolConfig.from_config(self.config)
        self.create_output_dir()

        summary = {'config': cfg.as_dict(), 'engine': cfg.engine}
        try:
            results = run_protocol(cfg)
        except DynamicsRefusedError as e:
            logging.error(e.message)
            summary['refused'] = e.message
            self.exit_code = 1
            results = run_protocol(cfg.replace(engine='closed-form')) if cfg.engine == 'both' else {}

        for engine in ('closed-form', 'dynamics'):
            if engine in results:
                summary[engine] = results[engine].to_summary()
                logging.info(f'{results[engine]}')
        if 'consistency' in results:
            summary['consistency'] = results['consistency']

        if cfg.kind == 'GHZ' and 'closed-form' in results:
            t = np.prod([t for t, _ in results['closed-form'].transmissions])
            try:
                search = ghz_optimality_search(abs(t), 1, seed=self.config['spinnet']['seed'])
                summary['optimality'] = {
                    'optimal_parameters': optimal_ghz_parameters(abs(t), 1),
                    'optimal_probability': optimal_ghz_success_probability(abs(t), 1),
                    'search': search._asdict(),
                }
            except ZeroProbabilityError as e:
                logging.warning(e.message)

        if results:
            self.write_csv(register_frame(results), 'register.csv')
            self.write_csv(branch_frame(results), 'branches.csv')
        self.write_summary(summary)

    def unit_test(self, logging):
        super().unit_test(logging)

        frame = pd.read_csv(self.get_output_dir() + 'register.csv', dtype={'register': str})
        populations = dict(zip(frame['register'], frame['population [prob]']))
        logging.info(f'GHZ register populations: {populations}')
        assert abs(populations['000'] - 0.5) < 1e-9
        assert abs(populations['111'] - 0.5) < 1e-9


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

import argparse
import logging
import os
import sys

import pandas as pd

from spinnet import BasePostProcess, format_frame
from spinnet.config import load_config
from spinnet.experiments.protocols.curves import NAME as CURVES_NAME
from spinnet.protocol import curve_claims


class PostProcess(BasePostProcess):
    def run(self):
        """Check the qualitative GHZ/W claims on the curves table."""

        directory = f'{self.output_root}{CURVES_NAME}/'
        claims = curve_claims(pd.read_csv(directory + 'curves.csv'))

        table = pd.DataFrame([claim._asdict() for claim in claims], columns=['name', 'passed', 'detail'])
        path = directory + 'claims.csv'
        format_frame(table).to_csv(path, index=False)

        for claim in claims:
            if not claim.passed:
                logging.error(f'Curve claim failed: {claim.name} ({claim.detail})')
        logging.info(f'{sum(c.passed for c in claims)}/{len(claims)} curve claims hold, written to {path}')
        return claims

    def unit_test(self):
        claims = self.run()
        self.close()
        passed = all(claim.passed for claim in claims)
        print('assertion error ') if not passed else print('assertion success')
        assert len(claims) > 0
        assert passed


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

    post = PostProcess(load_config(args.config))
    if args.unit_test:
        post.unit_test()
    else:
        post.run()
        post.close()
    logging.info(f'Finished: {sys.argv}')


if __name__ == '__main__':
    main()
    sys.exit(0)

import argparse
import logging
import os
import sys

import pandas as pd

from spinnet import BasePostProcess, format_frame
from spinnet.config import load_config
from spinnet.experiments.scattering.transmission_scan import NAME as SCAN_NAME
from spinnet.scattering import resonance_argmax

# Largest distance between the argmax field and Jz accepted as on resonance
RESONANCE_TOLERANCE = 0.25


class PostProcess(BasePostProcess):
    def run(self):
        """Rebuild the per-Jz argmax table from a transmission surface and flag the Jz
        values whose argmax lies off the h = Jz line."""

        directory = f'{self.output_root}{SCAN_NAME}/'
        surface = pd.read_csv(directory + 'surface.csv')
        table = resonance_argmax(surface)
        table['on_resonance'] = table['|h-Jz| [J_perp]'] <= RESONANCE_TOLERANCE

        path = directory + 'resonance.csv'
        format_frame(table).to_csv(path, index=False)
        logging.info(f'Wrote resonance table for {len(table)} Jz values to {path}')

        # Jz = 0 has no DD qubit and no resonance
        off = table[(~table['on_resonance']) & (table['Jz [J_perp]'] > 0)]
        for _, row in off.iterrows():
            logging.warning(f'Jz={row["Jz [J_perp]"]}: maximum transmission at h={row["h_argmax [J_perp]"]}')
        return table

    def unit_test(self):
        table = self.run()
        resonant = table[(table['Jz [J_perp]'] > 0)]
        logging.info(f'{int(resonant["on_resonance"].sum())}/{len(resonant)} Jz values on resonance')
        self.close()
        print('assertion error ') if not resonant['on_resonance'].all() else print('assertion success')
        assert resonant['on_resonance'].all()


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

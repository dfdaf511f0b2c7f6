import importlib
import logging
import os
import sys

import arrow
import pandas as pd

from spinnet import SpinNetError
from spinnet.config import load_config

STATUS_COLUMNS = ['module', 'stage', 'status', 'outputs', 'seconds']


class OutputCountError(SpinNetError):
    pass


def run_experiment(module_name, conf):
    module = importlib.import_module(module_name)
    experiment = module.Experiment(module.NAME, conf)
    experiment.run()
    experiment.close()

    count = experiment.count_outputs()
    if count == 0:
        raise OutputCountError(f'{module.NAME} left no files in {experiment.get_output_dir()}')
    if experiment.exit_code != 0:
        return f'exit code {experiment.exit_code}', count
    return 'OK', count


def run_post(module_name, conf):
    module = importlib.import_module(module_name)
    post = module.PostProcess(conf)
    post.run()
    post.close()
    return 'OK', 0


def run_stage(stage, modules, runner, conf, records):
    logging.warning(f'Stage {stage}: {len(modules)} modules')
    for module_name in modules:
        started = arrow.utcnow()
        logging.warning(f'start {module_name}')
        try:
            status, outputs = runner(module_name, conf)
        except SpinNetError as e:
            logging.error(f'{module_name}: {e.message}')
            status, outputs = f'{type(e).__name__}: {e.message}', 0
        except Exception as e:
            logging.exception(f'{module_name} crashed')
            status, outputs = f'crashed: {e!r}', 0
        seconds = (arrow.utcnow() - started).total_seconds()
        logging.warning(f'end {module_name} ({status}, {seconds:.1f}s)')
        records.append((module_name, stage, status, outputs, seconds))


def main():
    today = arrow.utcnow()
    conf = load_config()

    # one directory per day for logs and the status table
    run_dir = os.path.join(conf['output']['dir'], 'runs', today.format('YYYY/MM/DD'), '')
    os.makedirs(run_dir, exist_ok=True)

    logging.basicConfig(
        format='%(asctime)s %(processName)s %(message)s',
        filename=f'{run_dir}spinnet-{today.format("YYYY-MM-DD")}.log',
        level=logging.WARNING,
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    logging.warning(f'Started: {sys.argv}')

    records = []
    run_stage('experiment', conf['spinnet']['experiments'], run_experiment, conf, records)
    # post scripts read what the experiments wrote, even after a failed experiment
    run_stage('post', conf['spinnet']['post'], run_post, conf, records)

    status = pd.DataFrame(records, columns=STATUS_COLUMNS)
    status.to_csv(f'{run_dir}status.csv', index=False)
    logging.warning('Status:\n' + status.to_string(index=False))

    failed = status[status['status'] != 'OK']
    if len(failed):
        logging.error(f'{len(failed)} of {len(status)} modules failed: {list(failed["module"])}')
    logging.warning(f'Finished: {sys.argv}')
    sys.exit(1 if len(failed) else 0)


if __name__ == '__main__':
    main()

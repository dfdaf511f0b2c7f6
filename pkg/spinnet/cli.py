"""spinnet command line.

    spinnet scan-transmission [--workers N] [--set scan:h_points=81]
    spinnet run-protocol --kind GHZ --n 2 --engine both
    spinnet curves
    spinnet verify
    spinnet evolve --kind dd-chain

Every command reads config.json (or --config), applies --set overrides and writes
its files to <output dir>/<experiment name>/. Exit codes: 0 success, 1 numerical
failure, 2 configuration error.
"""
import argparse
import json
import logging
import os
import sys

from spinnet import ConfigError, SpinNetError
from spinnet.config import DEFAULT_PATH, load_config
from spinnet.experiments.protocols import curves, run_protocol
from spinnet.experiments.scattering import trajectory, transmission_scan
from spinnet.experiments.splitters import verify

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2

FORMAT = '%(asctime)s %(levelname)s %(message)s'


def _run(module, config, output_dir=None, unit_test=False):
    experiment = module.Experiment(module.NAME, config, output_dir)
    if unit_test:
        experiment.unit_test(logging)
    else:
        experiment.run()
        experiment.close()
    return experiment


def cmd_scan_transmission(config, output_dir=None, unit_test=False):
    return _run(transmission_scan, config, output_dir, unit_test)


def cmd_run_protocol(config, output_dir=None, unit_test=False):
    return _run(run_protocol, config, output_dir, unit_test)


def cmd_curves(config, output_dir=None, unit_test=False):
    return _run(curves, config, output_dir, unit_test)


def cmd_verify(config, output_dir=None, unit_test=False):
    return _run(verify, config, output_dir, unit_test)


def cmd_evolve(config, output_dir=None, unit_test=False):
    return _run(trajectory, config, output_dir, unit_test)


# command -> (function, experiment module)
COMMANDS = {
    'scan-transmission': (cmd_scan_transmission, transmission_scan),
    'run-protocol': (cmd_run_protocol, run_protocol),
    'curves': (cmd_curves, curves),
    'verify': (cmd_verify, verify),
    'evolve': (cmd_evolve, trajectory),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=DEFAULT_PATH, help='configuration file (default: config.json)')
    common.add_argument('--set', action='append', default=[], metavar='SECTION:KEY=VALUE',
                        help='override a configuration value, may be repeated')
    common.add_argument('--output-dir', help='root directory for output files')
    common.add_argument('--workers', type=int, help='size of the worker pool')
    common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--unit-test', action='store_true', help='run the reduced self-check of the command')

    parser = argparse.ArgumentParser(prog='spinnet', description='Flying qubits and DD qubits on spin networks.')
    subparsers = parser.add_subparsers(dest='command', required=True)

    subparsers.add_parser('scan-transmission', parents=[common], help='transmission surface T(h, Jz)')

    protocol = subparsers.add_parser('run-protocol', parents=[common], help='GHZ or W generation')
    protocol.add_argument('--kind', type=str.upper, choices=['GHZ', 'W'])
    protocol.add_argument('--n', type=int)
    protocol.add_argument('--engine', choices=['closed-form', 'dynamics', 'both'])

    subparsers.add_parser('curves', parents=[common], help='GHZ and W success probability curves')
    subparsers.add_parser('verify', parents=[common], help='splitter identity suite')

    evolve = subparsers.add_parser('evolve', parents=[common], help='packet trajectory dump')
    evolve.add_argument('--kind', choices=['chain', 'dd-chain', 'splitter'])

    return parser


def overrides_from_args(args):
    """Translate command line options into configuration overrides."""

    overrides = []
    if args.output_dir is not None:
        overrides.append(f'output:dir={json.dumps(args.output_dir)}')
    if args.workers is not None:
        overrides.append(f'spinnet:workers={args.workers}')

    if args.command == 'run-protocol':
        for option, key in (('kind', 'protocol:kind'), ('n', 'protocol:n'), ('engine', 'protocol:engine')):
            value = getattr(args, option)
            if value is not None:
                overrides.append(f'{key}={json.dumps(value)}')
    elif args.command == 'evolve' and args.kind is not None:
        overrides.append(f'evolve:kind={json.dumps(args.kind)}')

    return overrides + list(args.set)


def main(argv=None):
    args = build_parser().parse_args(argv)
    function, module = COMMANDS[args.command]

    os.makedirs('log', exist_ok=True)
    logging.basicConfig(
        format=FORMAT,
        filename=f'log/spinnet-{args.command}.log',
        level=getattr(logging, args.log_level),
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    logging.info(f'Started: {sys.argv if argv is None else argv}')

    overrides = overrides_from_args(args)
    if args.unit_test:
        overrides = list(module.UNIT_TEST_OVERRIDES) + overrides

    try:
        config = load_config(args.config, overrides)
        experiment = function(config, unit_test=args.unit_test)
    except ConfigError as e:
        logging.error(f'Configuration error: {e.message}')
        print(f'spinnet {args.command}: configuration error: {e.message}', file=sys.stderr)
        return EXIT_CONFIG
    except SpinNetError as e:
        logging.exception(f'{args.command} failed')
        print(f'spinnet {args.command}: {e.message}', file=sys.stderr)
        return EXIT_NUMERICAL
    except AssertionError:
        logging.exception(f'{args.command} self-check failed')
        return EXIT_NUMERICAL

    for path in experiment.outputs:
        print(path)
    logging.info(f'Finished: {sys.argv if argv is None else argv} (exit code {experiment.exit_code})')
    return EXIT_NUMERICAL if experiment.exit_code else EXIT_OK

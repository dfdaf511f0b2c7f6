import bz2
import glob
import json
import logging
import math
import os
import pickle
from shutil import rmtree

import arrow

ORG = 'spinnet'
UNITS = 'energies in units of J_perp, times in units of 1/J_perp'

# Values with a smaller magnitude are written in scientific notation
SCIENTIFIC_BELOW = 1e-4


class SpinNetError(Exception):
    def __init__(self, message):
        self.message = message
        super().__init__(self.message)


class InvalidTopologyError(SpinNetError):
    pass


class UnnormalizedSplitterError(SpinNetError):
    pass


class SectorError(SpinNetError):
    pass


class DimensionMismatchError(SpinNetError):
    pass


class NormalizationError(SpinNetError):
    pass


class PropagationError(SpinNetError):
    pass


class ConvergenceError(PropagationError):
    pass


class NotSeparatedError(SpinNetError):
    def __init__(self, message, suggested_time=None):
        self.suggested_time = suggested_time
        super().__init__(message)


class ZeroProbabilityError(SpinNetError):
    pass


class InvalidDensityError(SpinNetError):
    pass


class DynamicsRefusedError(SpinNetError):
    pass


class ConfigError(SpinNetError):
    pass


def format_float(value):
    """Format a float for CSV output.

    Magnitudes below SCIENTIFIC_BELOW use scientific notation, everything else the
    shortest repr that round-trips.
    """

    value = float(value)
    if not math.isfinite(value):
        return str(value)
    if value != 0 and abs(value) < SCIENTIFIC_BELOW:
        return f'{value:.12e}'
    return repr(value)


value_formatters = {
    # counts and site ids are kept as integers
    'n': int,
    'site': int,
    'dd_state': int,
    # pass/fail columns
    'passed': lambda b: 'true' if b else 'false',
}


def format_frame(frame):
    """Return a copy of a pandas DataFrame where every cell is already formatted.

    Columns listed in value_formatters use their formatter, other float columns use
    format_float. Formatting up front keeps CSV output independent of pandas float
    printing options.
    """

    frame = frame.copy()
    for column in frame.columns:
        formatter = value_formatters.get(column)
        if formatter is not None:
            frame[column] = [formatter(x) for x in frame[column]]
        elif frame[column].dtype.kind == 'f':
            frame[column] = [format_float(x) for x in frame[column]]

    return frame


def jsonable(obj):
    """Recursively convert numpy scalars, complex numbers and tuples for json.dump."""

    if isinstance(obj, dict) or hasattr(obj, 'items'):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {'re': obj.real, 'im': obj.imag}
    if hasattr(obj, 'tolist'):
        return jsonable(obj.tolist())
    return obj


class BaseExperiment(object):
    def __init__(self, name, config, output_dir=None):
        """Reference and output directory initialization.

        The experiment name should be unique, it names the output sub-directory.
        """

        self.name = name
        self.config = config
        self.output_root = config['output']['dir'] if output_dir is None else output_dir
        self.outputs = []
        self.exit_code = 0

        self.reference = {
            'reference_name': name,
            'reference_org': ORG,
            'reference_units': UNITS,
            'reference_time': arrow.utcnow().isoformat()
        }

    def get_output_dir(self, root=None):
        """Return the path to the output directory for this experiment.

        The directory may not exist yet.
        """

        assert self.name != ''
        root = self.output_root if root is None else root
        if not root.endswith('/'):
            root += '/'

        return f'{root}{self.name}/'

    def create_output_dir(self):
        """Create the output directory for this experiment. Files left by a previous
        run are deleted.

        return: path to the output directory
        """

        path = self.get_output_dir()

        try:
            os.makedirs(path, exist_ok=False)
        except OSError:
            for file in glob.glob(path + '*'):
                if os.path.isfile(file):
                    os.remove(file)

        return path

    def create_tmp_dir(self):
        """Cache directory kept between runs so interrupted runs can resume."""

        path = f'{self.get_output_dir()}tmp/'
        os.makedirs(path, exist_ok=True)
        return path

    def write_csv(self, frame, filename):
        path = self.get_output_dir() + filename
        format_frame(frame).to_csv(path, index=False)
        self.outputs.append(path)
        logging.info(f'Wrote {len(frame)} rows to {path}')
        return path

    def write_text(self, text, filename):
        path = self.get_output_dir() + filename
        with open(path, 'w') as fp:
            fp.write(text)
        self.outputs.append(path)
        return path

    def write_summary(self, summary, filename='summary.json'):
        summary = dict(summary)
        summary['reference'] = self.reference
        path = self.get_output_dir() + filename
        with open(path, 'w') as fp:
            json.dump(jsonable(summary), fp, indent=2, sort_keys=True)
            fp.write('\n')
        self.outputs.append(path)
        return path

    def run(self):
        raise NotImplementedError

    def count_outputs(self):
        """Count the files currently present in the output directory."""

        return len([f for f in glob.glob(self.get_output_dir() + '*') if os.path.isfile(f)])

    def unit_test(self, logging):
        self.run()
        output_count = self.count_outputs()
        logging.info('Output files after run: %s' % output_count)
        self.close()
        print('assertion failed') if output_count == 0 else print('assertion passed')
        assert output_count > 0
        assert self.exit_code == 0

    def close(self):
        logging.info(f'{self.name}: {len(self.outputs)} output files, exit code {self.exit_code}')


class BasePostProcess(object):
    def __init__(self, config, output_dir=None):
        """Post scripts read the outputs of experiments from output_dir."""

        self.config = config
        self.output_root = config['output']['dir'] if output_dir is None else output_dir
        if not self.output_root.endswith('/'):
            self.output_root += '/'

        self.reference = {
            'reference_name': 'spinnet.post',
            'reference_org': ORG,
            'reference_units': UNITS,
            'reference_time': arrow.utcnow().isoformat()
        }

    def close(self):
        pass


class CacheHandler:
    def __init__(self, dir: str, prefix: str) -> None:
        self.cache_dir = dir
        self.cache_file_prefix = dir + prefix
        self.cache_file_suffix = '.pickle.bz2'

    def cache_file(self, object_name: str) -> str:
        return f'{self.cache_file_prefix}{object_name}{self.cache_file_suffix}'

    def cached_object_exists(self, object_name: str) -> bool:
        return os.path.exists(self.cache_file(object_name))

    def load_cached_object(self, object_name: str):
        with bz2.open(self.cache_file(object_name), 'rb') as f:
            return pickle.load(f)

    def save_cached_object(self, object_name: str, object) -> None:
        with bz2.open(self.cache_file(object_name), 'wb') as f:
            pickle.dump(object, f)

    def clear_cache(self) -> None:
        rmtree(self.cache_dir)

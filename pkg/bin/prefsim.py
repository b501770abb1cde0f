#!/usr/bin/env python

"""Run preference-optimization simulations from the command line.

Set PYPREFSIM_LOGGING to a YAML file holding a ``logging`` section in
:func:`logging.config.dictConfig` form to route the log output.
"""

import logging.config
import os
import sys

import yaml
from pyprefsim.harness import main


def read_logging_config(config_fname):
    """Read and parse the logging config file."""
    with open(config_fname, 'r') as fid:
        config = yaml.load(fid, Loader=yaml.SafeLoader)
    return config['logging']


if __name__ == "__main__":
    log_config = os.getenv('PYPREFSIM_LOGGING')
    if log_config:
        logging.config.dictConfig(read_logging_config(log_config))
    sys.exit(main())

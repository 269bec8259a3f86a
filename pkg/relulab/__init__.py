import os
import json


def getRelulabPath(*subfolder: str) -> str:
    """get the absolute path of the relulab module

    by specifying a subfolder, get the absolute path of that.

    :example:

        >>> getRelulabPath('schemas', 'experiment.json')
        /path/to/relulab/schemas/experiment.json
    """
    path = os.path.split(__file__)[0]
    return os.path.join(path, *subfolder)


EXPERIMENT_SCHEMA_PATH = os.path.join(getRelulabPath('schemas'),
                                      'experiment.json')
MOMENTS_SCHEMA_PATH = os.path.join(getRelulabPath('schemas'),
                                   'moments.json')

DEFAULT_SEED = 0

#: environment variable that caps the number of worker threads (0 = auto).
THREADS_ENV_VAR = 'RELU_LAB_THREADS'

with open(EXPERIMENT_SCHEMA_PATH) as f:
    experimentSchema = json.load(f)

from .log import setupLogging, LogLevels
from .base import (DomainError, UndefinedGradientError,
                   TheoremPreconditionError, DatasetFormatError)

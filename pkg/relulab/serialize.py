"""
relulab.serialize
^^^^^^^^^^^^^^^^^

Reading and writing experiment data:

    * datasets in the plain text format described below,

    * region moments, profiles, run metadata and check reports as JSON,

    * trajectories, profiles, initialization and interpolation results as
      CSV (one header row, one row per record).

The dataset text format is::

    p k n
    z_0 ... z_{pk-1}       <- sample 1
    ...                    <- n lines in total

Each sample line holds the ``p * k`` coordinates patch by patch, i.e. the
``p`` coordinates of patch 0 come first.

JSON files are written with sorted keys and two-space indentation; numpy
arrays, numpy scalars and enums are converted to plain JSON types.
"""
import json
import logging
import os
from enum import Enum
from typing import Any, Dict

import numpy as np
import pandas as pd
from jsonschema import ValidationError, validate

from . import MOMENTS_SCHEMA_PATH
from .base import DatasetFormatError

logger = logging.getLogger(__name__)


def _makeFolder(filePath: str) -> str:
    filePath = os.path.abspath(filePath)
    folder, _ = os.path.split(filePath)
    if not os.path.exists(folder):
        os.makedirs(folder)
    return filePath


def toJsonable(obj: Any) -> Any:
    """Recursively convert numpy and enum values to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): toJsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [toJsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return toJsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


def saveJson(data: Dict[str, Any], filePath: str) -> str:
    """Write ``data`` to ``filePath`` as JSON, creating folders as needed."""
    filePath = _makeFolder(filePath)
    with open(filePath, 'w') as f:
        json.dump(toJsonable(data), f, indent=2, sort_keys=True)
        f.write('\n')
    return filePath


def loadJson(filePath: str) -> Dict[str, Any]:
    with open(filePath, 'r') as f:
        return json.load(f)


def saveFrame(frame: pd.DataFrame, filePath: str) -> str:
    """Write a data frame as CSV without the index column."""
    filePath = _makeFolder(filePath)
    frame.to_csv(filePath, index=False)
    return filePath


# Datasets

def writeDatasetArray(filePath: str, samples: np.ndarray) -> str:
    """Write an ``(n, p, k)`` array in the dataset text format."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3:
        raise DatasetFormatError(f"samples must have shape (n, p, k), got {samples.shape}")
    n, p, k = samples.shape
    filePath = _makeFolder(filePath)
    rows = samples.transpose(0, 2, 1).reshape(n, p * k)
    with open(filePath, 'w') as f:
        f.write(f"{p} {k} {n}\n")
        np.savetxt(f, rows, fmt='%.17g', delimiter=' ')
    logger.debug(f"Wrote {n} samples (p={p}, k={k}) to {filePath}.")
    return filePath


def readDatasetArray(filePath: str) -> np.ndarray:
    """Read a dataset text file into an ``(n, p, k)`` array.

    :raises DatasetFormatError: if the file cannot be read, the header is not
        three positive integers, or a line does not hold ``p * k`` numbers.
    """
    try:
        with open(filePath, 'r') as f:
            header = f.readline().split()
            lines = [line.split() for line in f if line.strip()]
    except OSError as e:
        raise DatasetFormatError(f"cannot read dataset {filePath}: {e}") from e

    try:
        p, k, n = (int(x) for x in header)
    except ValueError:
        raise DatasetFormatError(f"{filePath}: header must be 'p k n', got {' '.join(header)!r}")
    if p < 1 or k < 1 or n < 0:
        raise DatasetFormatError(f"{filePath}: invalid header p={p}, k={k}, n={n}")
    if len(lines) != n:
        raise DatasetFormatError(f"{filePath}: header announces {n} samples, found {len(lines)}")
    for i, line in enumerate(lines):
        if len(line) != p * k:
            raise DatasetFormatError(f"{filePath}, sample {i + 1}: expected {p * k} values, "
                                     f"found {len(line)}")
    try:
        rows = np.array(lines, dtype=float).reshape(n, p * k)
    except ValueError as e:
        raise DatasetFormatError(f"{filePath}: {e}") from e
    if not np.all(np.isfinite(rows)):
        raise DatasetFormatError(f"{filePath}: non-finite values")
    return np.ascontiguousarray(rows.reshape(n, k, p).transpose(0, 2, 1))


# Region moments

def validateMomentsDict(data: Dict[str, Any]) -> None:
    with open(MOMENTS_SCHEMA_PATH) as f:
        schema = json.load(f)
    validate(data, schema)


def saveMoments(moments, filePath: str) -> str:
    """Save a :class:`relulab.regions.MomentSet` as JSON."""
    return saveJson(moments.toDict(), filePath)


def loadMoments(filePath: str):
    """Load a :class:`relulab.regions.MomentSet` from JSON.

    :raises jsonschema.ValidationError: if the document is not a moment set.
    """
    from .regions import MomentSet

    data = loadJson(filePath)
    try:
        validateMomentsDict(data)
    except ValidationError as e:
        logger.error(f"{filePath} is not a valid moment set: {e.message}")
        raise
    return MomentSet.fromDict(data)


# Results

def saveTrajectory(traj, folder: str, name: str = 'trajectory') -> Dict[str, str]:
    """Write ``<name>.csv`` and ``<name>.json`` (run metadata) into ``folder``."""
    csvPath = saveFrame(traj.toFrame(), os.path.join(folder, f'{name}.csv'))
    meta = dict(traj.metadata)
    meta.update(seed=traj.seed, final_w=traj.final_w, relative_error=traj.relativeError)
    jsonPath = saveJson(meta, os.path.join(folder, f'{name}.json'))
    return {'csv': csvPath, 'metadata': jsonPath}


def loadTrajectoryFrame(filePath: str) -> pd.DataFrame:
    return pd.read_csv(filePath)


def saveProfile(prof, folder: str, name: str = 'profile') -> Dict[str, str]:
    """Write the profile CSV and the full profile (all columns and constants) as JSON."""
    csvPath = saveFrame(prof.toFrame(), os.path.join(folder, f'{name}.csv'))
    jsonPath = saveJson(prof.toDict(), os.path.join(folder, f'{name}.json'))
    return {'csv': csvPath, 'profile': jsonPath}


def loadProfile(filePath: str):
    """Load a :class:`relulab.smoothness.SmoothnessProfile` from its JSON file."""
    from .smoothness import SmoothnessProfile
    return SmoothnessProfile.fromDict(loadJson(filePath))

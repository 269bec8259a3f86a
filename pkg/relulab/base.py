"""
relulab.base
^^^^^^^^^^^^

Exceptions shared by all modules, and the small checks that raise them.
"""
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of an operation (zero norms,
    dimension mismatches, angles out of range, empty datasets, ...)."""


class UndefinedGradientError(DomainError):
    """The loss gradient was requested at ``w = 0``, where it is undefined."""


class TheoremPreconditionError(DomainError):
    """A convergence theorem was applied outside its hypotheses
    (for example ``gamma(phi) - 6 * L_cross <= 0``)."""


class DatasetFormatError(OSError):
    """A dataset file is unreadable or does not follow the text format."""


def asVector(v: Sequence[float] | np.ndarray, name: str = 'vector') -> np.ndarray:
    """Return ``v`` as a finite, non-empty 1-D float array.

    :raises DomainError: if ``v`` is empty, not 1-D or has non-finite entries.
    """
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def checkSameDim(w: np.ndarray, p: int, name: str = 'w') -> None:
    if w.shape[0] != p:
        raise DomainError(f"dimension mismatch: {name} has {w.shape[0]} entries, patches have {p}")

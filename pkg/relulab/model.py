"""
relulab.model
^^^^^^^^^^^^^

The convolutional ReLU filter ``f(w, Z) = 1/k sum_i relu(w^T Z_i)``, its squared
loss against a teacher filter, and per-sample and minibatch gradients.

A patch counts as active when ``w^T Z_i >= 0``.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import helpers
from .base import DomainError, UndefinedGradientError, asVector, checkSameDim
from .distributions import Dataset

logger = logging.getLogger(__name__)

#: anything that holds patch samples: a dataset, an ``(n, p, k)`` array or a
#: list of ``(p, k)`` arrays.
Batch = Union[Dataset, np.ndarray, Sequence[np.ndarray]]


@dataclass
class TeacherStudent:
    """A teacher filter and a student filter of the same dimension."""
    w_star: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.w_star = asVector(self.w_star, 'w_star')
        self.w = asVector(self.w, 'w')
        checkSameDim(self.w, self.w_star.shape[0])
        if not np.any(self.w_star):
            raise DomainError("teacher w_star must be nonzero")

    @property
    def p(self) -> int:
        return self.w_star.shape[0]

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.w - self.w_star))


@dataclass
class GradientSample:
    """Gradient of the loss at one sample.

    :param g: the gradient with respect to ``w``.
    :param residual: ``f(w, Z) - f(w_star, Z)``.
    """
    g: np.ndarray
    residual: float


def asSamples(batch: Batch) -> np.ndarray:
    """Patch samples as one ``(n, p, k)`` float array."""
    if isinstance(batch, Dataset):
        return batch.samples
    arr = np.asarray(batch, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, ...]
    if arr.ndim != 3:
        raise DomainError(f"expected samples of shape (n, p, k), got {arr.shape}")
    return arr


def _patchSample(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2 or z.shape[1] == 0:
        raise DomainError(f"a patch sample must have shape (p, k), got {z.shape}")
    return z


def predictAll(w, samples: np.ndarray) -> np.ndarray:
    """Predictions for every sample of an ``(n, p, k)`` array."""
    w = asVector(w, 'w')
    checkSameDim(w, samples.shape[1])
    return np.maximum(np.einsum('npk,p->nk', samples, w), 0.).mean(axis=1)


def predict(w, z) -> float:
    """Filter output ``1/k sum_i max(w^T Z_i, 0)`` for one sample ``z`` of shape ``(p, k)``.

    :raises DomainError: if ``w`` and the patches differ in dimension.
    """
    return float(predictAll(w, _patchSample(z)[None, ...])[0])


def loss(w, wStar, z) -> float:
    """Squared loss ``1/2 (f(w, Z) - f(w_star, Z))^2``."""
    r = predict(w, z) - predict(wStar, z)
    return 0.5 * r * r


def lossAll(w, wStar, samples: np.ndarray) -> np.ndarray:
    r = predictAll(w, samples) - predictAll(wStar, samples)
    return 0.5 * r * r


def meanLoss(w, wStar, batch: Batch) -> float:
    """Monte Carlo mean loss over a batch."""
    samples = asSamples(batch)
    if samples.shape[0] == 0:
        raise DomainError("cannot average the loss over an empty batch")
    return float(_orderedSum(lambda s: lossAll(w, wStar, s).sum(), samples) / samples.shape[0])


def _checkGradientPoint(w, wStar, p: int):
    w = asVector(w, 'w')
    wStar = asVector(wStar, 'w_star')
    checkSameDim(w, p)
    checkSameDim(wStar, p, 'w_star')
    if not np.any(w):
        raise UndefinedGradientError("the loss gradient is undefined at w = 0")
    return w, wStar


def gradientsAll(w, wStar, samples: np.ndarray) -> np.ndarray:
    """Per-sample gradients, shape ``(n, p)``.

    :raises UndefinedGradientError: if ``w`` is zero.
    """
    n, p, k = samples.shape
    w, wStar = _checkGradientPoint(w, wStar, p)
    s = np.einsum('npk,p->nk', samples, w)
    residual = np.maximum(s, 0.).mean(axis=1) - predictAll(wStar, samples)
    activeSum = np.einsum('npk,nk->np', samples, (s >= 0).astype(float)) / k
    return residual[:, None] * activeSum


def sampleGradient(w, wStar, z) -> GradientSample:
    """Gradient of :func:`loss` at one sample.

    ``g = (f(w, Z) - f(w_star, Z)) * 1/k sum_i Z_i 1{w^T Z_i >= 0}``

    :raises UndefinedGradientError: if ``w`` is zero.
    :raises DomainError: on dimension mismatches.
    """
    z = _patchSample(z)
    _checkGradientPoint(w, wStar, z.shape[0])
    residual = predict(w, z) - predict(wStar, z)
    g = gradientsAll(w, wStar, z[None, ...])[0]
    return GradientSample(g=g, residual=residual)


def _orderedSum(func, samples: np.ndarray):
    return helpers.chunkedSum(lambda start, stop: func(samples[start:stop]), samples.shape[0])


def batchGradient(w, wStar, batch: Batch) -> np.ndarray:
    """Mean of :func:`sampleGradient` over a batch.

    :raises DomainError: if the batch is empty.
    :raises UndefinedGradientError: if ``w`` is zero.
    """
    samples = asSamples(batch)
    if samples.shape[0] == 0:
        raise DomainError("cannot average gradients over an empty batch")
    _checkGradientPoint(w, wStar, samples.shape[1])
    return _orderedSum(lambda s: gradientsAll(w, wStar, s).sum(axis=0), samples) / samples.shape[0]


def projectToBall(g: np.ndarray, bound: float) -> np.ndarray:
    """``g`` rescaled onto the ball of radius ``bound`` if it lies outside."""
    n = float(np.linalg.norm(g))
    if n > bound:
        return g * (bound / n)
    return g

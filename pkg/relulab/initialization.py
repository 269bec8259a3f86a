"""
relulab.initialization
^^^^^^^^^^^^^^^^^^^^^^

Random initialization of the student in a ball around the origin, and the
empirical success rate of such initializations.

A draw ``w0`` from the ball of radius ``alpha ||w*||`` is a success when
``||w0 - w*|| <= sqrt(1 - alpha^2) ||w*||``. The looser norm-aware event
``||w0 - w*||^2 <= ||w*||^2 - ||w0||^2`` (``w0`` inside the ball with diameter
``[0, w*]``, where ``theta(w0, w*) <= arcsin(||w0 - w*|| / ||w*||)``) is
reported alongside as ``frequency_norm_aware``.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import helpers
from .base import DomainError, asVector
from .linalg import norm

logger = logging.getLogger(__name__)

#: columns of the initialization results CSV.
INIT_COLUMNS = ['p', 'alpha', 'trials', 'frequency', 'bound', 'hypothesis_ok']


@dataclass
class InitSpec:
    """Ball initialization with radius ``alpha * ||w*||``.

    :param p: dimension.
    :param alpha: radius ratio in ``(0, 1)``.
    :param trials: number of independent draws for success experiments.
    :param seed: seed of the trial streams.
    """
    p: int
    alpha: float
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.p < 1:
            raise DomainError(f"p must be >= 1, got {self.p}")
        if not 0. < self.alpha < 1.:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.trials < 1:
            raise DomainError(f"need at least one trial, got {self.trials}")

    @property
    def hypothesisOk(self) -> bool:
        return bool(self.alpha <= np.sqrt(1. / (2 * np.pi * self.p)))

    def toDict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def fromDict(cls, d: Dict[str, Any]) -> 'InitSpec':
        return cls(p=int(d['p']), alpha=float(d['alpha']),
                   trials=int(d.get('trials', 1)), seed=int(d.get('seed', 0)))


@dataclass
class InitResult:
    """Outcome of a success experiment."""
    p: int
    alpha: float
    trials: int
    frequency: float
    bound: float
    hypothesis_ok: bool
    frequency_norm_aware: float
    stderr: float

    def toRow(self) -> Dict[str, Any]:
        return {col: getattr(self, col) for col in INIT_COLUMNS}


def successBound(p: int, alpha: float) -> float:
    """``1/2 - sqrt(pi p / 2) alpha``."""
    return float(0.5 - np.sqrt(np.pi * p / 2) * alpha)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return helpers.childRng(int(seed), 'ball')


def sampleBallMany(p: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points uniform in the ``p``-ball of the given radius, one per row.

    Direction uniform on the sphere, length ``radius * U^(1/p)``.
    """
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    directions = rng.standard_normal((count, p))
    lengths = np.linalg.norm(directions, axis=1, keepdims=True)
    while np.any(lengths == 0):
        bad = lengths[:, 0] == 0
        directions[bad] = rng.standard_normal((int(bad.sum()), p))
        lengths = np.linalg.norm(directions, axis=1, keepdims=True)
    directions /= lengths
    radii = radius * rng.random(count) ** (1. / p)
    out = directions * radii[:, None]
    # rounding in the normalization may overshoot by an ulp
    norms = np.linalg.norm(out, axis=1)
    over = norms > radius
    out[over] *= (radius / norms[over])[:, None]
    return out


def sampleBall(p: int, radius: float, seed: int | np.random.Generator = 0) -> np.ndarray:
    """One point uniform in the ``p``-ball of the given radius.

    :param seed: an unsigned seed or a random generator.
    """
    return sampleBallMany(p, radius, 1, _rng(seed))[0]


def sampleAtDistance(wStar, ratio: float, seed: int | np.random.Generator = 0) -> np.ndarray:
    """``w* + ratio ||w*|| u`` for ``u`` uniform on the unit sphere."""
    wStar = asVector(wStar, 'w_star')
    if ratio < 0:
        raise DomainError(f"distance ratio must be non-negative, got {ratio}")
    rng = _rng(seed)
    u = rng.standard_normal(wStar.shape[0])
    u /= np.linalg.norm(u)
    return wStar + ratio * norm(wStar, 'w_star') * u


def successExperiment(spec: InitSpec, wStar) -> InitResult:
    """Empirical success frequency of ball initialization with radius ``alpha ||w*||``.

    Trial ``i`` draws from the stream ``(spec.seed, 'init', i)``. Runs outside the
    hypothesis ``alpha <= sqrt(1/(2 pi p))`` are still carried out; they are
    flagged in the result and logged.
    """
    wStar = asVector(wStar, 'w_star')
    if wStar.shape[0] != spec.p:
        raise DomainError(f"w_star has dimension {wStar.shape[0]}, expected {spec.p}")
    wNorm = norm(wStar, 'w_star')
    radius = spec.alpha * wNorm
    if not spec.hypothesisOk:
        logger.warning(f"alpha={spec.alpha} exceeds sqrt(1/(2 pi p)) for p={spec.p}; "
                       f"running anyway.")

    def trialChunk(bounds):
        start, stop = bounds
        return np.stack([sampleBallMany(spec.p, radius, 1,
                                        helpers.childRng(spec.seed, 'init', i))[0]
                         for i in range(start, stop)])

    w0 = np.concatenate(helpers.mapOrdered(trialChunk, helpers.chunkBounds(spec.trials)))
    dist2 = np.sum((w0 - wStar) ** 2, axis=1)
    success = np.sqrt(dist2) <= np.sqrt(1 - spec.alpha ** 2) * wNorm
    normAware = dist2 <= wNorm ** 2 - np.sum(w0 ** 2, axis=1)

    freq = float(success.mean())
    result = InitResult(p=spec.p, alpha=spec.alpha, trials=spec.trials,
                        frequency=freq, bound=successBound(spec.p, spec.alpha),
                        hypothesis_ok=spec.hypothesisOk,
                        frequency_norm_aware=float(normAware.mean()),
                        stderr=float(np.sqrt(freq * (1 - freq) / spec.trials)))
    logger.debug(f"init p={spec.p} alpha={spec.alpha}: frequency {freq:.4f}, bound {result.bound:.4f}")
    return result


def initSweep(ps: Sequence[int], alphas: Sequence[float], trials: int, seed: int = 0,
              admissibleOnly: bool = True) -> List[InitResult]:
    """Success experiments over a ``p x alpha`` grid with teacher ``e_1``.

    :param admissibleOnly: skip pairs outside ``alpha <= sqrt(1/(2 pi p))``.
    """
    results = []
    for p in ps:
        wStar = np.zeros(p)
        wStar[0] = 1.
        for j, alpha in enumerate(alphas):
            spec = InitSpec(p=int(p), alpha=float(alpha), trials=trials,
                            seed=helpers.childSeed(seed, 'init-sweep', int(p), j))
            if admissibleOnly and not spec.hypothesisOk:
                logger.debug(f"Skipping p={p}, alpha={alpha}: outside the hypothesis range.")
                continue
            results.append(successExperiment(spec, wStar))
    return results


def corollaryAlpha(phiStar: float) -> float:
    """Radius ratio ``cos(phi*)`` for the convolutional initialization recipe."""
    if not 0. < phiStar <= np.pi / 2:
        raise DomainError(f"phi* must lie in (0, pi/2], got {phiStar}")
    return float(np.cos(phiStar))


def corollaryRadius(wStar, phiStar: float) -> float:
    """Ball radius ``||w*|| cos(phi*)``."""
    return norm(asVector(wStar, 'w_star'), 'w_star') * corollaryAlpha(phiStar)


@dataclass
class RestartResult:
    w0: np.ndarray
    draws: int
    success: bool


def bestOfRestarts(wStar, alpha: float, maxDraws: int = 100,
                   seed: int = 0) -> RestartResult:
    """Draw ball initializations until one lies strictly inside ``||w0 - w*|| < ||w*||``.

    Each draw succeeds with probability close to 1/2, so a handful of
    restarts almost always suffice. The last draw is returned (with
    ``success=False``) if none of ``maxDraws`` succeeds.
    """
    wStar = asVector(wStar, 'w_star')
    if maxDraws < 1:
        raise DomainError(f"need at least one draw, got {maxDraws}")
    spec = InitSpec(p=wStar.shape[0], alpha=alpha)
    wNorm = norm(wStar, 'w_star')
    w0: Optional[np.ndarray] = None
    for i in range(maxDraws):
        w0 = sampleBall(spec.p, alpha * wNorm, helpers.childRng(seed, 'restart', i))
        if np.linalg.norm(w0 - wStar) < wNorm:
            return RestartResult(w0, i + 1, True)
    logger.warning(f"No initialization inside ||w0 - w*|| < ||w*|| after {maxDraws} draws.")
    return RestartResult(w0, maxDraws, False)

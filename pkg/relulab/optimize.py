"""
relulab.optimize
^^^^^^^^^^^^^^^^

Gradient descent on the population loss (Monte Carlo estimated from region
moments) and stochastic gradient descent on fresh minibatches, with
constant, two-stage and theory-adaptive step sizes.

Every run records a :class:`Trajectory`. Row ``t`` describes the iterate
``w_t``: its distance to the teacher, the angle bound
``phi_t = arcsin(min(dist / ||w*||, 1))``, the Monte Carlo loss, the gradient
norm and the step size ``eta_t`` used to move to ``w_{t+1}``. The last row
has ``eta = 0`` since no step is taken from it.

Random streams (all derived from ``RunConfig.seed``):

==================  ==========================================
``'init'``          random initialization
``'gd-batch'``      pinned GD batch (fresh batches add ``t``)
``'sgd-batch', t``  SGD minibatch of step ``t``
``'eval'``          evaluation set for the SGD loss column
==================  ==========================================
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from . import helpers
from .base import DomainError, TheoremPreconditionError, asVector, checkSameDim
from .distributions import Dataset, DistributionSpec, sample
from .initialization import InitSpec, sampleAtDistance, sampleBall
from .linalg import angle, norm
from .model import batchGradient, meanLoss, projectToBall
from .regions import estimateMoments, populationGradient
from .smoothness import SmoothnessProfile, phiStar

logger = logging.getLogger(__name__)

#: columns of the trajectory CSV.
TRAJECTORY_COLUMNS = ['t', 'eta', 'dist', 'phi', 'loss', 'grad_norm']

DEFAULT_SAFETY = 0.5
DEFAULT_N_MC = 100_000
DEFAULT_N_EVAL = 4096


@unique
class ScheduleKind(Enum):
    Constant = 'constant'
    TwoStage = 'two_stage'
    AdaptiveTheory = 'adaptive_theory'

    @classmethod
    def fromName(cls, name: str) -> 'ScheduleKind':
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise DomainError(f"unknown schedule '{name}', expected one of {[k.value for k in cls]}")


@unique
class RunMode(Enum):
    PopulationGD = 'gd'
    SGD = 'sgd'


@dataclass
class Schedule:
    """Step-size schedule.

    * constant: ``eta`` at every step (``eta = 0`` freezes the iterate).
    * two-stage: ``eta_small`` until ``phi_t`` first drops below
      ``switch_angle``, ``eta_large`` from then on.
    * adaptive: ``safety`` times :func:`stepSizeBound` at ``phi_t``, with
      ``phi_t`` clamped to the smallest grid angle of ``profile``.
    """
    kind: ScheduleKind
    eta: float = 0.
    eta_small: float = 0.
    eta_large: float = 0.
    switch_angle: float = 0.
    profile: Optional[SmoothnessProfile] = field(default=None, repr=False)
    safety: float = DEFAULT_SAFETY
    multi_patch: bool = False

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = ScheduleKind.fromName(self.kind)
        self.validate()

    def validate(self) -> None:
        if self.kind is ScheduleKind.Constant and self.eta < 0:
            raise DomainError(f"step size must be non-negative, got {self.eta}")
        if self.kind is ScheduleKind.TwoStage:
            if self.eta_small <= 0 or self.eta_large <= 0:
                raise DomainError("two-stage step sizes must be positive")
            if not 0. < self.switch_angle < np.pi / 2:
                raise DomainError(f"switch angle must lie in (0, pi/2), got {self.switch_angle}")
        if self.kind is ScheduleKind.AdaptiveTheory:
            if self.profile is None:
                raise DomainError("the adaptive schedule needs a smoothness profile")
            if not 0. < self.safety <= 1.:
                raise DomainError(f"safety must lie in (0, 1], got {self.safety}")

    def stepper(self) -> Callable[[float], float]:
        """A fresh step-size function ``phi_t -> eta_t`` for one run."""
        if self.kind is ScheduleKind.Constant:
            return lambda phi: self.eta

        if self.kind is ScheduleKind.TwoStage:
            switched = False

            def twoStage(phi: float) -> float:
                nonlocal switched
                if not switched and phi < self.switch_angle:
                    switched = True
                    logger.debug(f"Two-stage schedule switched to eta={self.eta_large} at phi={phi:.4g}.")
                return self.eta_large if switched else self.eta_small
            return twoStage

        prof = self.profile
        return lambda phi: stepSizeBound(prof, max(phi, prof.gridMin), self.multi_patch, self.safety)

    def toDict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {'kind': self.kind.value}
        if self.kind is ScheduleKind.Constant:
            d['eta'] = self.eta
        elif self.kind is ScheduleKind.TwoStage:
            d.update(eta_small=self.eta_small, eta_large=self.eta_large,
                     switch_angle=self.switch_angle)
        else:
            d.update(safety=self.safety, multi_patch=self.multi_patch,
                     beta_hat=self.profile.beta_hat, l_cross_hat=self.profile.l_cross_hat)
        return d


def stepSizeBound(prof: SmoothnessProfile, phi: float, multiPatch: bool = False,
                  safety: float = 1.) -> float:
    """Largest step size the convergence theorems allow at angle bound ``phi``.

    Single patch: ``min gamma / (2 (ell + 4 beta)^2)``; multi-patch:
    ``min (gamma - 6 l_cross) / (2 (ell + 10 l_cross + 4 beta)^2)``; the
    minimum runs over grid angles ``<= phi``. The result is multiplied by
    ``safety``.

    :raises DomainError: if ``phi`` is below the smallest grid angle.
    :raises TheoremPreconditionError: (multi-patch) if ``gamma <= 6 l_cross``
        at some grid angle ``<= phi``.
    """
    if phi < prof.gridMin - 1e-12:
        raise DomainError(f"phi={phi:.4g} is below the profile grid (min {prof.gridMin:.4g})")
    idx = prof.indicesUpTo(phi)
    gamma = np.asarray(prof.gamma)[idx]
    ell = np.asarray(prof.ell)[idx]
    beta = prof.beta_hat
    if multiPatch:
        lc = prof.l_cross_hat
        numerator = gamma - 6 * lc
        bad = numerator <= 0
        if np.any(bad):
            at = float(np.asarray(prof.phis)[idx][bad][0])
            raise TheoremPreconditionError(
                f"theorem precondition violated: gamma - 6 l_cross <= 0 at phi={at:.4g}")
        bounds = numerator / (2 * (ell + 10 * lc + 4 * beta) ** 2)
    else:
        bounds = gamma / (2 * (ell + 4 * beta) ** 2)
    return float(safety * np.min(bounds))


@dataclass
class RunConfig:
    """One optimization run.

    :param dist_spec: input distribution.
    :param w_star: teacher filter.
    :param init: starting point: a vector, an :class:`InitSpec` (ball
        initialization) or a float ``r`` (uniform direction at distance
        ``r ||w*||`` from the teacher).
    :param schedule: step-size schedule.
    :param mode: population GD or SGD.
    :param n_mc: Monte Carlo batch size of population GD.
    :param pinned: population GD reuses one batch (``True``) or draws a fresh
        batch every step.
    :param batch_size: SGD minibatch size.
    :param max_iters: maximal number of steps.
    :param stop_tol: stop once ``||w_t - w*|| <= stop_tol ||w*||``.
    :param gradient_bound: if set, SGD gradients are projected onto this ball.
    :param n_eval: size of the evaluation set for the SGD loss column.
    :param dataset: fixed data to optimize on instead of drawing from
        ``dist_spec`` (GD: the pinned batch; SGD: the pool minibatches are
        drawn from, used whole when ``batch_size`` equals its size).
    """
    dist_spec: DistributionSpec
    w_star: np.ndarray
    init: Union[np.ndarray, InitSpec, float]
    schedule: Schedule
    mode: RunMode = RunMode.PopulationGD
    n_mc: int = DEFAULT_N_MC
    pinned: bool = True
    batch_size: int = 32
    max_iters: int = 10_000
    stop_tol: float = 1e-3
    seed: int = 0
    gradient_bound: Optional[float] = None
    n_eval: int = DEFAULT_N_EVAL
    dataset: Optional[Dataset] = field(default=None, repr=False)

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = RunMode(self.mode)
        self.w_star = asVector(self.w_star, 'w_star')
        norm(self.w_star, 'w_star')
        checkSameDim(self.w_star, self.dist_spec.p, 'w_star')
        if isinstance(self.init, (list, tuple, np.ndarray)):
            self.init = asVector(self.init, 'init')
            checkSameDim(self.init, self.dist_spec.p, 'init')
        self.validate()

    def validate(self) -> None:
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.stop_tol <= 0:
            raise DomainError(f"stop_tol must be positive, got {self.stop_tol}")
        if self.n_mc < 1 or self.batch_size < 1 or self.n_eval < 1:
            raise DomainError("sample sizes must be >= 1")
        if self.gradient_bound is not None and self.gradient_bound <= 0:
            raise DomainError("gradient_bound must be positive")

    def initialPoint(self) -> np.ndarray:
        rng = helpers.childRng(self.seed, 'init')
        if isinstance(self.init, InitSpec):
            return sampleBall(self.init.p, self.init.alpha * np.linalg.norm(self.w_star), rng)
        if isinstance(self.init, (int, float)):
            return sampleAtDistance(self.w_star, float(self.init), rng)
        return np.array(self.init, dtype=float)

    def toDict(self) -> Dict[str, Any]:
        if isinstance(self.init, InitSpec):
            init: Any = {'ball': self.init.toDict()}
        elif isinstance(self.init, (int, float)):
            init = {'distance': float(self.init)}
        else:
            init = {'vector': np.asarray(self.init).tolist()}
        return {
            'distribution': self.dist_spec.toDict(),
            'w_star': self.w_star.tolist(),
            'init': init,
            'schedule': self.schedule.toDict(),
            'mode': self.mode.value,
            'n_mc': self.n_mc, 'pinned': self.pinned, 'batch_size': self.batch_size,
            'max_iters': self.max_iters, 'stop_tol': self.stop_tol, 'seed': self.seed,
            'gradient_bound': self.gradient_bound, 'n_eval': self.n_eval,
            'fixed_dataset': self.dataset is not None,
        }


@dataclass
class TrajectoryRow:
    t: int
    eta: float
    dist: float
    phi: float
    loss: float
    grad_norm: float
    theta: float


@dataclass
class Trajectory:
    """Record of one optimization run."""
    rows: List[TrajectoryRow]
    final_w: np.ndarray
    w_star: np.ndarray
    seed: int
    schedule: Schedule
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def dists(self) -> np.ndarray:
        return self.column('dist')

    @property
    def relativeError(self) -> float:
        return float(self.rows[-1].dist / np.linalg.norm(self.w_star))

    def toFrame(self) -> pd.DataFrame:
        return pd.DataFrame([{c: getattr(r, c) for c in TRAJECTORY_COLUMNS} for r in self.rows],
                            columns=TRAJECTORY_COLUMNS)


def _phiBound(dist: float, wNorm: float) -> float:
    return float(np.arcsin(min(dist / wNorm, 1.)))


def _iterate(config: RunConfig, gradient: Callable[[int, np.ndarray], np.ndarray],
             lossAt: Callable[[int, np.ndarray], float], label: str) -> Trajectory:
    wStar = config.w_star
    wNorm = float(np.linalg.norm(wStar))
    w = config.initialPoint()
    rate = config.schedule.stepper()
    rows: List[TrajectoryRow] = []
    maxGradNorm = 0.
    stopReason = 'max_iters'

    for t in range(config.max_iters + 1):
        if not np.all(np.isfinite(w)):
            raise DomainError(f"{label} diverged at step {t}")
        dist = float(np.linalg.norm(w - wStar))
        phi = _phiBound(dist, wNorm)
        g = gradient(t, w)
        gNorm = float(np.linalg.norm(g))
        maxGradNorm = max(maxGradNorm, gNorm)
        theta = angle(w, wStar)
        done = dist <= config.stop_tol * wNorm
        last = done or t == config.max_iters
        eta = 0. if last else float(rate(phi))
        rows.append(TrajectoryRow(t=t, eta=eta, dist=dist, phi=phi, loss=lossAt(t, w),
                                  grad_norm=gNorm, theta=theta))
        if done:
            stopReason = 'stop_tol'
            break
        if last:
            break
        w = w - eta * g
        if t % 1000 == 0:
            logger.debug(f"{label} t={t}: dist={dist:.4e}, eta={eta:.3e}")

    traj = Trajectory(rows=rows, final_w=w, w_star=wStar.copy(), seed=config.seed,
                      schedule=config.schedule,
                      metadata={'config': config.toDict(), 'max_grad_norm': maxGradNorm,
                                'stop_reason': stopReason, 'iterations': len(rows) - 1,
                                'converged': stopReason == 'stop_tol'})
    logger.info(f"{label}: {traj.metadata['iterations']} steps, stop reason {stopReason}, "
                f"relative error {traj.relativeError:.3e}.")
    return traj


def runGd(config: RunConfig) -> Trajectory:
    """Population gradient descent.

    The gradient at ``w_t`` is :func:`relulab.regions.populationGradient` of the
    moments estimated on the pinned batch (or a fresh batch per step).

    :raises UndefinedGradientError: if an iterate is exactly zero.
    """
    if config.mode is not RunMode.PopulationGD:
        raise DomainError("runGd needs a population GD config")
    wStar = config.w_star

    if config.dataset is not None:
        pinned: Optional[Dataset] = config.dataset
    elif config.pinned:
        pinned = sample(config.dist_spec, config.n_mc, helpers.childSeed(config.seed, 'gd-batch'))
    else:
        pinned = None

    cache: Dict[int, Dataset] = {}

    def batchAt(t: int) -> Dataset:
        if pinned is not None:
            return pinned
        if t not in cache:
            cache.clear()
            cache[t] = sample(config.dist_spec, config.n_mc,
                              helpers.childSeed(config.seed, 'gd-batch', t))
        return cache[t]

    def gradient(t, w):
        data = batchAt(t)
        return populationGradient(estimateMoments(data, w, wStar), w, wStar)

    def lossAt(t, w):
        return meanLoss(w, wStar, batchAt(t))

    return _iterate(config, gradient, lossAt, 'GD')


def runSgd(config: RunConfig) -> Trajectory:
    """Stochastic gradient descent on fresh i.i.d. minibatches.

    With ``config.dataset`` set, minibatches are drawn without replacement
    from it, or the whole dataset is used when ``batch_size`` equals its size.

    :raises UndefinedGradientError: if an iterate is exactly zero.
    """
    if config.mode is not RunMode.SGD:
        raise DomainError("runSgd needs an SGD config")
    wStar = config.w_star
    pool = config.dataset
    evalSet = pool if pool is not None else \
        sample(config.dist_spec, config.n_eval, helpers.childSeed(config.seed, 'eval'))

    def gradient(t, w):
        if pool is not None and config.batch_size >= pool.n:
            batch = pool.samples
        elif pool is not None:
            rng = helpers.childRng(config.seed, 'sgd-batch', t)
            batch = pool.samples[np.sort(rng.choice(pool.n, config.batch_size, replace=False))]
        else:
            batch = sample(config.dist_spec, config.batch_size,
                           helpers.childSeed(config.seed, 'sgd-batch', t))
        g = batchGradient(w, wStar, batch)
        if config.gradient_bound is not None:
            g = projectToBall(g, config.gradient_bound)
        return g

    def lossAt(t, w):
        return meanLoss(w, wStar, evalSet)

    return _iterate(config, gradient, lossAt, 'SGD')


def checkContraction(traj: Trajectory, prof: SmoothnessProfile,
                     multiPatch: bool = False) -> Dict[str, Any]:
    """Compare realized with predicted per-step contraction.

    For each step with ``0 < dist_t < ||w*||`` the realized factor is
    ``dist_{t+1}^2 / dist_t^2`` and the predicted one
    ``1 - eta_t (gamma(phi_t) - 6 l_cross) / 2`` (the ``l_cross`` term only for
    multi-patch), with ``gamma`` read at the smallest grid angle
    ``>= phi_t``. A step passes when realized <= predicted + tol, with
    ``tol = 3 (eta_t / 2) se(gamma)``.

    Also checks ``theta(w_t, w*) <= phi_t + 1e-8`` on every row with
    ``dist_t < ||w*||``.
    """
    wNorm = float(np.linalg.norm(traj.w_star))
    lc = prof.l_cross_hat if multiPatch else 0.
    checked = passed = skipped = 0
    worst = -np.inf
    for row, nxt in zip(traj.rows[:-1], traj.rows[1:]):
        if not 0. < row.dist < wNorm:
            skipped += 1
            continue
        idx = prof.indexAtOrAbove(row.phi)
        predicted = 1. - row.eta * (prof.gamma[idx] - 6 * lc) / 2
        tol = 3 * (row.eta / 2) * prof.gamma_se[idx]
        realized = (nxt.dist / row.dist) ** 2
        checked += 1
        if realized <= predicted + tol:
            passed += 1
        worst = max(worst, realized - predicted - tol)

    angleViolations = [r.t for r in traj.rows
                       if r.dist < wNorm and r.theta > r.phi + 1e-8]
    report = {
        'check': 'contraction',
        'multi_patch': multiPatch,
        'steps_checked': checked,
        'steps_passed': passed,
        'steps_skipped': skipped,
        'pass_fraction': float(passed / checked) if checked else 1.,
        'worst_excess': float(worst) if checked else 0.,
        'angle_bound_ok': not angleViolations,
        'angle_violations': angleViolations[:20],
    }
    return report


def sgdDefaults(prof: SmoothnessProfile, wStar, r0: float, gradientBound: float,
                eps: float, delta: float, safety: float = DEFAULT_SAFETY) -> Dict[str, Any]:
    """Step size and iteration budget for SGD from measured constants.

    With ``K = ell(grid min) + 10 l_cross + 4 beta``,
    ``gamma_1 = gamma(phi_1) - 6 l_cross`` and ``phi_1 = (phi* + phi_0)/2``::

        eta = safety * min(gamma_1 / K^2,
                           eps^2 gamma_1 ||w*||^2 / (B^2 + eps^2 ||w*||^2 K^2))
        T   = ceil(log(r0^2 / (eps^2 ||w*||^2 delta)) / (eta (gamma_1 - eta K^2)))

    These instantiate asymptotic statements with unit constants.

    :param r0: initial distance ``||w_0 - w*||``.
    :param gradientBound: uniform gradient bound ``B``.
    :raises TheoremPreconditionError: if ``phi_0`` exceeds ``phi*`` or
        ``gamma_1 <= 0``.
    """
    wStar = asVector(wStar, 'w_star')
    wNorm = norm(wStar, 'w_star')
    if not (0 < eps < 1 and 0 < delta < 1):
        raise DomainError("eps and delta must lie in (0, 1)")
    if gradientBound <= 0 or r0 <= 0:
        raise DomainError("r0 and the gradient bound must be positive")
    phi0 = _phiBound(r0, wNorm)
    pStar = phiStar(prof)
    if phi0 > pStar:
        raise TheoremPreconditionError(f"initial angle bound {phi0:.4g} exceeds phi*={pStar:.4g}")
    phi1 = (pStar + phi0) / 2
    lc = prof.l_cross_hat
    K = prof.ell[0] + 10 * lc + 4 * prof.beta_hat
    gamma1 = prof.gamma[prof.indexAtOrAbove(phi1)] - 6 * lc
    if gamma1 <= 0:
        raise TheoremPreconditionError(f"gamma(phi_1) - 6 l_cross = {gamma1:.4g} is not positive")
    e2w2 = eps ** 2 * wNorm ** 2
    eta = safety * min(gamma1 / K ** 2, e2w2 * gamma1 / (gradientBound ** 2 + e2w2 * K ** 2))
    ratio = r0 ** 2 / (e2w2 * delta)
    T = max(1, math.ceil(math.log(max(ratio, 1.)) / (eta * (gamma1 - eta * K ** 2))))
    return {'eta': float(eta), 'iterations': int(T), 'K': float(K), 'gamma_1': float(gamma1),
            'phi_0': float(phi0), 'phi_1': float(phi1), 'phi_star': float(pStar),
            'eps': eps, 'delta': delta, 'gradient_bound': float(gradientBound),
            'safety': safety, 'unit_constants': True}

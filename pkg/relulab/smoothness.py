"""
relulab.smoothness
^^^^^^^^^^^^^^^^^^

Angular smoothness of the region moments as a function of the student/teacher
angle ``phi``:

* ``gamma(phi)``: smallest eigenvalue of the joint-activation moment,
  minimized over students at angle ``phi``.
* ``ell(phi)``: its largest eigenvalue, maximized over the same students.
* ``ell_minus(phi)``: largest eigenvalue of the PN moment, maximized over all
  students at angle at most ``phi``.
* ``beta``: growth rate with ``ell_minus(phi) <= beta * phi``.
* ``l_cross``: growth rate of the summed operator norms of the cross-region
  covariances.

The extrema over students are taken over ``n_w`` random directions per grid
angle. All moments are expectations; the planar closed forms
:func:`closedForm2d` and :func:`closedForm2dJoint` are unnormalized angular
integrals, ``2 pi`` times the expectation for unit-norm rotationally
invariant input in two dimensions.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import helpers
from .base import DomainError, TheoremPreconditionError, asVector
from .distributions import Dataset, DistributionKind
from .linalg import eigSym, operatorNorm, randomPerpendicular, rotateToward, symFromUpper
from .regions import MomentSet, batchStandardError, estimateBatchMoments

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 25
DEFAULT_GRID_MARGIN = 0.05
DEFAULT_N_DIRECTIONS = 64
DEFAULT_N_BATCHES = 10

#: columns of the profile CSV.
PROFILE_COLUMNS = ['phi', 'gamma', 'gamma_se', 'ell', 'ell_se',
                   'ell_minus', 'ell_minus_se', 'l_cross_ratio']

#: allowed range of the converted beta for two-dimensional unit-sphere input.
UNIT_SPHERE_BETA_RANGE = (0.9, 1.05)


def defaultGrid(size: int = DEFAULT_GRID_SIZE, margin: float = DEFAULT_GRID_MARGIN) -> np.ndarray:
    """``size`` equispaced angles in ``[margin, pi - margin]``."""
    return np.linspace(margin, np.pi - margin, size)


@dataclass
class SmoothnessProfile:
    """Per-angle smoothness estimates.

    All per-angle lists are aligned with ``phis``; ``*_se`` entries are
    batch-means standard errors of the direction that attains the extremum.
    ``gamma_dir_max`` and ``ell_dir_min`` are the opposite extrema over the
    sampled directions (equal to ``gamma`` and ``ell`` when the spectrum does
    not depend on the direction).
    """
    phis: List[float]
    gamma: List[float]
    gamma_se: List[float]
    ell: List[float]
    ell_se: List[float]
    ell_minus: List[float]
    ell_minus_se: List[float]
    ell_minus_at: List[float]
    gamma_avg: List[float]
    gamma_avg_se: List[float]
    l_cross_ratio: List[float]
    l_cross_se: List[float]
    gamma_dir_max: List[float]
    ell_dir_min: List[float]
    beta_hat: float
    l_cross_hat: float
    n_w: int
    n_samples: int
    seed: int = 0
    kind: Optional[str] = None
    p: int = 0
    k: int = 1

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self.phis)

    @property
    def gridMin(self) -> float:
        return float(self.phis[0])

    def indexAtOrAbove(self, phi: float) -> int:
        """Index of the smallest grid angle ``>= phi`` (the last one if none is)."""
        idx = int(np.searchsorted(self.grid, phi - 1e-12, side='left'))
        return min(idx, len(self.phis) - 1)

    def indicesUpTo(self, phi: float) -> np.ndarray:
        return np.nonzero(self.grid <= phi + 1e-12)[0]

    def toFrame(self) -> pd.DataFrame:
        data = {col: getattr(self, col) for col in PROFILE_COLUMNS[1:]}
        return pd.DataFrame({'phi': self.phis, **data}, columns=PROFILE_COLUMNS)

    def toDict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def fromDict(cls, d: Dict[str, Any]) -> 'SmoothnessProfile':
        return cls(**d)


def _checkGrid(phis: Sequence[float]) -> np.ndarray:
    grid = np.sort(np.asarray(phis, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("the angle grid is empty")
    if grid[0] <= 0 or grid[-1] >= np.pi:
        raise DomainError(f"grid angles must lie in (0, pi), got [{grid[0]}, {grid[-1]}]")
    return grid


def _directionStats(moments: MomentSet, phi: float) -> Dict[str, float]:
    joint = eigSym(moments.m_pp)
    cross = sum(operatorNorm(getattr(moments, name)) for name in MomentSet.CROSS)
    return {
        'gamma': joint.lambdaMin,
        'ell': joint.lambdaMax,
        'ell_minus': eigSym(moments.m_pn).lambdaMax,
        'gamma_avg': eigSym(moments.a_avg).lambdaMin,
        'l_cross_ratio': cross / phi,
    }


def profile(dataset: Dataset, wStar, phis: Optional[Sequence[float]] = None,
            nW: int = DEFAULT_N_DIRECTIONS, seed: int = 0,
            nBatches: int = DEFAULT_N_BATCHES) -> SmoothnessProfile:
    """Estimate the smoothness profile of ``dataset`` around the teacher ``wStar``.

    For grid angle ``i`` and direction ``j`` the student is
    ``rotateToward(wStar, u, phi_i)`` with ``u`` drawn from the random stream
    ``(seed, 'profile', i, j)``; the ``(i, j)`` tasks run concurrently.

    :param phis: angle grid in ``(0, pi)``, default :func:`defaultGrid`.
    :param nW: directions sampled per angle.
    :param nBatches: contiguous batches used for the standard errors.
    :raises DomainError: on an empty dataset or grid, ``nW < 1`` or ``p < 2``.
    """
    dataset.requireNonEmpty()
    wStar = asVector(wStar, 'w_star')
    if wStar.shape[0] != dataset.p:
        raise DomainError(f"w_star has dimension {wStar.shape[0]}, patches have {dataset.p}")
    if nW < 1:
        raise DomainError(f"need at least one direction per angle, got {nW}")
    grid = _checkGrid(defaultGrid() if phis is None else phis)

    def task(ij):
        i, j = ij
        rng = helpers.childRng(seed, 'profile', i, j)
        w = rotateToward(wStar, randomPerpendicular(wStar, rng), grid[i])
        full, batches = estimateBatchMoments(dataset, w, wStar, nBatches, parallel=False)
        stats = _directionStats(full, grid[i])
        perBatch = [_directionStats(b, grid[i]) for b in batches]
        se = {key: batchStandardError([b[key] for b in perBatch]) for key in stats}
        return stats, se

    tasks = [(i, j) for i in range(grid.size) for j in range(nW)]
    logger.info(f"Profiling {grid.size} angles x {nW} directions on {dataset.n} samples.")
    results = helpers.mapOrdered(task, tasks)

    cols: Dict[str, List[float]] = {key: [] for key in
                                    ['gamma', 'gamma_se', 'ell', 'ell_se', 'ell_minus_at',
                                     'ell_minus_at_se', 'gamma_avg', 'gamma_avg_se',
                                     'l_cross_ratio', 'l_cross_se', 'gamma_dir_max', 'ell_dir_min']}
    for i in range(grid.size):
        stats = [results[i * nW + j][0] for j in range(nW)]
        ses = [results[i * nW + j][1] for j in range(nW)]

        def pick(key, chooser):
            values = [s[key] for s in stats]
            j = int(chooser(values))
            return values[j], ses[j][key]

        for key, chooser, out in [('gamma', np.argmin, 'gamma'),
                                  ('ell', np.argmax, 'ell'),
                                  ('ell_minus', np.argmax, 'ell_minus_at'),
                                  ('gamma_avg', np.argmin, 'gamma_avg'),
                                  ('l_cross_ratio', np.argmax, 'l_cross_ratio')]:
            value, se = pick(key, chooser)
            cols[out].append(float(value))
            cols['l_cross_se' if out == 'l_cross_ratio' else out + '_se'].append(float(se))
        cols['gamma_dir_max'].append(float(max(s['gamma'] for s in stats)))
        cols['ell_dir_min'].append(float(min(s['ell'] for s in stats)))

    # ell_minus is cumulative in the angle: running maximum over the grid
    ellMinus, ellMinusSe = [], []
    best, bestSe = -np.inf, 0.
    for value, se in zip(cols['ell_minus_at'], cols['ell_minus_at_se']):
        if value > best:
            best, bestSe = value, se
        ellMinus.append(float(best))
        ellMinusSe.append(float(bestSe))

    upToHalfPi = grid <= np.pi / 2 + 1e-12
    if np.any(upToHalfPi):
        betaHat = float(np.max(np.asarray(ellMinus)[upToHalfPi] / grid[upToHalfPi]))
    else:
        logger.warning("No grid angle at or below pi/2; beta is reported as 0.")
        betaHat = 0.
    lCrossHat = float(np.max(cols['l_cross_ratio']))

    prof = SmoothnessProfile(
        phis=[float(x) for x in grid],
        gamma=cols['gamma'], gamma_se=cols['gamma_se'],
        ell=cols['ell'], ell_se=cols['ell_se'],
        ell_minus=ellMinus, ell_minus_se=ellMinusSe, ell_minus_at=cols['ell_minus_at'],
        gamma_avg=cols['gamma_avg'], gamma_avg_se=cols['gamma_avg_se'],
        l_cross_ratio=cols['l_cross_ratio'], l_cross_se=cols['l_cross_se'],
        gamma_dir_max=cols['gamma_dir_max'], ell_dir_min=cols['ell_dir_min'],
        beta_hat=betaHat, l_cross_hat=lCrossHat,
        n_w=nW, n_samples=dataset.n, seed=seed,
        kind=dataset.spec.kind.value, p=dataset.p, k=dataset.k,
    )
    logger.info(f"Profile done: beta_hat={betaHat:.4g}, l_cross_hat={lCrossHat:.4g}.")
    return prof


def _checkAngle(phi: float) -> float:
    if not 0. <= phi <= np.pi:
        raise DomainError(f"angle {phi} outside [0, pi]")
    return float(phi)


def closedForm2d(phi: float) -> np.ndarray:
    """Angular integral of ``z z^T 1{PN}`` over the unit circle at angle ``phi``.

    With the teacher along the first axis::

        1/2 [[phi - sin(phi)cos(phi), -sin(phi)^2],
             [-sin(phi)^2,            phi + sin(phi)cos(phi)]]

    Its eigenvalues are ``(phi + sin(phi))/2`` and ``(phi - sin(phi))/2``.
    """
    phi = _checkAngle(phi)
    s, c = np.sin(phi), np.cos(phi)
    return symFromUpper(0.5 * np.array([[phi - s * c, -s * s],
                                        [0., phi + s * c]]))


def closedForm2dJoint(phi: float) -> np.ndarray:
    """Angular integral of ``z z^T 1{PP}`` over the unit circle at angle ``phi``.

    Eigenvalues ``((pi - phi) + sin(phi))/2`` and ``((pi - phi) - sin(phi))/2``.
    """
    phi = _checkAngle(phi)
    s, c = np.sin(phi), np.cos(phi)
    return symFromUpper(0.5 * np.array([[np.pi - phi + s * c, s * s],
                                        [0., np.pi - phi - s * c]]))


def compareClosedForm2d(prof: SmoothnessProfile, tol: float = 0.01) -> Dict[str, Any]:
    """Compare a profile of two-dimensional unit-sphere input with the planar closed forms.

    At every grid angle ``gamma`` and ``ell`` must match the eigenvalues of
    ``closedForm2dJoint(phi) / (2 pi)``, and ``ell_minus`` the largest
    eigenvalue ``(phi + sin(phi)) / (4 pi)`` of ``closedForm2d(phi) / (2 pi)``,
    each within ``3 se + tol``.
    """
    if prof.p != 2:
        raise DomainError(f"the planar closed forms need p = 2, the profile has p = {prof.p}")
    rows = []
    for i, phi in enumerate(prof.phis):
        joint = eigSym(closedForm2dJoint(phi) / (2 * np.pi))
        exact = {'gamma': joint.lambdaMin, 'ell': joint.lambdaMax,
                 'ell_minus': eigSym(closedForm2d(phi) / (2 * np.pi)).lambdaMax}
        row: Dict[str, Any] = {'phi': float(phi)}
        ok = True
        for name, value in exact.items():
            dev = abs(getattr(prof, name)[i] - value)
            ok = ok and dev <= 3 * getattr(prof, f'{name}_se')[i] + tol
            row.update({f'{name}_exact': float(value), f'{name}_deviation': float(dev)})
        row['passed'] = bool(ok)
        rows.append(row)
    return {'check': 'closed_form_2d', 'tolerance': tol, 'rows': rows,
            'passed': all(r['passed'] for r in rows)}


def verifyBetaBounds(prof: SmoothnessProfile, kind: DistributionKind | str | None = None) -> Dict[str, Any]:
    """Compare the estimated ``beta`` with its known bound.

    The estimate is converted to the unnormalized angular convention
    (``2 pi * beta_hat``). Unit-sphere input must give 1 in two dimensions
    (checked against :data:`UNIT_SPHERE_BETA_RANGE`) and at most 1 above;
    standard Gaussian input must give at most ``p``.
    """
    if kind is None:
        kind = prof.kind
    if isinstance(kind, str):
        kind = DistributionKind.fromName(kind)
    converted = 2 * np.pi * prof.beta_hat
    report: Dict[str, Any] = {
        'check': 'beta_bound', 'kind': kind.value if kind else None, 'p': prof.p,
        'beta_hat': prof.beta_hat, 'converted': float(converted),
        'n_samples': prof.n_samples, 'n_w': prof.n_w,
    }
    lo, hi = UNIT_SPHERE_BETA_RANGE
    if kind is DistributionKind.UnitSphere and prof.p == 2:
        report.update(bound=1., low=lo, high=hi, passed=bool(lo <= converted <= hi))
    elif kind is DistributionKind.UnitSphere:
        report.update(bound=1., low=None, high=hi, passed=bool(converted <= hi))
    elif kind is DistributionKind.StandardGaussian:
        report.update(bound=float(prof.p), low=None, high=float(prof.p),
                      passed=bool(converted <= prof.p))
    else:
        report.update(bound=None, low=None, high=None, passed=None)
    return report


def phiStar(prof: SmoothnessProfile) -> float:
    """Largest grid angle up to which ``gamma >= 6 * l_cross`` holds, capped at ``pi/2``.

    The condition must hold at every grid angle up to the returned one.

    :raises TheoremPreconditionError: if it fails already at the smallest angle.
    """
    threshold = 6 * prof.l_cross_hat
    best = None
    for phi, g in zip(prof.phis, prof.gamma):
        if phi > np.pi / 2 + 1e-12 or g < threshold:
            break
        best = phi
    if best is None:
        raise TheoremPreconditionError(
            f"gamma({prof.phis[0]:.3g}) = {prof.gamma[0]:.3g} is below 6 * l_cross = {threshold:.3g}")
    return float(min(best, np.pi / 2))

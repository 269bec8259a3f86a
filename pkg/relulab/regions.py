"""
relulab.regions
^^^^^^^^^^^^^^^

Activation regions of a student/teacher pair and the region-restricted
second moments that drive the population gradient.

A patch ``z`` falls in exactly one region:

==== =================================
PP   ``w^T z >= 0`` and ``w*^T z >= 0``
PN   ``w^T z >= 0`` and ``w*^T z < 0``
NP   ``w^T z < 0`` and ``w*^T z >= 0``
NN   ``w^T z < 0`` and ``w*^T z < 0``
==== =================================

For a sample ``Z`` with ``k`` patches, ``Z_S = 1/k sum_i Z_i 1{Z_i in S}`` is
the region average. All moments are probability-normalized expectations
estimated by Monte Carlo means over a dataset.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Any, Dict, List, Tuple

import numpy as np

from . import helpers
from .base import DomainError, asVector, checkSameDim
from .distributions import Dataset
from .linalg import eigSym, norm, symFromUpper

logger = logging.getLogger(__name__)

#: relative eigenvalue tolerance for the PSD check of diagonal moments.
PSD_TOL = 1e-8


@unique
class Region(Enum):
    PP = 'PP'
    PN = 'PN'
    NN = 'NN'
    NP = 'NP'


def _checkPair(w, wStar, p: int | None = None) -> Tuple[np.ndarray, np.ndarray]:
    w = asVector(w, 'w')
    wStar = asVector(wStar, 'w_star')
    checkSameDim(w, wStar.shape[0])
    if p is not None:
        checkSameDim(w, p)
    norm(w, 'w')
    norm(wStar, 'w_star')
    return w, wStar


def classify(w, wStar, z) -> Region:
    """Activation region of one patch.

    :raises DomainError: if ``w`` or ``w_star`` is zero or the dimensions differ.
    """
    z = asVector(z, 'z')
    w, wStar = _checkPair(w, wStar, z.shape[0])
    studentOn = float(w @ z) >= 0
    teacherOn = float(wStar @ z) >= 0
    if studentOn:
        return Region.PP if teacherOn else Region.PN
    return Region.NP if teacherOn else Region.NN


def regionMasks(w, wStar, samples: np.ndarray) -> Dict[Region, np.ndarray]:
    """Boolean ``(n, k)`` membership masks of every region."""
    studentOn = np.einsum('npk,p->nk', samples, w) >= 0
    teacherOn = np.einsum('npk,p->nk', samples, wStar) >= 0
    return {
        Region.PP: studentOn & teacherOn,
        Region.PN: studentOn & ~teacherOn,
        Region.NP: ~studentOn & teacherOn,
        Region.NN: ~studentOn & ~teacherOn,
    }


def regionCounts(w, wStar, dataset: Dataset) -> Dict[Region, int]:
    """Number of patches in each region; the counts add up to ``n * k``."""
    w, wStar = _checkPair(w, wStar, dataset.p)
    return {r: int(m.sum()) for r, m in regionMasks(w, wStar, dataset.samples).items()}


@dataclass
class RegionVectors:
    """Per-sample region averages ``Z_S`` for the three regions that enter the gradient."""
    z_pp: np.ndarray
    z_pn: np.ndarray
    z_np: np.ndarray


def _averages(w, wStar, samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = samples.shape[2]
    masks = regionMasks(w, wStar, samples)
    return tuple(np.einsum('npk,nk->np', samples, masks[r].astype(float)) / k
                 for r in (Region.PP, Region.PN, Region.NP))


def regionVectors(w, wStar, z) -> RegionVectors:
    """Region averages of a single ``(p, k)`` sample."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise DomainError(f"a patch sample must have shape (p, k), got {z.shape}")
    w, wStar = _checkPair(w, wStar, z.shape[0])
    zpp, zpn, znp = _averages(w, wStar, z[None, ...])
    return RegionVectors(zpp[0], zpn[0], znp[0])


@dataclass
class MomentSet:
    """Monte Carlo region moments at one ``(w, w_star)``.

    :param a_pp: ``E[z z^T 1{z in PP}]`` pooled over all patches
        (the joint-activation matrix for ``k = 1``).
    :param a_pn: ``E[z z^T 1{z in PN}]`` pooled over all patches.
    :param m_pp: ``E[Z_PP Z_PP^T]``.
    :param m_pn: ``E[Z_PN Z_PN^T]``.
    :param c_pp_pn: ``E[Z_PP Z_PN^T]`` (not symmetric).
    :param c_pp_np: ``E[Z_PP Z_NP^T]``.
    :param c_pn_np: ``E[Z_PN Z_NP^T]``.
    :param a_avg: ``E[Z_avg Z_avg^T 1{w^T Z_avg >= 0, w*^T Z_avg >= 0}]`` for
        the patch average ``Z_avg``.
    :param n_used: number of samples the estimate is based on.
    """
    a_pp: np.ndarray
    a_pn: np.ndarray
    m_pp: np.ndarray
    m_pn: np.ndarray
    c_pp_pn: np.ndarray
    c_pp_np: np.ndarray
    c_pn_np: np.ndarray
    a_avg: np.ndarray
    n_used: int
    p: int
    k: int
    w: np.ndarray = field(repr=False, default=None)
    w_star: np.ndarray = field(repr=False, default=None)

    SYMMETRIC = ('a_pp', 'a_pn', 'm_pp', 'm_pn', 'a_avg')
    CROSS = ('c_pp_pn', 'c_pp_np', 'c_pn_np')

    def psdViolations(self, tol: float = PSD_TOL) -> Dict[str, float]:
        """Diagonal moments whose smallest eigenvalue is below ``-tol * lambda_max``."""
        ret = {}
        for name in self.SYMMETRIC:
            e = eigSym(getattr(self, name))
            if e.lambdaMin < -tol * max(e.lambdaMax, 1.):
                ret[name] = e.lambdaMin
        return ret

    def toDict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {name: getattr(self, name).tolist()
                             for name in self.SYMMETRIC + self.CROSS}
        d.update(n_used=self.n_used, p=self.p, k=self.k,
                 w=None if self.w is None else np.asarray(self.w).tolist(),
                 w_star=None if self.w_star is None else np.asarray(self.w_star).tolist())
        return d

    @classmethod
    def fromDict(cls, d: Dict[str, Any]) -> 'MomentSet':
        kwargs = {name: symFromUpper(d[name]) for name in cls.SYMMETRIC}
        kwargs.update({name: np.asarray(d[name], dtype=float) for name in cls.CROSS})
        return cls(n_used=int(d['n_used']), p=int(d['p']), k=int(d['k']),
                   w=None if d.get('w') is None else np.asarray(d['w'], dtype=float),
                   w_star=None if d.get('w_star') is None else np.asarray(d['w_star'], dtype=float),
                   **kwargs)


def _momentSums(w, wStar, samples: np.ndarray) -> Dict[str, np.ndarray]:
    """Unnormalized moment sums over a block of samples."""
    masks = regionMasks(w, wStar, samples)
    zpp, zpn, znp = _averages(w, wStar, samples)
    pp = masks[Region.PP].astype(float)
    pn = masks[Region.PN].astype(float)

    zAvg = samples.mean(axis=2)
    avgOn = ((zAvg @ w) >= 0) & ((zAvg @ wStar) >= 0)
    zAvgOn = zAvg[avgOn]

    rows = samples.transpose(0, 2, 1).reshape(-1, samples.shape[1])
    pp, pn = pp.reshape(-1), pn.reshape(-1)

    return {
        'a_pp': (rows * pp[:, None]).T @ rows,
        'a_pn': (rows * pn[:, None]).T @ rows,
        'm_pp': zpp.T @ zpp,
        'm_pn': zpn.T @ zpn,
        'c_pp_pn': zpp.T @ zpn,
        'c_pp_np': zpp.T @ znp,
        'c_pn_np': zpn.T @ znp,
        'a_avg': zAvgOn.T @ zAvgOn,
    }


def _sumsOver(w, wStar, samples: np.ndarray, parallel: bool) -> Dict[str, np.ndarray]:
    return helpers.chunkedSum(lambda start, stop: _momentSums(w, wStar, samples[start:stop]),
                              samples.shape[0], parallel)


def _fromSums(sums: Dict[str, np.ndarray], n: int, k: int, w, wStar) -> MomentSet:
    m = {name: value / n for name, value in sums.items()}
    m['a_pp'] = m['a_pp'] / k
    m['a_pn'] = m['a_pn'] / k
    for name in MomentSet.SYMMETRIC:
        m[name] = symFromUpper(m[name])
    return MomentSet(n_used=n, p=w.shape[0], k=k, w=w.copy(), w_star=wStar.copy(), **m)


def estimateMoments(dataset: Dataset, w, wStar, parallel: bool = True) -> MomentSet:
    """Monte Carlo region moments of ``dataset`` at ``(w, w_star)``.

    :raises DomainError: on an empty dataset, zero vectors or dimension mismatches.
    """
    dataset.requireNonEmpty()
    w, wStar = _checkPair(w, wStar, dataset.p)
    sums = _sumsOver(w, wStar, dataset.samples, parallel)
    return _fromSums(sums, dataset.n, dataset.k, w, wStar)


def batchBounds(n: int, nBatches: int) -> List[Tuple[int, int]]:
    """Contiguous, nearly equal batches covering ``range(n)``."""
    nBatches = max(1, min(nBatches, n))
    edges = np.linspace(0, n, nBatches + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def estimateBatchMoments(dataset: Dataset, w, wStar, nBatches: int = 10,
                         parallel: bool = True) -> Tuple[MomentSet, List[MomentSet]]:
    """Moments on the whole dataset and on each of ``nBatches`` contiguous batches.

    The batch estimates feed batch-means standard errors. The full-data
    moments are assembled from the batch sums, so each sample is visited once.
    """
    dataset.requireNonEmpty()
    w, wStar = _checkPair(w, wStar, dataset.p)
    batchSums = []
    batches = []
    for start, stop in batchBounds(dataset.n, nBatches):
        sums = _sumsOver(w, wStar, dataset.samples[start:stop], parallel)
        batchSums.append(sums)
        batches.append(_fromSums(sums, stop - start, dataset.k, w, wStar))
    total = batchSums[0]
    for sums in batchSums[1:]:
        total = {key: total[key] + sums[key] for key in total}
    return _fromSums(total, dataset.n, dataset.k, w, wStar), batches


def batchStandardError(values) -> float:
    """Batch-means standard error of the mean of per-batch statistics."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def populationGradient(moments: MomentSet, w, wStar) -> np.ndarray:
    """Expected loss gradient assembled from region moments.

    For ``k = 1``::

        a_pp (w - w*) + a_pn w

    For ``k > 1``, expanding ``(Z_PP + Z_PN)(Z_PP + Z_PN)^T w - (Z_PP + Z_PN)(Z_PP + Z_NP)^T w*``::

        m_pp (w - w*) + (c_pp_pn + c_pp_pn^T + m_pn) w
                      - (c_pp_np + c_pp_pn^T + c_pn_np) w*

    :raises DomainError: if the vectors do not match the moments' dimension.
    """
    w = asVector(w, 'w')
    wStar = asVector(wStar, 'w_star')
    checkSameDim(w, moments.p)
    checkSameDim(wStar, moments.p, 'w_star')
    if moments.k == 1:
        return moments.a_pp @ (w - wStar) + moments.a_pn @ w
    m = moments
    return (m.m_pp @ (w - wStar)
            + (m.c_pp_pn + m.c_pp_pn.T + m.m_pn) @ w
            - (m.c_pp_np + m.c_pp_pn.T + m.c_pn_np) @ wStar)


def lemmaDecomposition(moments: MomentSet, w, wStar) -> Tuple[float, float]:
    """Split ``<population gradient, w - w*>`` into its two non-negative terms.

    ``term1 = (w - w*)^T a_pp (w - w*)`` and ``term2 = (w - w*)^T a_pn w``.

    :raises DomainError: for multi-patch moments.
    """
    if moments.k != 1:
        raise DomainError("the two-term decomposition needs single-patch (k = 1) moments")
    w = asVector(w, 'w')
    wStar = asVector(wStar, 'w_star')
    checkSameDim(w, moments.p)
    d = w - wStar
    return float(d @ moments.a_pp @ d), float(d @ moments.a_pn @ w)


def lemmaTermSamples(dataset: Dataset, w, wStar) -> np.ndarray:
    """Per-sample contributions to the two decomposition terms, shape ``(n, 2)``.

    Their column means are the Monte Carlo estimates of ``term1`` and
    ``term2``; their spread gives the statistical error.
    """
    dataset.requireNonEmpty()
    w, wStar = _checkPair(w, wStar, dataset.p)
    samples = dataset.samples
    masks = regionMasks(w, wStar, samples)
    d = w - wStar
    dz = np.einsum('npk,p->nk', samples, d)
    wz = np.einsum('npk,p->nk', samples, w)
    k = dataset.k
    term1 = np.sum(dz * dz * masks[Region.PP], axis=1) / k
    term2 = np.sum(dz * wz * masks[Region.PN], axis=1) / k
    return np.stack([term1, term2], axis=1)

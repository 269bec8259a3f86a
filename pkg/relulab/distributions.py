"""
relulab.distributions
^^^^^^^^^^^^^^^^^^^^^

Patch datasets: standard Gaussian, unit-norm rotationally invariant and
clustered (margin-controlled) patch families, datasets read from text files,
and patch extraction from raw 1-D inputs.

A dataset holds ``n`` samples of ``k`` patches of dimension ``p`` in one
array of shape ``(n, p, k)``; ``samples[j, :, i]`` is patch ``i`` of sample
``j``.

Generation is split in chunks of :data:`relulab.helpers.CHUNK_SIZE` samples;
chunk ``c`` draws from the random stream ``(seed, 'dataset', c)``, so the
result does not depend on how many worker threads produce the chunks.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum, unique
from typing import Any, Dict, Optional

import numpy as np

from . import helpers, serialize
from .base import DomainError, DatasetFormatError, asVector, checkSameDim
from .linalg import anglesTo, norm

logger = logging.getLogger(__name__)


@unique
class DistributionKind(Enum):
    """Patch distribution families."""
    #: every patch coordinate i.i.d. N(0, 1).
    StandardGaussian = 'gaussian'
    #: every patch uniform on the unit sphere.
    UnitSphere = 'unit_sphere'
    #: unit patches clustered around a per-sample center away from a margin.
    ClusteredPatches = 'clustered'
    #: samples read from a dataset text file.
    FromFile = 'from_file'

    @classmethod
    def fromName(cls, name: str) -> 'DistributionKind':
        """Look up a kind by its config value (``'gaussian'``) or its name."""
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise DomainError(f"unknown distribution kind '{name}', "
                          f"expected one of {[k.value for k in cls]}")


@dataclass
class DistributionSpec:
    """Description of a patch distribution.

    :param kind: distribution family.
    :param p: patch dimension.
    :param k: number of patches per sample.
    :param rho: maximal angle between a patch and the patch average
        (clustered patches only).
    :param mu: bound on the angular mass near the margin, per radian
        (clustered patches only).
    :param margin_dir: direction the margin is measured against
        (clustered patches only). ``None`` disables the band exclusion.
    :param gap: half-width of the angular band around ``pi/2`` (measured to
        ``margin_dir``) that sample centers avoid. ``None`` means
        ``min(1.5 rho, (rho + pi/2) / 2)``: patches then stay out of the band
        of half-width ``gap - rho/2`` (all of ``rho`` when ``rho <= pi/4``).
    :param path: dataset file (from-file only).
    """
    kind: DistributionKind
    p: int
    k: int = 1
    rho: float = 0.
    mu: float = 0.
    margin_dir: Optional[np.ndarray] = None
    gap: Optional[float] = None
    path: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = DistributionKind.fromName(self.kind)
        if self.margin_dir is not None:
            self.margin_dir = asVector(self.margin_dir, 'margin_dir')
        self.validate()

    def validate(self) -> None:
        if self.p < 1 or self.k < 1:
            raise DomainError(f"need p >= 1 and k >= 1, got p={self.p}, k={self.k}")
        if not 0. <= self.rho < np.pi / 2:
            raise DomainError(f"rho must lie in [0, pi/2), got {self.rho}")
        if self.mu < 0:
            raise DomainError(f"mu must be non-negative, got {self.mu}")
        if self.kind is DistributionKind.ClusteredPatches:
            if self.p < 2:
                raise DomainError("clustered patches need p >= 2")
            if not 0. <= self.bandGap < np.pi / 2:
                raise DomainError(f"band gap {self.bandGap} must lie in [0, pi/2)")
            if self.margin_dir is not None and self.margin_dir.shape[0] != self.p:
                raise DomainError("margin_dir does not match the patch dimension")
        if self.kind is DistributionKind.FromFile and not self.path:
            raise DomainError("a from-file distribution needs a path")

    @property
    def bandGap(self) -> float:
        if self.gap is None:
            return min(1.5 * self.rho, (self.rho + np.pi / 2) / 2)
        return float(self.gap)

    def toDict(self) -> Dict[str, Any]:
        ret: Dict[str, Any] = {'kind': self.kind.value, 'p': self.p, 'k': self.k}
        if self.kind is DistributionKind.ClusteredPatches:
            ret.update(rho=self.rho, mu=self.mu, gap=self.bandGap,
                       margin_dir=None if self.margin_dir is None else self.margin_dir.tolist())
        if self.kind is DistributionKind.FromFile:
            ret['path'] = self.path
        return ret

    @classmethod
    def fromDict(cls, d: Dict[str, Any]) -> 'DistributionSpec':
        return cls(kind=DistributionKind.fromName(d['kind']),
                   p=int(d['p']), k=int(d.get('k', 1)),
                   rho=float(d.get('rho', 0.)), mu=float(d.get('mu', 0.)),
                   margin_dir=d.get('margin_dir'), gap=d.get('gap'),
                   path=d.get('path'))


@dataclass
class Dataset:
    """I.i.d. patch samples.

    :param samples: array of shape ``(n, p, k)``.
    :param spec: the distribution the samples were drawn from.
    :param seed: seed used for generation (0 for file data).
    :param metadata: generator details, e.g. the band gap and the number of
        rejected draws for clustered patches.
    """
    samples: np.ndarray
    spec: DistributionSpec
    seed: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 3:
            raise DomainError(f"samples must have shape (n, p, k), got {self.samples.shape}")
        if self.samples.shape[1:] != (self.spec.p, self.spec.k):
            raise DomainError(f"samples of shape {self.samples.shape[1:]} do not match "
                              f"p={self.spec.p}, k={self.spec.k}")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("dataset has non-finite entries")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def p(self) -> int:
        return self.samples.shape[1]

    @property
    def k(self) -> int:
        return self.samples.shape[2]

    def __len__(self) -> int:
        return self.n

    def patches(self) -> np.ndarray:
        """All patches as rows, shape ``(n * k, p)``."""
        return self.samples.transpose(0, 2, 1).reshape(-1, self.p)

    def subset(self, start: int, stop: int) -> 'Dataset':
        return Dataset(self.samples[start:stop], self.spec, self.seed, dict(self.metadata))

    def requireNonEmpty(self) -> None:
        if self.n == 0:
            raise DomainError("dataset is empty")


def _gaussianChunk(rng: np.random.Generator, m: int, spec: DistributionSpec) -> Dict[str, Any]:
    return {'samples': rng.standard_normal((m, spec.p, spec.k))}


def _sphereChunk(rng: np.random.Generator, m: int, spec: DistributionSpec) -> Dict[str, Any]:
    z = rng.standard_normal((m, spec.p, spec.k))
    n = np.linalg.norm(z, axis=1, keepdims=True)
    while np.any(n == 0):
        bad = np.nonzero(n[:, 0, :] == 0)
        z[bad[0], :, bad[1]] = rng.standard_normal((len(bad[0]), spec.p))
        n = np.linalg.norm(z, axis=1, keepdims=True)
    return {'samples': z / n}


def _unitRows(rng: np.random.Generator, shape) -> np.ndarray:
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _clusteredChunk(rng: np.random.Generator, m: int, spec: DistributionSpec) -> Dict[str, Any]:
    """Clustered unit patches.

    Each sample gets a center ``c`` uniform on the sphere, redrawn while
    ``|angle(c, margin_dir) - pi/2| < gap``. Each patch is ``c`` rotated by an
    angle uniform in ``[0, rho/2]`` toward an independent uniform direction
    perpendicular to ``c``. Samples with a patch further than ``rho`` from
    the patch average are redrawn.
    """
    p, k, rho, gap = spec.p, spec.k, spec.rho, spec.bandGap
    rejectedCenters = 0
    rejectedSamples = 0

    def centers(count: int) -> np.ndarray:
        nonlocal rejectedCenters
        c = _unitRows(rng, (count, p))
        if spec.margin_dir is None:
            return c
        while True:
            bad = np.abs(anglesTo(c, spec.margin_dir) - np.pi / 2) < gap
            if not np.any(bad):
                return c
            rejectedCenters += int(bad.sum())
            c[bad] = _unitRows(rng, (int(bad.sum()), p))

    def patchesAround(c: np.ndarray) -> np.ndarray:
        count = c.shape[0]
        u = rng.standard_normal((count, k, p))
        u -= np.einsum('mkp,mp->mk', u, c)[..., None] * c[:, None, :]
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        phi = rng.uniform(0., rho / 2, size=(count, k))[..., None]
        z = np.cos(phi) * c[:, None, :] + np.sin(phi) * u
        z /= np.linalg.norm(z, axis=-1, keepdims=True)
        return z                                    # (count, k, p)

    def violations(z: np.ndarray) -> np.ndarray:
        avg = z.mean(axis=1, keepdims=True)
        cos = np.sum(z * avg, axis=-1) / (np.linalg.norm(z, axis=-1) * np.linalg.norm(avg, axis=-1))
        return np.any(np.arccos(np.clip(cos, -1., 1.)) > rho, axis=1)

    z = patchesAround(centers(m))
    bad = violations(z)
    while np.any(bad):
        rejectedSamples += int(bad.sum())
        z[bad] = patchesAround(centers(int(bad.sum())))
        bad = violations(z)

    return {'samples': z.transpose(0, 2, 1),
            'rejected_centers': rejectedCenters,
            'rejected_samples': rejectedSamples}


_GENERATORS = {
    DistributionKind.StandardGaussian: _gaussianChunk,
    DistributionKind.UnitSphere: _sphereChunk,
    DistributionKind.ClusteredPatches: _clusteredChunk,
}


def sample(spec: DistributionSpec, n: int, seed: int = 0) -> Dataset:
    """Draw ``n`` i.i.d. samples from ``spec``.

    The result is a deterministic function of ``(spec, n, seed)``. For
    :attr:`DistributionKind.FromFile` the first ``n`` samples of the file are
    returned and ``seed`` is ignored.

    :raises DomainError: if ``n < 1``.
    :raises DatasetFormatError: if a dataset file is unreadable, ill-formed,
        does not match ``(p, k)`` or holds fewer than ``n`` samples.
    """
    if n < 1:
        raise DomainError(f"need at least one sample, got n={n}")

    if spec.kind is DistributionKind.FromFile:
        ds = loadDataset(spec.path, spec)
        if ds.n < n:
            raise DatasetFormatError(f"{spec.path} holds {ds.n} samples, {n} requested")
        return ds.subset(0, n)

    generate = _GENERATORS[spec.kind]
    bounds = helpers.chunkBounds(n)

    def work(chunk):
        idx, (start, stop) = chunk
        return generate(helpers.childRng(seed, 'dataset', idx), stop - start, spec)

    parts = helpers.mapOrdered(work, list(enumerate(bounds)))
    samples = np.concatenate([part['samples'] for part in parts], axis=0)
    metadata: Dict[str, Any] = {'chunks': len(bounds)}
    if spec.kind is DistributionKind.ClusteredPatches:
        metadata['gap'] = spec.bandGap
        metadata['rejected_centers'] = sum(part['rejected_centers'] for part in parts)
        metadata['rejected_samples'] = sum(part['rejected_samples'] for part in parts)
    logger.debug(f"Drew {n} samples of {spec.kind.value} (p={spec.p}, k={spec.k}), seed {seed}.")
    return Dataset(samples, spec, seed, metadata)


def loadDataset(path: str, spec: Optional[DistributionSpec] = None) -> Dataset:
    """Read a dataset text file.

    :param spec: if given, the file's ``p`` and ``k`` must match it.
    :raises DatasetFormatError: on unreadable or ill-formed files.
    """
    samples = serialize.readDatasetArray(path)
    n, p, k = samples.shape
    if spec is not None and (spec.p, spec.k) != (p, k):
        raise DatasetFormatError(f"{path} has p={p}, k={k}; expected p={spec.p}, k={spec.k}")
    fileSpec = DistributionSpec(DistributionKind.FromFile, p, k, path=str(path))
    return Dataset(samples, fileSpec, 0, {'source': str(path)})


def saveDataset(dataset: Dataset, path: str) -> None:
    serialize.writeDatasetArray(path, dataset.samples)


def fromArray(samples, kind: DistributionKind = DistributionKind.FromFile, **specKwargs) -> Dataset:
    """Wrap an ``(n, p, k)`` array (or ``(p, k)`` for a single sample) as a dataset."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None, ...]
    if kind is DistributionKind.FromFile:
        specKwargs.setdefault('path', '<array>')
    spec = DistributionSpec(kind, samples.shape[1], samples.shape[2], **specKwargs)
    return Dataset(samples, spec)


def duplicatePatches(dataset: Dataset, k: Optional[int] = None) -> Dataset:
    """Repeat the first patch of every sample ``k`` times (default: the dataset's ``k``, at least 2).

    All patches of a sample then fall in the same region, so every
    cross-region covariance vanishes.
    """
    k = max(2, dataset.k) if k is None else k
    if k < 1:
        raise DomainError(f"need k >= 1, got {k}")
    first = dataset.samples[:, :, :1]
    return Dataset(np.repeat(first, k, axis=2), replace(dataset.spec, k=k), dataset.seed,
                   {**dataset.metadata, 'duplicated_from_k': dataset.k})


def extractPatches(x, patchSize: int, stride: int = 1) -> np.ndarray:
    """Sliding-window patches of a 1-D input.

    Column ``i`` of the result is ``x[i*stride : i*stride + patchSize]``; there
    are ``(len(x) - patchSize) // stride + 1`` columns.

    Example::
        >>> extractPatches([1, 2, 3], 2, 1)
        array([[1., 2.],
               [2., 3.]])

    :raises DomainError: if ``patchSize`` or ``stride`` is below 1 or the
        input is shorter than a patch.
    """
    x = asVector(x, 'x')
    if patchSize < 1 or stride < 1:
        raise DomainError(f"patch size and stride must be >= 1, got {patchSize}, {stride}")
    if patchSize > x.shape[0]:
        raise DomainError(f"patch size {patchSize} exceeds input length {x.shape[0]}")
    windows = np.lib.stride_tricks.sliding_window_view(x, patchSize)[::stride]
    return np.ascontiguousarray(windows.T)


def marginMass(dataset: Dataset, wStar, phi: float) -> float:
    """Fraction of patches whose angle to ``wStar`` lies within ``phi`` of ``pi/2``.

    :raises DomainError: on an empty dataset, a zero ``wStar`` or
        ``phi`` outside ``(0, pi/2]``.
    """
    dataset.requireNonEmpty()
    wStar = asVector(wStar, 'w_star')
    checkSameDim(wStar, dataset.p, 'w_star')
    norm(wStar, 'w_star')
    if not 0. < phi <= np.pi / 2:
        raise DomainError(f"phi must lie in (0, pi/2], got {phi}")
    angles = anglesTo(dataset.patches(), wStar)
    return float(np.mean(np.abs(angles - np.pi / 2) <= phi))

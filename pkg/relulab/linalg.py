"""
relulab.linalg
^^^^^^^^^^^^^^

Small dense real linear algebra: angles, symmetric matrices and a cyclic
Jacobi eigensolver, and the rotations used to place a student at a given
angle to the teacher.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .base import DomainError, asVector

logger = logging.getLogger(__name__)

#: relative off-diagonal tolerance at which the Jacobi sweeps stop.
JACOBI_TOL = 1e-12

#: maximal number of full Jacobi sweeps.
JACOBI_MAX_SWEEPS = 100

#: tolerance on |<u, w_star>| (unit vectors) for ``rotateToward``.
ORTHOGONALITY_TOL = 1e-10


@dataclass
class EigenResult:
    """Spectrum of a symmetric matrix.

    :param eigenvalues: eigenvalues, sorted in descending order.
    :param eigenvectors: orthonormal eigenvectors, column ``i`` belongs to
        ``eigenvalues[i]``.
    :param sweeps: number of Jacobi sweeps that were needed.
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    @property
    def lambdaMax(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambdaMin(self) -> float:
        return float(self.eigenvalues[-1])

    def reconstruct(self) -> np.ndarray:
        """``V diag(lambda) V^T``."""
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def norm(v: np.ndarray, name: str = 'vector') -> float:
    """Euclidean norm; raises :class:`DomainError` on a zero vector."""
    n = float(np.linalg.norm(v))
    if n == 0.:
        raise DomainError(f"{name} has zero norm")
    return n


def angle(u, v) -> float:
    """Angle between ``u`` and ``v`` in ``[0, pi]``.

    :raises DomainError: if either vector has zero norm.
    """
    u = asVector(u, 'u')
    v = asVector(v, 'v')
    if u.shape != v.shape:
        raise DomainError(f"cannot compare vectors of dimension {u.shape[0]} and {v.shape[0]}")
    cos = float(u @ v) / (norm(u, 'u') * norm(v, 'v'))
    return float(np.arccos(np.clip(cos, -1., 1.)))


def anglesTo(vectors: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Angles between every row of ``vectors`` and ``ref``.

    Rows with zero norm get the angle ``pi/2``.
    """
    ref = asVector(ref, 'ref')
    refNorm = norm(ref, 'ref')
    norms = np.linalg.norm(vectors, axis=-1)
    dots = vectors @ ref
    with np.errstate(invalid='ignore', divide='ignore'):
        cos = np.where(norms > 0, dots / (norms * refNorm), 0.)
    return np.arccos(np.clip(cos, -1., 1.))


def symFromUpper(m) -> np.ndarray:
    """Symmetric matrix built from the upper triangle of ``m``.

    The lower triangle of the input is ignored, so the result is symmetric
    exactly, not just up to rounding.

    :raises DomainError: if ``m`` is not square or has non-finite entries
        in its upper triangle.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    upper = np.triu(m)
    if not np.all(np.isfinite(upper)):
        raise DomainError("matrix has non-finite entries")
    return upper + np.triu(m, 1).T


def eigSym(m) -> EigenResult:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep annihilates every off-diagonal entry once, in row order. The
    iteration stops once the off-diagonal Frobenius norm drops below
    ``JACOBI_TOL`` times the Frobenius norm of the matrix, or after
    ``JACOBI_MAX_SWEEPS`` sweeps (a warning is logged then).

    :param m: square matrix; only its upper triangle is read.
    :returns: an :class:`EigenResult` with eigenvalues in descending order.
    :raises DomainError: on non-square or non-finite input.
    """
    a = symFromUpper(m)
    p = a.shape[0]
    v = np.eye(p)
    scale = float(np.linalg.norm(a))
    sweeps = 0

    def offNorm():
        return float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.)))

    if scale == 0. or p == 1:
        return EigenResult(np.diag(a).copy(), v, 0)

    while offNorm() > JACOBI_TOL * scale:
        if sweeps >= JACOBI_MAX_SWEEPS:
            logger.warning(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps "
                           f"(off-diagonal norm {offNorm():.3e}).")
            break
        sweeps += 1
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = a[i, j]
                if aij == 0.:
                    continue
                tau = (a[j, j] - a[i, i]) / (2. * aij)
                sign = 1. if tau >= 0 else -1.
                t = sign / (abs(tau) + np.sqrt(1. + tau * tau))
                c = 1. / np.sqrt(1. + t * t)
                s = t * c

                colI, colJ = a[:, i].copy(), a[:, j].copy()
                a[:, i] = c * colI - s * colJ
                a[:, j] = s * colI + c * colJ
                rowI, rowJ = a[i, :].copy(), a[j, :].copy()
                a[i, :] = c * rowI - s * rowJ
                a[j, :] = s * rowI + c * rowJ
                a[i, j] = a[j, i] = 0.

                vI, vJ = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vI - s * vJ
                v[:, j] = s * vI + c * vJ

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind='stable')[::-1]
    return EigenResult(eigenvalues[order], v[:, order], sweeps)


def operatorNorm(m) -> float:
    """Spectral norm of a (not necessarily symmetric) square matrix.

    Computed as ``sqrt(lambda_max(M^T M))`` with :func:`eigSym`.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    lmax = eigSym(m.T @ m).lambdaMax
    return float(np.sqrt(max(lmax, 0.)))


def randomPerpendicular(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit vector drawn uniformly from the sphere orthogonal to ``w``.

    :raises DomainError: if ``w`` is zero or one-dimensional.
    """
    w = asVector(w, 'w')
    if w.shape[0] < 2:
        raise DomainError("no perpendicular direction exists in dimension 1")
    wHat = w / norm(w, 'w')
    while True:
        g = rng.standard_normal(w.shape[0])
        g -= (g @ wHat) * wHat
        n = np.linalg.norm(g)
        if n > 1e-12:
            return g / n


def rotateToward(wStar, uPerp, phi: float) -> np.ndarray:
    """Unit vector at angle ``phi`` from ``wStar`` in the plane spanned with ``uPerp``.

    Returns ``cos(phi) * wStar_hat + sin(phi) * uPerp_hat``.

    :raises DomainError: if ``uPerp`` is not orthogonal to ``wStar``, either
        vector is zero, or ``phi`` lies outside ``[0, pi]``.
    """
    wStar = asVector(wStar, 'w_star')
    uPerp = asVector(uPerp, 'u_perp')
    if not 0. <= phi <= np.pi:
        raise DomainError(f"angle {phi} outside [0, pi]")
    if wStar.shape != uPerp.shape:
        raise DomainError("w_star and u_perp differ in dimension")
    wHat = wStar / norm(wStar, 'w_star')
    uHat = uPerp / norm(uPerp, 'u_perp')
    if abs(float(wHat @ uHat)) >= ORTHOGONALITY_TOL:
        raise DomainError(f"u_perp is not orthogonal to w_star (cosine {float(wHat @ uHat):.3e})")
    out = np.cos(phi) * wHat + np.sin(phi) * uHat
    return out / np.linalg.norm(out)


def rotateAway(center: np.ndarray, phi: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector at angle ``phi`` from ``center`` in a uniformly random direction."""
    return rotateToward(center, randomPerpendicular(center, rng), phi)

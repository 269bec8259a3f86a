import numpy as np
import pytest  # type: ignore[import-not-found]
from numpy.testing import assert_allclose

from relulab.base import DomainError
from relulab.distributions import duplicatePatches
from relulab.linalg import eigSym, rotateToward
from relulab.model import batchGradient
from relulab.regions import (MomentSet, Region, batchStandardError, classify,
                             estimateBatchMoments, estimateMoments, lemmaDecomposition,
                             lemmaTermSamples, populationGradient, regionCounts, regionVectors)
from relulab.smoothness import closedForm2d, closedForm2dJoint
from relulab.testing.datasets import orthogonalTo, singleDirection


def test_classify():
    w, wStar = np.array([1., 0.]), np.array([0., 1.])
    assert classify(w, wStar, [1., 1.]) is Region.PP
    assert classify(w, wStar, [1., -1.]) is Region.PN
    assert classify(w, wStar, [-1., 1.]) is Region.NP
    assert classify(w, wStar, [-1., -1.]) is Region.NN
    # zero inner products count as active
    assert classify(w, wStar, [0., 0.]) is Region.PP
    with pytest.raises(DomainError):
        classify([0., 0.], wStar, [1., 1.])


def test_regionCounts_partition(gaussian_multi):
    counts = regionCounts([1., 0., 0.], [1., 1., 0.], gaussian_multi)
    assert sum(counts.values()) == gaussian_multi.n * gaussian_multi.k


def test_regionVectors_sum():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((3, 4))
    w, wStar = rng.standard_normal(3), rng.standard_normal(3)
    rv = regionVectors(w, wStar, z)
    active = (w @ z >= 0).astype(float)
    assert_allclose(rv.z_pp + rv.z_pn, (z * active).mean(axis=1))


@pytest.mark.parametrize('fixture', ['gaussian_data', 'gaussian_multi', 'clustered_data'])
def test_populationGradient_matchesBatchGradient(fixture, request):
    data = request.getfixturevalue(fixture)
    rng = np.random.default_rng(1)
    wStar = rng.standard_normal(data.p)
    w = rng.standard_normal(data.p)
    m = estimateMoments(data, w, wStar)
    assert_allclose(populationGradient(m, w, wStar), batchGradient(w, wStar, data),
                    rtol=1e-9, atol=1e-12)


def test_moments_psd(gaussian_multi):
    m = estimateMoments(gaussian_multi, [1., 0., 0.], [0.5, 1., 0.])
    assert m.psdViolations() == {}
    for name in MomentSet.SYMMETRIC:
        assert_allclose(getattr(m, name), getattr(m, name).T)


def test_moments_vanishingRegions(e1):
    data = singleDirection([1., 0.], 20)
    m = estimateMoments(data, [1., 0.], e1(2))
    assert_allclose(m.a_pp, [[1., 0.], [0., 0.]])
    assert_allclose(m.a_pn, 0.)
    assert_allclose(m.m_pn, 0.)


def test_moments_orthogonalToTeacher(e1):
    """Patches orthogonal to the teacher switch it on (``w*^T z = 0``)."""
    data = orthogonalTo(e1(3), 200, seed=3)
    m = estimateMoments(data, [0., 1., 0.], e1(3))
    assert_allclose(m.a_pn, 0.)
    assert np.trace(m.a_pp) == pytest.approx(
        np.mean(data.samples[:, 1, 0] >= 0), rel=1e-12)


def test_duplicatePatches_noCross(gaussian_data, e1):
    dup = duplicatePatches(gaussian_data, 4)
    rng = np.random.default_rng(4)
    w = rng.standard_normal(4)
    m = estimateMoments(dup, w, e1(4))
    for name in MomentSet.CROSS:
        assert_allclose(getattr(m, name), 0., atol=1e-15)


def test_batchMoments_consistent(gaussian_data, e1):
    w = np.array([1., 1., 0., 0.])
    full, batches = estimateBatchMoments(gaussian_data, w, e1(4), nBatches=10)
    assert len(batches) == 10
    assert_allclose(full.a_pp, estimateMoments(gaussian_data, w, e1(4)).a_pp, rtol=1e-12)
    assert_allclose(np.mean([b.a_pp for b in batches], axis=0), full.a_pp, rtol=1e-10)
    assert batchStandardError([1.]) == 0.
    assert batchStandardError([1., 3.]) == pytest.approx(1.)


def test_lemmaDecomposition(gaussian_data):
    rng = np.random.default_rng(5)
    wStar = rng.standard_normal(4)
    for _ in range(10):
        w = rng.standard_normal(4)
        m = estimateMoments(gaussian_data, w, wStar)
        t1, t2 = lemmaDecomposition(m, w, wStar)
        assert t1 >= 0 and t2 >= 0
        inner = populationGradient(m, w, wStar) @ (w - wStar)
        assert t1 + t2 == pytest.approx(inner, rel=1e-10)
        assert_allclose(lemmaTermSamples(gaussian_data, w, wStar).mean(axis=0), [t1, t2],
                        rtol=1e-9)


def test_lemmaDecomposition_multiPatch(gaussian_multi):
    m = estimateMoments(gaussian_multi, [1., 0., 0.], [0., 1., 0.])
    with pytest.raises(DomainError):
        lemmaDecomposition(m, [1., 0., 0.], [0., 1., 0.])


def test_momentSet_dictRoundTrip(gaussian_multi):
    m = estimateMoments(gaussian_multi, [1., 0., 0.], [0., 1., 1.])
    back = MomentSet.fromDict(m.toDict())
    for name in MomentSet.SYMMETRIC + MomentSet.CROSS:
        assert_allclose(getattr(back, name), getattr(m, name))
    assert (back.n_used, back.p, back.k) == (m.n_used, m.p, m.k)


@pytest.mark.parametrize('phi', [0.3, np.pi / 2, 2.])
def test_circleMoments_closedForm(circle_data, e1, phi):
    """On the unit circle the region moments are angular integrals over 2 pi."""
    w = rotateToward(e1(2), [0., 1.], phi)
    m = estimateMoments(circle_data, w, e1(2))
    # closed forms are stated for the teacher on the first axis and the
    # student at +phi, which matches the convention above
    assert_allclose(eigSym(m.a_pn).eigenvalues, eigSym(closedForm2d(phi)).eigenvalues / (2 * np.pi),
                    atol=0.01)
    assert_allclose(eigSym(m.a_pp).eigenvalues,
                    eigSym(closedForm2dJoint(phi)).eigenvalues / (2 * np.pi), atol=0.01)

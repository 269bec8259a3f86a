import numpy as np
import pytest  # type: ignore[import-not-found]
from numpy.testing import assert_allclose

from relulab.base import DomainError, UndefinedGradientError
from relulab.model import (TeacherStudent, batchGradient, loss, meanLoss, predict,
                           projectToBall, sampleGradient)


def test_predict():
    z = np.array([[1., -1.], [0., 2.]])          # patches (1, 0) and (-1, 2)
    assert predict([1., 0.], z) == pytest.approx(0.5)
    assert predict([0., 1.], z) == pytest.approx(1.)
    assert predict([-1., 0.], z) == pytest.approx(0.5)
    # a single patch may be passed as a vector
    assert predict([1., 1.], [2., -3.]) == 0.


def test_loss_zeroAtTeacher():
    rng = np.random.default_rng(0)
    wStar = rng.standard_normal(3)
    z = rng.standard_normal((3, 4))
    assert loss(wStar, wStar, z) == 0.


def test_sampleGradient_finiteDifference():
    rng = np.random.default_rng(1)
    wStar = rng.standard_normal(4)
    w = rng.standard_normal(4)
    z = rng.standard_normal((4, 3))
    res = sampleGradient(w, wStar, z)
    assert res.residual == pytest.approx(predict(w, z) - predict(wStar, z))

    h = 1e-6
    numeric = np.array([(loss(w + h * e, wStar, z) - loss(w - h * e, wStar, z)) / (2 * h)
                        for e in np.eye(4)])
    assert_allclose(res.g, numeric, rtol=1e-5, atol=1e-8)


def test_sampleGradient_activeAtZeroInnerProduct():
    """A patch with ``w^T z = 0`` counts as active."""
    w = np.array([1., 0.])
    wStar = np.array([0., 1.])
    z = np.array([0., 1.])
    res = sampleGradient(w, wStar, z)
    assert res.residual == pytest.approx(-1.)
    assert_allclose(res.g, [0., -1.])


def test_gradient_undefinedAtZero():
    with pytest.raises(UndefinedGradientError):
        sampleGradient(np.zeros(2), [1., 0.], [1., 1.])
    with pytest.raises(DomainError):
        sampleGradient([1., 0., 0.], [1., 0.], [1., 1.])


def test_batchGradient_isMean(gaussian_multi):
    rng = np.random.default_rng(2)
    wStar = rng.standard_normal(3)
    w = rng.standard_normal(3)
    samples = gaussian_multi.samples[:100]
    expected = np.mean([sampleGradient(w, wStar, z).g for z in samples], axis=0)
    assert_allclose(batchGradient(w, wStar, samples), expected, rtol=1e-12, atol=1e-14)
    assert_allclose(batchGradient(w, wStar, list(samples)), expected, rtol=1e-12, atol=1e-14)


def test_batchGradient_zeroAtTeacher(gaussian_data, e1):
    assert_allclose(batchGradient(e1(4), e1(4), gaussian_data), 0.)
    assert meanLoss(e1(4), e1(4), gaussian_data) == 0.


def test_batchGradient_empty():
    with pytest.raises(DomainError):
        batchGradient([1., 0.], [0., 1.], np.zeros((0, 2, 1)))
    with pytest.raises(DomainError):
        meanLoss([1., 0.], [0., 1.], np.zeros((0, 2, 1)))


def test_teacherStudent():
    ts = TeacherStudent([3., 4.], [0., 0.])
    assert ts.p == 2
    assert ts.distance == pytest.approx(5.)
    with pytest.raises(DomainError):
        TeacherStudent([0., 0.], [1., 0.])
    with pytest.raises(DomainError):
        TeacherStudent([1., 0.], [1., 0., 0.])


def test_projectToBall():
    assert_allclose(projectToBall(np.array([3., 4.]), 1.), [0.6, 0.8])
    assert_allclose(projectToBall(np.array([0.3, 0.4]), 1.), [0.3, 0.4])

import numpy as np
import pytest  # type: ignore[import-not-found]
from numpy.testing import assert_allclose

from relulab.base import DomainError, TheoremPreconditionError
from relulab.distributions import DistributionKind, DistributionSpec, sample
from relulab import helpers
from relulab.linalg import eigSym, randomPerpendicular, rotateToward
from relulab.regions import batchStandardError, estimateBatchMoments, estimateMoments
from relulab.smoothness import (PROFILE_COLUMNS, SmoothnessProfile, closedForm2d,
                                closedForm2dJoint, compareClosedForm2d, defaultGrid, phiStar, profile,
                                verifyBetaBounds)

GRID = [0.3, 0.6, 0.9, 1.2, 1.5]


@pytest.mark.parametrize('phi', np.linspace(0., np.pi, 100))
def test_closedForm2d_eigenvalues(phi):
    res = eigSym(closedForm2d(phi))
    assert_allclose(res.eigenvalues, [(phi + np.sin(phi)) / 2, (phi - np.sin(phi)) / 2],
                    atol=1e-12)
    joint = eigSym(closedForm2dJoint(phi))
    assert_allclose(joint.eigenvalues,
                    [(np.pi - phi + np.sin(phi)) / 2, (np.pi - phi - np.sin(phi)) / 2],
                    atol=1e-12)


def test_closedForm2d_halfPi():
    assert_allclose(eigSym(closedForm2d(np.pi / 2)).eigenvalues,
                    [1.2853981633974483, 0.2853981633974483], atol=1e-12)
    with pytest.raises(DomainError):
        closedForm2d(-0.1)


def test_closedForms_addUpToHalfCircle():
    """PP and PN together cover the half circle where the student is active."""
    for phi in [0.2, 1., 2.5]:
        assert np.trace(closedForm2d(phi) + closedForm2dJoint(phi)) == pytest.approx(np.pi)


def test_defaultGrid():
    grid = defaultGrid(25, 0.05)
    assert grid.size == 25
    assert grid[0] == pytest.approx(0.05)
    assert grid[-1] == pytest.approx(np.pi - 0.05)


def test_profile_circle(circle_data, e1):
    prof = profile(circle_data, e1(2), GRID, nW=2, seed=1)
    assert list(prof.toFrame().columns) == PROFILE_COLUMNS
    expectedGamma = [(np.pi - x - np.sin(x)) / (4 * np.pi) for x in GRID]
    assert_allclose(prof.gamma, expectedGamma, atol=0.01)
    assert np.all(np.diff(prof.ell_minus) >= 0)
    # single patch: no cross terms
    assert prof.l_cross_hat == 0.

    report = verifyBetaBounds(prof, DistributionKind.UnitSphere)
    assert report['passed'] is True
    assert 0.9 <= report['converted'] <= 1.05
    assert report['n_samples'] == circle_data.n

    exact = compareClosedForm2d(prof)
    assert exact['passed'] is True
    assert [r['phi'] for r in exact['rows']] == GRID
    assert exact['rows'][2]['gamma_exact'] == pytest.approx(expectedGamma[2])


def test_compareClosedForm2d_mismatch(make_profile):
    wrong = make_profile([0.2] * 5, kind='unit_sphere', p=2)
    report = compareClosedForm2d(wrong)
    assert report['passed'] is False
    assert all(r['gamma_deviation'] > 0.01 for r in report['rows'][2:])
    with pytest.raises(DomainError):
        compareClosedForm2d(make_profile([0.2] * 5))


def test_profile_gaussianRotationInvariance(gaussian_data, e1):
    prof = profile(gaussian_data, e1(4), GRID, nW=4, seed=2)
    # the spectrum does not depend on the direction the student is rotated in
    assert_allclose(prof.gamma_dir_max, prof.gamma, atol=0.05)
    assert_allclose(prof.ell_dir_min, prof.ell, atol=0.05)
    expectedGamma = [(np.pi - x - np.sin(x)) / (2 * np.pi) for x in GRID]
    assert_allclose(prof.gamma, expectedGamma, atol=0.04)

    report = verifyBetaBounds(prof)
    assert report['bound'] == 4.
    assert report['passed'] is True
    assert phiStar(prof) == pytest.approx(1.5)


def test_profile_deterministic(gaussian_multi):
    a = profile(gaussian_multi, [1., 0., 0.], [0.5, 1.], nW=3, seed=5)
    b = profile(gaussian_multi, [1., 0., 0.], [0.5, 1.], nW=3, seed=5)
    assert a.toDict() == b.toDict()
    assert a.l_cross_hat > 0.
    assert a.k == 3


def test_profile_standardErrors(gaussian_data, e1):
    """The reported error is the batch-means error of the attaining direction."""
    prof = profile(gaussian_data, e1(4), [1.], nW=1, seed=3, nBatches=5)
    assert prof.gamma_se[0] > 0.
    rng = helpers.childRng(3, 'profile', 0, 0)
    w = rotateToward(e1(4), randomPerpendicular(e1(4), rng), 1.)
    full, batches = estimateBatchMoments(gaussian_data, w, e1(4), 5)
    assert prof.gamma[0] == pytest.approx(eigSym(full.m_pp).lambdaMin, rel=1e-12)
    assert prof.gamma_se[0] == pytest.approx(
        batchStandardError([eigSym(b.m_pp).lambdaMin for b in batches]), rel=1e-10)


def test_profile_errors(gaussian_data, e1):
    with pytest.raises(DomainError):
        profile(gaussian_data, e1(4), [], nW=1)
    with pytest.raises(DomainError):
        profile(gaussian_data, e1(4), [0., 1.], nW=1)
    with pytest.raises(DomainError):
        profile(gaussian_data, e1(4), [1.], nW=0)
    with pytest.raises(DomainError):
        profile(gaussian_data, e1(3), [1.], nW=1)


def test_profile_betaWithoutSmallAngles(gaussian_data, e1):
    prof = profile(gaussian_data, e1(4), [2., 2.5], nW=1)
    assert prof.beta_hat == 0.


def test_phiStar(make_profile):
    assert phiStar(make_profile([0.5, 0.4, 0.3, 0.2, 0.1], lCross=0.02)) == pytest.approx(1.2)
    # the condition has to hold on the whole prefix
    assert phiStar(make_profile([0.5, 0.1, 0.3, 0.3, 0.3], lCross=0.02)) == pytest.approx(0.3)
    with pytest.raises(TheoremPreconditionError):
        phiStar(make_profile([0.1] * 5, lCross=0.02))
    capped = make_profile([1.] * 3, phis=[1., 1.5, 2.])
    assert phiStar(capped) == pytest.approx(1.5)


def test_verifyBetaBounds_kinds(make_profile):
    prof = make_profile([1.] * 5, beta=1 / (2 * np.pi), kind='unit_sphere', p=2)
    assert verifyBetaBounds(prof)['passed'] is True
    prof.beta_hat = 0.8 / (2 * np.pi)
    assert verifyBetaBounds(prof)['passed'] is False
    # above two dimensions only the upper bound applies
    prof.p = 5
    assert verifyBetaBounds(prof)['passed'] is True
    assert verifyBetaBounds(prof, 'clustered')['passed'] is None


def test_profile_dictRoundTrip(gaussian_multi):
    prof = profile(gaussian_multi, [0., 1., 0.], [0.7], nW=2, seed=1)
    assert SmoothnessProfile.fromDict(prof.toDict()) == prof


@pytest.mark.slow
def test_circle_halfPi_largeSample(e1):
    """Monte Carlo PN moment at a right angle against the closed form, n = 10^6."""
    data = sample(DistributionSpec(DistributionKind.UnitSphere, 2), 1_000_000, seed=21)
    w = np.array([0., 1.])
    full, batches = estimateBatchMoments(data, w, e1(2), 20)
    measured = eigSym(full.a_pn).eigenvalues
    expected = eigSym(closedForm2d(np.pi / 2)).eigenvalues / (2 * np.pi)
    se = [batchStandardError([eigSym(b.a_pn).eigenvalues[i] for b in batches]) for i in range(2)]
    assert np.all(np.abs(measured - expected) <= 3 * np.asarray(se) + 1e-4)
    assert_allclose(estimateMoments(data, w, e1(2)).a_pn, full.a_pn, rtol=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize('p', [4, 8])
def test_gaussianBeta_largeSample(p, e1):
    data = sample(DistributionSpec(DistributionKind.StandardGaussian, p), 1_000_000, seed=p)
    prof = profile(data, e1(p), [0.2, 0.6, 1.0, 1.4], nW=4, seed=p)
    assert verifyBetaBounds(prof)['passed'] is True

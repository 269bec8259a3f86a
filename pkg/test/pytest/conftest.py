import numpy as np
import pytest  # type: ignore[import-not-found]

from relulab.distributions import DistributionKind, DistributionSpec, sample
from relulab.smoothness import SmoothnessProfile


@pytest.fixture()
def e1():
    def make(p: int) -> np.ndarray:
        w = np.zeros(p)
        w[0] = 1.
        return w
    return make


@pytest.fixture(scope='module')
def gaussian_data():
    """Gaussian patches, p=4, k=1."""
    return sample(DistributionSpec(DistributionKind.StandardGaussian, 4), 20000, seed=1)


@pytest.fixture(scope='module')
def gaussian_multi():
    """Gaussian patches, p=3, k=3."""
    return sample(DistributionSpec(DistributionKind.StandardGaussian, 3, 3), 5000, seed=2)


@pytest.fixture(scope='module')
def circle_data():
    """Unit-circle patches, p=2, k=1."""
    return sample(DistributionSpec(DistributionKind.UnitSphere, 2), 100000, seed=3)


@pytest.fixture(scope='module')
def clustered_data():
    """Clustered unit patches with the margin measured against e_1."""
    spec = DistributionSpec(DistributionKind.ClusteredPatches, 3, 5, rho=0.15, mu=0.05,
                            margin_dir=[1., 0., 0.])
    return sample(spec, 5000, seed=4)


@pytest.fixture()
def make_profile():
    """Factory for hand-made profiles, for checks that only read a few columns."""
    def make(gamma, lCross=0., phis=None, ell=None, beta=0.1, kind='gaussian', p=4):
        phis = list([0.3, 0.6, 0.9, 1.2, 1.5] if phis is None else phis)
        n = len(phis)
        gamma = list(gamma)
        ell = [1.] * n if ell is None else list(ell)
        zeros = [0.] * n
        return SmoothnessProfile(
            phis=phis, gamma=gamma, gamma_se=zeros, ell=ell, ell_se=zeros,
            ell_minus=[beta * x for x in phis], ell_minus_se=zeros,
            ell_minus_at=[beta * x for x in phis],
            gamma_avg=gamma, gamma_avg_se=zeros, l_cross_ratio=[lCross] * n, l_cross_se=zeros,
            gamma_dir_max=gamma, ell_dir_min=ell, beta_hat=beta, l_cross_hat=lCross,
            n_w=1, n_samples=1, kind=kind, p=p)
    return make

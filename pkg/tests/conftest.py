import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, n, rank=None):
    """Random PSD matrix, optionally rank deficient."""
    r = n if rank is None else rank
    a = rng.normal(size=(n, r))
    return a @ a.T


def random_spec(rng, m, T, lam_scale=1.0):
    """Seeded PathMeasureSpec with strictly positive reference chain."""
    from kernelcal.pathengine import PathMeasureSpec

    pi0 = rng.dirichlet(np.ones(m))
    q = rng.dirichlet(np.ones(m), size=m)
    info = rng.uniform(0, 2, size=m)
    lc, lg = rng.uniform(-1, 2) * lam_scale, rng.uniform(-1, 1) * lam_scale
    return PathMeasureSpec(m, T, pi0, q, info, lc, lg)

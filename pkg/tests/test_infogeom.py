import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kernelcal.infogeom import (
    INFO_MODEL,
    DiscreteDistribution,
    InfoDomainError,
    InfoValue,
    fisher_rao_metric,
    gaussian_kl,
    gp_info_gain,
    hellinger_kernel,
)
from kernelcal.kernelspace import DiscreteDomain, KernelDataError, KernelSpec, explicit, gram

from conftest import random_psd


def _kl_oracle(k_model, k_env, s):
    # textbook formula with explicit inverse and slogdet
    n = k_env.shape[0]
    s0 = k_env + s * np.eye(n)
    s1 = k_model + s * np.eye(n)
    inv = np.linalg.inv(s1)
    return 0.5 * (np.trace(inv @ s0) - n + np.linalg.slogdet(s1)[1] - np.linalg.slogdet(s0)[1])


class TestInfoGain:
    def test_empty_design(self):
        assert gp_info_gain(np.zeros((0, 0)), 1.0).nats == 0.0

    def test_scalar(self):
        assert gp_info_gain(explicit([[1.0]]), 1.0).nats == pytest.approx(0.5 * math.log(2), abs=1e-15)

    def test_all_ones(self):
        assert gp_info_gain(explicit(np.ones((2, 2))), 1.0).nats == pytest.approx(0.5 * math.log(3), abs=1e-14)

    def test_non_psd(self):
        with pytest.raises(KernelDataError):
            gp_info_gain(explicit([[1, 2], [2, 1]]), 1.0)

    def test_bad_noise(self):
        with pytest.raises(InfoDomainError):
            gp_info_gain(np.eye(2), 0.0)

    def test_slogdet_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 10))
            k = random_psd(rng, n)
            s = float(rng.uniform(0.01, 2))
            want = 0.5 * np.linalg.slogdet(np.eye(n) + k / s)[1]
            assert gp_info_gain(k, s).nats == pytest.approx(want, rel=1e-12)

    def test_info_model_tag(self):
        assert INFO_MODEL == "gaussian_logdet"


class TestKL:
    def test_zero_for_identical(self):
        k = gram(KernelSpec("squared_exponential", 0.3), DiscreteDomain.grid_1d(8))
        assert gaussian_kl(k, k, 0.1).nats == pytest.approx(0.0, abs=1e-12)

    def test_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 8))
            a, b = random_psd(rng, n), random_psd(rng, n)
            assert gaussian_kl(a, b, 0.3).nats == pytest.approx(_kl_oracle(a, b, 0.3), rel=1e-9, abs=1e-12)

    def test_scalar_closed_form(self):
        # KL(N(0, 2) || N(0, 1)) = 0.5 (2 - 1 - ln 2)
        assert gaussian_kl(np.array([[0.5]]), np.array([[1.5]]), 0.5).nats == pytest.approx(0.5 * (1 - math.log(2)))


class TestHellinger:
    def test_self_is_one(self):
        p = DiscreteDistribution([0.2, 0.3, 0.5])
        assert hellinger_kernel(p, p) == pytest.approx(1.0)

    def test_disjoint(self):
        assert hellinger_kernel([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_normalization_enforced(self):
        with pytest.raises(InfoDomainError):
            DiscreteDistribution([0.5, 0.6])

    @given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.data())
    def test_bounded_by_one(self, raw, data):
        p = np.array(raw) / sum(raw)
        raw_q = data.draw(st.lists(st.floats(0.01, 1), min_size=len(raw), max_size=len(raw)))
        q = np.array(raw_q) / sum(raw_q)
        h = hellinger_kernel(p, q)
        assert 0 <= h <= 1 + 1e-12


class TestFisherRao:
    def test_bernoulli(self):
        fam = lambda th: np.array([th[0], 1 - th[0]])
        for p in (0.1, 0.4, 0.8):
            g = fisher_rao_metric(fam, [p])
            assert g[0, 0] == pytest.approx(1 / (p * (1 - p)), rel=1e-8)

    def test_softmax_closed_form(self):
        # natural parameters of a categorical: G = diag(p) - p p^T
        def fam(th):
            z = np.concatenate([th, [0.0]])
            e = np.exp(z - z.max())
            return e / e.sum()

        th = np.array([0.3, -0.7])
        p = fam(th)[:2]
        g = fisher_rao_metric(fam, th)
        assert np.allclose(g, np.diag(p) - np.outer(p, p), atol=1e-8)

    def test_zero_probability(self):
        with pytest.raises(InfoDomainError):
            fisher_rao_metric(lambda th: np.array([th[0], 1 - th[0]]), [0.0])

    def test_info_value_validation(self):
        with pytest.raises(ValueError):
            InfoValue(-1.0)

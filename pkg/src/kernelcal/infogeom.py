"""Information quantities feeding the path functionals.

The agent/environment mutual information is realized as the Gaussian
information gain of noisy observations of a GP latent field, and model
mismatch as the KL divergence between the two zero-mean Gaussians that the
model and environment kernels induce on a shared grid.  All values in nats.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernelspace import KernelMatrix, KernelDataError, KernelShapeError, _check_same_domain, default_psd_tol

INFO_MODEL = "gaussian_logdet"


class InfoDomainError(ValueError):
    pass


@dataclass(frozen=True)
class InfoValue:
    nats: float

    def __post_init__(self):
        if not np.isfinite(self.nats) or self.nats < 0:
            raise ValueError(f"information must be finite and >= 0, got {self.nats}")

    def __float__(self):
        return float(self.nats)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if np.any(p < 0):
            raise InfoDomainError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-10:
            raise InfoDomainError(f"probabilities sum to {p.sum()}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


def _as_array(k) -> np.ndarray:
    return k.entries if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)


def _logdet_pd(a: np.ndarray) -> float:
    c = np.linalg.cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def gp_info_gain(k_design, noise_var: float) -> InfoValue:
    """0.5 * log det(I + K / noise_var) for the Gram matrix at the design points."""
    if noise_var <= 0:
        raise InfoDomainError("noise_var must be > 0")
    k = _as_array(k_design)
    m = k.shape[0] if k.ndim == 2 else 0
    if m == 0:
        return InfoValue(0.0)
    ksym = 0.5 * (k + k.T)
    lam_min = np.linalg.eigvalsh(ksym)[0]
    if lam_min < -max(1e-9 * float(np.max(np.diag(ksym))), 1e-12):
        raise KernelDataError(f"design Gram matrix is not PSD (min eigenvalue {lam_min:.3e})")
    gain = 0.5 * _logdet_pd(np.eye(m) + ksym / noise_var)
    return InfoValue(max(gain, 0.0))


def gaussian_kl(k_model, k_env, noise_var: float) -> InfoValue:
    """KL( N(0, K_env + s I) || N(0, K_model + s I) )."""
    if noise_var <= 0:
        raise InfoDomainError("noise_var must be > 0")
    if isinstance(k_model, KernelMatrix) and isinstance(k_env, KernelMatrix):
        _check_same_domain(k_model, k_env)
    a1 = _as_array(k_model)
    a0 = _as_array(k_env)
    if a0.shape != a1.shape:
        raise KernelShapeError("kernel matrices differ in shape")
    n = a0.shape[0]
    s0 = 0.5 * (a0 + a0.T) + noise_var * np.eye(n)
    s1 = 0.5 * (a1 + a1.T) + noise_var * np.eye(n)
    try:
        c1 = np.linalg.cholesky(s1)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("model covariance is singular") from exc
    # tr(S1^-1 S0) via triangular solves
    z = np.linalg.solve(c1, s0)
    tr = float(np.trace(np.linalg.solve(c1.T, z)))
    kl = 0.5 * (tr - n + _logdet_pd(s1) - _logdet_pd(s0))
    if kl < 0:
        # only roundoff can push it below zero
        kl = 0.0
    return InfoValue(kl)


def hellinger_kernel(p, q) -> float:
    pa = p.probs if isinstance(p, DiscreteDistribution) else np.asarray(p, dtype=float)
    qa = q.probs if isinstance(q, DiscreteDistribution) else np.asarray(q, dtype=float)
    if pa.shape != qa.shape:
        raise KernelShapeError("distributions have different support sizes")
    return float(np.sum(np.sqrt(pa * qa)))


def fisher_rao_metric(
    family: Callable[[np.ndarray], np.ndarray],
    theta,
    step: float = 1e-5,
) -> np.ndarray:
    """Fisher-Rao metric of a discrete family via central-difference scores.

    ``family`` maps a parameter vector to a probability vector; ``step`` is
    relative to ``max(1, |theta_i|)``.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    p0 = np.asarray(family(th), dtype=float)
    if np.any(p0 <= 0):
        raise InfoDomainError("family has a zero-probability component at theta")
    d = th.size
    scores = np.empty((d, p0.size))
    for i in range(d):
        h = step * max(1.0, abs(th[i]))
        e = np.zeros(d)
        e[i] = h
        pp = np.asarray(family(th + e), dtype=float)
        pm = np.asarray(family(th - e), dtype=float)
        if np.any(pp <= 0) or np.any(pm <= 0):
            raise InfoDomainError("family leaves the positive simplex within one step")
        scores[i] = (np.log(pp) - np.log(pm)) / (2 * h)
    g = (scores * p0) @ scores.T
    return 0.5 * (g + g.T)

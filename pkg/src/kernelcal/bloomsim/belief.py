"""GP belief over the latent surface bloom under a switchable kernel.

Both channels observe one latent field.  A surface reading at x sees the
latent at x; a subsurface reading at x sees it at x - offset.  Latent sites
are carried along the known flow, so at any time the posterior is an
ordinary GP regression on the transported sites.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..kernelspace import KernelSpec, kernel_values

log = logging.getLogger(__name__)

SURFACE = "surface"
SUBSURFACE = "subsurface"
JITTER = 1e-8


@dataclass(frozen=True)
class BeliefConfig:
    lengthscales: tuple[float, ...] = (0.3, 0.1)
    amplitude: float = 1.0
    family: str = "squared_exponential"
    noise_surface: float = 0.05
    noise_subsurface: float = 0.01
    noise_sample: float = 0.01

    def kernel(self, kernel_id: int) -> KernelSpec:
        return KernelSpec(self.family, self.lengthscales[kernel_id], self.amplitude)

    def noise(self, channel: str) -> float:
        return self.noise_surface if channel == SURFACE else self.noise_subsurface


@dataclass(frozen=True)
class Observation:
    pos: tuple[float, float]
    channel: str
    value: float
    noise_var: float
    t: int


@dataclass
class Belief:
    cfg: BeliefConfig
    offset: np.ndarray
    F: np.ndarray
    v: np.ndarray
    kernel_id: int = 0
    observations: list[Observation] = field(default_factory=list)
    t: int = 0
    _sites: np.ndarray = field(default=None, repr=False)
    _cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self._sites is None:
            self._sites = np.zeros((0, 2))

    @property
    def kernel(self) -> KernelSpec:
        return self.cfg.kernel(self.kernel_id)

    def latent_site(self, pos, channel: str) -> np.ndarray:
        p = np.asarray(pos, dtype=float)
        return p - self.offset if channel == SUBSURFACE else p

    def add(self, obs: Observation) -> None:
        self.observations.append(obs)
        self._sites = np.vstack([self._sites, self.latent_site(obs.pos, obs.channel)[None, :]])
        self._cache = None

    def set_kernel(self, kernel_id: int) -> None:
        if kernel_id != self.kernel_id:
            self.kernel_id = kernel_id
            self._cache = None

    def advance(self) -> None:
        """Carry every stored latent site one step along the flow."""
        self._sites = self._sites @ self.F.T + self.v
        self.t += 1
        self._cache = None

    @property
    def sites(self) -> np.ndarray:
        return self._sites

    def _factor(self, spec: KernelSpec):
        if self._cache is not None and self._cache[0] == spec:
            return self._cache[1:]
        n = len(self.observations)
        y = np.array([o.value for o in self.observations])
        noise = np.array([o.noise_var for o in self.observations])
        k = kernel_values(spec, self._sites, self._sites) + np.diag(noise)
        try:
            cf = cho_factor(k, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            log.warning("ill-conditioned GP system with %d observations; adding jitter %g", n, JITTER)
            cf = cho_factor(k + JITTER * np.eye(n), lower=True, check_finite=False)
        alpha = cho_solve(cf, y, check_finite=False)
        out = (cf, alpha)
        if spec == self.kernel:
            self._cache = (spec, *out)
        return out

    def posterior(self, query, kernel_id: int | None = None, full_cov: bool = False):
        """Posterior mean and variance (or covariance) of the latent at ``query``."""
        spec = self.kernel if kernel_id is None else self.cfg.kernel(kernel_id)
        q = np.atleast_2d(np.asarray(query, dtype=float))
        kqq = kernel_values(spec, q, q) if full_cov else np.full(q.shape[0], spec.amplitude)
        if not self.observations:
            return np.zeros(q.shape[0]), kqq
        cf, alpha = self._factor(spec)
        kxq = kernel_values(spec, self._sites, q)
        mean = kxq.T @ alpha
        w = cho_solve(cf, kxq, check_finite=False)
        if full_cov:
            cov = kqq - kxq.T @ w
            return mean, 0.5 * (cov + cov.T)
        var = kqq - np.einsum("ij,ij->j", kxq, w)
        return mean, np.maximum(var, 0.0)

    def channel_posterior(self, pos, channel: str, kernel_id: int | None = None):
        return self.posterior(self.latent_site(np.atleast_2d(pos), channel), kernel_id)


def dense_posterior(sites, values, noise, query, spec: KernelSpec):
    """Textbook conditioning with an explicit inverse; test oracle only."""
    sites = np.atleast_2d(sites)
    q = np.atleast_2d(query)
    kxx = kernel_values(spec, sites, sites) + np.diag(noise)
    kxq = kernel_values(spec, sites, q)
    kqq = kernel_values(spec, q, q)
    inv = np.linalg.inv(kxx)
    mean = kxq.T @ inv @ np.asarray(values)
    cov = kqq - kxq.T @ inv @ kxq
    return mean, np.diag(cov)

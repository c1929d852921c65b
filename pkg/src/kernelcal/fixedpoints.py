"""Self-consistent kernels in a parametric family.

With the kernel frozen, the switching/work term of the path functional
vanishes and the per-epoch Lagrangian is

    S*(theta) = lambda2 * info_gain(K_theta) - lambda3 * KL(env || K_theta).

Self-consistent kernels are stationary points of S*; stability is read off
the Hessian (negative definite means stable).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .infogeom import gaussian_kl, gp_info_gain
from scipy.linalg import cho_factor, cho_solve

from .kernelspace import DiscreteDomain, KernelMatrix, KernelSpec, gram, pairwise_distances

log = logging.getLogger(__name__)

STABILITY_CLASSES = ("stable", "unstable", "saddle", "degenerate")


class ThetaDomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FrozenObjectiveConfig:
    """Parametric kernel family and multipliers for the frozen-kernel objective.

    ``params`` names the KernelSpec fields that make up theta; the remaining
    fields come from ``base``.  Bounds default to
    [grid spacing / 2, 10 * diameter] for lengthscale and [1e-3, 1e3] for
    amplitude.
    """

    base: KernelSpec
    domain: DiscreteDomain
    env_kernel: KernelMatrix
    noise_var: float = 0.1
    lambda2: float = 1.0
    lambda3: float = 1.0
    params: tuple[str, ...] = ("lengthscale",)
    fd_step: float = 1e-5
    bounds: tuple[tuple[float, float], ...] | None = None
    grad_tol: float = 1e-8
    merge_tol: float = 1e-4
    max_iter: int = 200
    objective_override: Callable[[np.ndarray], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.lambda2 < 0 or self.lambda3 < 0:
            raise ValueError("multipliers must be >= 0")
        if self.lambda2 == 0 and self.lambda3 == 0:
            raise ValueError("lambda2 and lambda3 cannot both be 0")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be > 0")
        if self.bounds is None:
            b = []
            for p in self.params:
                if p == "lengthscale":
                    b.append((self.domain.spacing() / 2, 10 * self.domain.diameter()))
                elif p == "amplitude":
                    b.append((1e-3, 1e3))
                else:
                    raise ValueError(f"unknown parameter {p!r}")
            object.__setattr__(self, "bounds", tuple(b))
        for lo, hi in self.bounds:
            if not 0 < lo < hi:
                raise ValueError("scale-parameter bounds must be positive and ordered")

    @property
    def dim(self) -> int:
        return len(self.params)

    def with_multipliers(self, lambda2: float, lambda3: float) -> "FrozenObjectiveConfig":
        return replace(self, lambda2=float(lambda2), lambda3=float(lambda3))

    def spec_at(self, theta) -> KernelSpec:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        return replace(self.base, **{p: float(v) for p, v in zip(self.params, th)})

    def in_bounds(self, theta, margin: float = 0.0) -> bool:
        th = np.atleast_1d(theta)
        return all(lo + margin <= v <= hi - margin for v, (lo, hi) in zip(th, self.bounds))


def default_config(
    n_grid: int = 16,
    env_lengthscale: float = 0.3,
    lambda2: float = 1.0,
    lambda3: float = 4.0,
    noise_var: float = 0.1,
) -> FrozenObjectiveConfig:
    """1-D squared-exponential lengthscale family on a uniform grid in [0, 1]."""
    dom = DiscreteDomain.grid_1d(n_grid)
    env = gram(KernelSpec("squared_exponential", env_lengthscale, 1.0), dom)
    return FrozenObjectiveConfig(
        base=KernelSpec("squared_exponential", env_lengthscale, 1.0),
        domain=dom,
        env_kernel=env,
        noise_var=noise_var,
        lambda2=lambda2,
        lambda3=lambda3,
    )


def frozen_objective(theta, cfg: FrozenObjectiveConfig) -> float:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if cfg.objective_override is not None:
        return float(cfg.objective_override(th))
    if not cfg.in_bounds(th):
        raise ThetaDomainError(f"theta={th} outside bounds {cfg.bounds}")
    return _objective_fast(th, cfg)


def frozen_objective_reference(theta, cfg: FrozenObjectiveConfig) -> float:
    """Same objective composed from the public information functions (slow)."""
    k = gram(cfg.spec_at(theta), cfg.domain)
    val = 0.0
    if cfg.lambda2:
        val += cfg.lambda2 * gp_info_gain(k, cfg.noise_var).nats
    if cfg.lambda3:
        val -= cfg.lambda3 * gaussian_kl(k, cfg.env_kernel, cfg.noise_var).nats
    return float(val)


_CACHE_ATTR = "_fast_cache"


def _cache(cfg: FrozenObjectiveConfig) -> dict:
    c = cfg.__dict__.get(_CACHE_ATTR)
    if c is None:
        n = cfg.domain.n
        s0 = 0.5 * (cfg.env_kernel.entries + cfg.env_kernel.entries.T) + cfg.noise_var * np.eye(n)
        c = {
            "dist": pairwise_distances(cfg.domain.points, cfg.domain.points),
            "s0": s0,
            "logdet0": float(np.linalg.slogdet(s0)[1]),
            "eye": np.eye(n),
        }
        object.__setattr__(cfg, _CACHE_ATTR, c)
    return c


def _objective_fast(th: np.ndarray, cfg: FrozenObjectiveConfig) -> float:
    c = _cache(cfg)
    spec = cfg.spec_at(th)
    d = c["dist"]
    if spec.family == "squared_exponential":
        k = spec.amplitude * np.exp(-0.5 * (d / spec.lengthscale) ** 2)
    elif spec.family == "matern_3_2":
        r = np.sqrt(3.0) * d / spec.lengthscale
        k = spec.amplitude * (1.0 + r) * np.exp(-r)
    else:
        k = np.array(spec.entries, dtype=float)
    n = k.shape[0]
    s1 = k + cfg.noise_var * c["eye"]
    cf = cho_factor(s1, lower=True, check_finite=False)
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    info = 0.5 * (logdet1 - n * np.log(cfg.noise_var))
    tr = float(np.trace(cho_solve(cf, c["s0"], check_finite=False)))
    kl = max(0.5 * (tr - n + logdet1 - c["logdet0"]), 0.0)
    return float(cfg.lambda2 * info - cfg.lambda3 * kl)


def grad_hessian(theta, cfg: FrozenObjectiveConfig) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences: 5-point gradient, 3-point/4-corner Hessian."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    h = cfg.fd_step
    if cfg.objective_override is None and not cfg.in_bounds(th, margin=2 * h):
        raise ThetaDomainError(f"theta={th} within 2*fd_step of the bounds")
    f = lambda x: frozen_objective(x, cfg)  # noqa: E731
    d = th.size
    eye = np.eye(d) * h
    f0 = f(th)
    g = np.empty(d)
    hess = np.empty((d, d))
    fp = [f(th + eye[i]) for i in range(d)]
    fm = [f(th - eye[i]) for i in range(d)]
    for i in range(d):
        fpp = f(th + 2 * eye[i])
        fmm = f(th - 2 * eye[i])
        g[i] = (-fpp + 8 * fp[i] - 8 * fm[i] + fmm) / (12 * h)
        hess[i, i] = (fp[i] - 2 * f0 + fm[i]) / h**2
        for j in range(i):
            hess[i, j] = (
                f(th + eye[i] + eye[j]) - f(th + eye[i] - eye[j]) - f(th - eye[i] + eye[j]) + f(th - eye[i] - eye[j])
            ) / (4 * h * h)
            hess[j, i] = hess[i, j]
    return g, 0.5 * (hess + hess.T)


def classify(hessian: np.ndarray) -> tuple[str, np.ndarray]:
    eig = np.linalg.eigvalsh(hessian)
    tol = 1e-6 * max(np.max(np.abs(eig)), np.finfo(float).tiny)
    if np.any(np.abs(eig) <= tol):
        return "degenerate", eig
    if np.all(eig < -tol):
        return "stable", eig
    if np.all(eig > tol):
        return "unstable", eig
    return "saddle", eig


@dataclass(frozen=True, eq=False)
class FixedPointRecord:
    theta_star: np.ndarray
    s_star: float
    gradient_norm: float
    hessian: np.ndarray
    stability: str
    eigenvalues: np.ndarray
    iterations: int = 0

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues.min())

    @property
    def max_eig(self) -> float:
        return float(self.eigenvalues.max())


@dataclass
class FixedPointSearch:
    records: list[FixedPointRecord]
    diagnostics: list[dict]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _newton_from(start, cfg: FrozenObjectiveConfig):
    """Damped Newton on grad S* = 0; step halved until |grad| drops."""
    lo = np.array([b[0] for b in cfg.bounds]) + 2.5 * cfg.fd_step
    hi = np.array([b[1] for b in cfg.bounds]) - 2.5 * cfg.fd_step
    th = np.clip(np.atleast_1d(np.asarray(start, dtype=float)), lo, hi)
    g, H = grad_hessian(th, cfg)
    gn = float(np.linalg.norm(g))
    for it in range(cfg.max_iter):
        if gn < cfg.grad_tol:
            return th, g, H, it, "converged"
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g.copy()
        # cap the move at a fifth of the box so Newton cannot leap across basins
        cap = 0.2 * (hi - lo)
        scale = np.max(np.abs(step) / cap)
        if scale > 1:
            step = step / scale
        a = 1.0
        accepted = False
        while a > 1e-10:
            cand = np.clip(th + a * step, lo, hi)
            gc, Hc = grad_hessian(cand, cfg)
            gcn = float(np.linalg.norm(gc))
            if gcn < gn:
                accepted = True
                break
            a *= 0.5
        if not accepted:
            return th, g, H, it, "stalled"
        th, g, H, gn = cand, gc, Hc, gcn
    status = "converged" if gn < cfg.grad_tol else "max_iter"
    return th, g, H, cfg.max_iter, status


def find_fixed_points(cfg: FrozenObjectiveConfig, start_grid: Sequence | None = None) -> FixedPointSearch:
    """Newton searches from every start; converged points merged and classified."""
    if start_grid is None:
        start_grid = default_starts(cfg)
    starts = [np.atleast_1d(np.asarray(s, dtype=float)) for s in start_grid]
    if not starts:
        raise ValueError("start_grid must be nonempty")
    records: list[FixedPointRecord] = []
    diags = []
    for s in starts:
        if not cfg.in_bounds(s):
            raise ThetaDomainError(f"start {s} outside bounds")
        th, g, H, it, status = _newton_from(s, cfg)
        gn = float(np.linalg.norm(g))
        diags.append({"start": s.tolist(), "theta": th.tolist(), "gradient_norm": gn, "iterations": it, "status": status})
        if status != "converged":
            continue
        if any(_same_point(th, r.theta_star, cfg.merge_tol) for r in records):
            continue
        stab, eig = classify(H)
        records.append(FixedPointRecord(th, frozen_objective(th, cfg), gn, H, stab, eig, it))
    if not records:
        log.info("no fixed point converged from %d starts", len(starts))
    records.sort(key=lambda r: tuple(r.theta_star))
    return FixedPointSearch(records, diags)


def _same_point(a, b, merge_tol) -> bool:
    return bool(np.all(np.abs(a - b) <= merge_tol * np.maximum(np.abs(b), 1.0)))


def default_starts(cfg: FrozenObjectiveConfig, n: int = 24) -> list[np.ndarray]:
    """Log-spaced starts along each parameter axis (tensor grid for dim > 1)."""
    axes = [np.geomspace(lo * 1.05, hi / 1.05, n if cfg.dim == 1 else max(4, int(n ** (1 / cfg.dim)))) for lo, hi in cfg.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return [np.array(p) for p in zip(*(m.ravel() for m in mesh))]


@dataclass
class ScanCell:
    lambda2: float
    lambda3: float
    records: list[FixedPointRecord]
    diagnostics: list[dict]

    @property
    def stable(self) -> list[FixedPointRecord]:
        return [r for r in self.records if r.stability == "stable"]

    @property
    def n_stable(self) -> int:
        return len(self.stable)

    def stable_separated(self, merge_tol: float) -> bool:
        pts = [r.theta_star for r in self.stable]
        for i in range(len(pts)):
            for j in range(i):
                if _same_point(pts[i], pts[j], merge_tol):
                    return False
        return True


def bifurcation_scan(
    cfg: FrozenObjectiveConfig,
    lambda2_grid: Sequence[float],
    lambda3_grid: Sequence[float],
    start_grid: Sequence | None = None,
) -> list[ScanCell]:
    """Fixed-point census over a (lambda2, lambda3) grid, row-major in lambda2."""
    if len(lambda2_grid) == 0 or len(lambda3_grid) == 0:
        raise ValueError("lambda grid must be nonempty")
    cells = []
    for l2 in lambda2_grid:
        for l3 in lambda3_grid:
            try:
                res = find_fixed_points(cfg.with_multipliers(l2, l3), start_grid)
                cells.append(ScanCell(float(l2), float(l3), res.records, res.diagnostics))
            except Exception as exc:  # a bad cell never aborts the scan
                cells.append(ScanCell(float(l2), float(l3), [], [{"error": repr(exc)}]))
    return cells


def default_lambda_grid(n: int = 8) -> np.ndarray:
    return np.geomspace(0.1, 10.0, n)


def grid_search_stationary(cfg: FrozenObjectiveConfig, step: float = 1e-3) -> list[tuple[float, str]]:
    """Dense-grid oracle for 1-D families: sign changes of the discrete slope.

    Returns (location, 'stable'|'unstable') for each local max/min found on
    the grid ``lo + step * k``.
    """
    if cfg.dim != 1:
        raise ValueError("grid oracle handles one parameter")
    lo, hi = cfg.bounds[0]
    xs = np.arange(lo, hi + 0.5 * step, step)
    xs = xs[xs <= hi]
    vals = objective_batch(xs, cfg)
    out = []
    for i in range(1, len(xs) - 1):
        if vals[i] > vals[i - 1] and vals[i] >= vals[i + 1]:
            out.append((float(xs[i]), "stable"))
        elif vals[i] < vals[i - 1] and vals[i] <= vals[i + 1]:
            out.append((float(xs[i]), "unstable"))
    return out


def objective_batch(thetas: np.ndarray, cfg: FrozenObjectiveConfig, chunk: int = 2048) -> np.ndarray:
    """S* for many 1-D parameter values via batched Cholesky factorizations."""
    if cfg.objective_override is not None:
        return np.array([cfg.objective_override(np.atleast_1d(t)) for t in thetas])
    thetas = np.asarray(thetas, dtype=float)
    n = cfg.domain.n
    s = cfg.noise_var
    s0 = cfg.env_kernel.entries + s * np.eye(n)
    logdet0 = np.linalg.slogdet(s0)[1]
    out = np.empty(thetas.size)
    for a in range(0, thetas.size, chunk):
        th = thetas[a:a + chunk]
        ks = np.stack([gram(cfg.spec_at(t), cfg.domain).entries for t in th])
        s1 = ks + s * np.eye(n)
        c1 = np.linalg.cholesky(s1)
        logdet1 = 2 * np.sum(np.log(np.diagonal(c1, axis1=1, axis2=2)), axis=1)
        info = 0.5 * (logdet1 - n * np.log(s))
        tr = np.trace(np.linalg.solve(s1, np.broadcast_to(s0, s1.shape)), axis1=1, axis2=2)
        kl = 0.5 * (tr - n + logdet1 - logdet0)
        out[a:a + chunk] = cfg.lambda2 * info - cfg.lambda3 * kl
    return out

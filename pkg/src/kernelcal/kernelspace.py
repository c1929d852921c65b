"""Mercer kernels on a weighted discrete domain.

A kernel is represented by its Gram matrix on a finite grid carrying
quadrature weights, so integral-operator quantities (Hilbert-Schmidt norms,
distances) reduce to weighted double sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SYMMETRY_TOL = 1e-12
FAMILIES = ("squared_exponential", "matern_3_2", "explicit_matrix")


class KernelParameterError(ValueError):
    pass


class KernelDataError(ValueError):
    pass


class KernelShapeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Finite point set with nonnegative quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] < 1:
            raise KernelShapeError("domain needs at least one point")
        if pts.shape[0] != w.shape[0]:
            raise KernelShapeError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0) or not np.any(w > 0):
            raise KernelParameterError("weights must be >= 0 with at least one > 0")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @classmethod
    def uniform(cls, points) -> "DiscreteDomain":
        pts = np.asarray(points, dtype=float)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    @classmethod
    def unit_weights(cls, points) -> "DiscreteDomain":
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.ones(pts.shape[0]))

    @classmethod
    def grid_1d(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "DiscreteDomain":
        return cls.uniform(np.linspace(lo, hi, n))

    @classmethod
    def grid_2d(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "DiscreteDomain":
        """Cell-centred n x n grid over [lo, hi]^2, row-major in (y, x)."""
        c = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        xx, yy = np.meshgrid(c, c)
        return cls.uniform(np.column_stack([xx.ravel(), yy.ravel()]))

    def diameter(self) -> float:
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(span))

    def spacing(self) -> float:
        """Smallest nonzero nearest-neighbour distance along any axis."""
        gaps = []
        for col in self.points.T:
            u = np.unique(col)
            if u.size > 1:
                gaps.append(np.min(np.diff(u)))
        return float(min(gaps)) if gaps else 0.0


@dataclass(frozen=True)
class KernelSpec:
    family: str
    lengthscale: float = 1.0
    amplitude: float = 1.0
    entries: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelParameterError(f"unknown kernel family {self.family!r}")
        if self.family == "explicit_matrix":
            if self.entries is None:
                raise KernelParameterError("explicit_matrix needs entries")
            object.__setattr__(self, "entries", tuple(tuple(float(v) for v in row) for row in self.entries))
        else:
            if not (self.lengthscale > 0):
                raise KernelParameterError(f"lengthscale must be > 0, got {self.lengthscale}")
            if not (self.amplitude > 0):
                raise KernelParameterError(f"amplitude must be > 0, got {self.amplitude}")

    def to_json(self) -> dict:
        if self.family == "explicit_matrix":
            return {"family": self.family, "entries": [list(r) for r in self.entries]}
        return {"family": self.family, "lengthscale": self.lengthscale, "amplitude": self.amplitude}

    @classmethod
    def from_json(cls, obj: dict) -> "KernelSpec":
        if obj["family"] == "explicit_matrix":
            return cls(family="explicit_matrix", entries=obj["entries"])
        return cls(family=obj["family"], lengthscale=float(obj["lengthscale"]), amplitude=float(obj["amplitude"]))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    domain: DiscreteDomain
    entries: np.ndarray

    def __post_init__(self):
        k = np.array(self.entries, dtype=float)
        if k.shape != (self.domain.n, self.domain.n):
            raise KernelShapeError(f"entries shape {k.shape} does not match domain size {self.domain.n}")
        k.setflags(write=False)
        object.__setattr__(self, "entries", k)

    @property
    def n(self) -> int:
        return self.domain.n


@dataclass(frozen=True)
class ValidationReport:
    min_eigenvalue: float
    symmetry_defect: float
    psd_tol: float
    passed: bool


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.sqrt(d2)


def kernel_values(spec: KernelSpec, a, b) -> np.ndarray:
    """Cross-covariance k(a_i, b_j) for a parametric family."""
    d = pairwise_distances(a, b)
    if spec.family == "squared_exponential":
        return spec.amplitude * np.exp(-0.5 * (d / spec.lengthscale) ** 2)
    if spec.family == "matern_3_2":
        r = np.sqrt(3.0) * d / spec.lengthscale
        return spec.amplitude * (1.0 + r) * np.exp(-r)
    raise KernelParameterError("kernel_values needs a parametric family")


def gram(spec: KernelSpec, domain: DiscreteDomain) -> KernelMatrix:
    """Gram matrix of ``spec`` on ``domain``; exactly symmetric for parametric families."""
    if spec.family == "explicit_matrix":
        return KernelMatrix(domain, np.array(spec.entries, dtype=float))
    pts = domain.points
    full = kernel_values(spec, pts, pts)
    upper = np.triu(full)
    k = upper + np.triu(full, 1).T
    return KernelMatrix(domain, k)


def default_psd_tol(k: KernelMatrix) -> float:
    return 1e-9 * max(float(np.max(np.diag(k.entries))), 0.0)


def validate_psd(k: KernelMatrix, psd_tol: float | None = None) -> ValidationReport:
    a = k.entries
    if not np.all(np.isfinite(a)):
        raise KernelDataError("kernel matrix has non-finite entries")
    if psd_tol is None:
        psd_tol = default_psd_tol(k)
    defect = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    lam_min = float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])
    passed = lam_min >= -psd_tol and defect <= SYMMETRY_TOL
    return ValidationReport(lam_min, defect, psd_tol, passed)


def _check_same_domain(k1: KernelMatrix, k2: KernelMatrix):
    d1, d2 = k1.domain, k2.domain
    if d1 is d2:
        return
    if d1.points.shape != d2.points.shape or not (
        np.array_equal(d1.points, d2.points) and np.array_equal(d1.weights, d2.weights)
    ):
        raise KernelShapeError("kernels live on different domains")


def cone_combine(op: str, k1: KernelMatrix, k2_or_c, alpha: float = 1.0, beta: float = 1.0) -> KernelMatrix:
    """Cone operations: ``sum`` (alpha*k1 + beta*k2), ``scale`` (c*k1), ``schur`` (entrywise)."""
    if op == "scale":
        c = float(k2_or_c)
        if c < 0:
            raise KernelParameterError("scale factor must be >= 0")
        return KernelMatrix(k1.domain, c * k1.entries)
    k2 = k2_or_c
    _check_same_domain(k1, k2)
    if op == "sum":
        if alpha < 0 or beta < 0:
            raise KernelParameterError("cone coefficients must be >= 0")
        return KernelMatrix(k1.domain, alpha * k1.entries + beta * k2.entries)
    if op == "schur":
        return KernelMatrix(k1.domain, k1.entries * k2.entries)
    raise KernelParameterError(f"unknown cone operation {op!r}")


def hs_norm(k: KernelMatrix) -> float:
    w = k.domain.weights
    return float(np.sqrt(np.sum(np.outer(w, w) * k.entries**2)))


def hs_distance(k1: KernelMatrix, k2: KernelMatrix) -> float:
    """Weighted-quadrature Hilbert-Schmidt distance between integral operators."""
    _check_same_domain(k1, k2)
    w = k1.domain.weights
    diff = k1.entries - k2.entries
    return float(np.sqrt(np.sum(np.outer(w, w) * diff**2)))


def explicit(entries: Sequence[Sequence[float]], domain: DiscreteDomain | None = None) -> KernelMatrix:
    """Wrap a raw matrix; defaults to a unit-weight index domain."""
    a = np.asarray(entries, dtype=float)
    if domain is None:
        domain = DiscreteDomain.unit_weights(np.arange(a.shape[0], dtype=float))
    return KernelMatrix(domain, a)

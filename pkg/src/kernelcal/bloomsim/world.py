"""Advecting bloom field on the unit square.

The velocity field is affine, u(x) = v + S x, applied once per step, so one
step is the map x -> F x + v with F = I + S.  Gaussian blobs are pushed
forward exactly: centres follow the map and covariances become F C F^T,
which makes the field a pure transport, b_{t+1}(F x + v) = b_t(x).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..kernelspace import DiscreteDomain


@dataclass(frozen=True)
class Blob:
    center: np.ndarray
    amplitude: float
    cov: np.ndarray


@dataclass(frozen=True)
class WorldConfig:
    n_grid: int = 32
    n_blobs: int = 6
    amplitude_range: tuple[float, float] = (0.6, 1.4)
    scale_range: tuple[float, float] = (0.10, 0.18)
    velocity: tuple[float, float] = (0.0, 0.0)
    shear: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    subsurface_offset: tuple[float, float] = (0.15, -0.1)
    spinup_steps: int = 0

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))

    def flow(self) -> tuple[np.ndarray, np.ndarray]:
        F = np.eye(2) + np.asarray(self.shear, dtype=float)
        return F, np.asarray(self.velocity, dtype=float)

    def to_json(self) -> dict:
        return {
            "n_grid": self.n_grid,
            "n_blobs": self.n_blobs,
            "amplitude_range": list(self.amplitude_range),
            "scale_range": list(self.scale_range),
            "velocity": list(self.velocity),
            "shear": [list(r) for r in self.shear],
            "subsurface_offset": list(self.subsurface_offset),
            "spinup_steps": self.spinup_steps,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WorldConfig":
        kw = dict(obj)
        for k in ("amplitude_range", "scale_range", "velocity", "subsurface_offset"):
            if k in kw:
                kw[k] = tuple(float(x) for x in kw[k])
        if "shear" in kw:
            kw["shear"] = tuple(tuple(float(x) for x in r) for r in kw["shear"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class BloomWorld:
    grid: DiscreteDomain
    blobs: tuple[Blob, ...]
    F: np.ndarray
    v: np.ndarray
    subsurface_offset: np.ndarray
    t: int = 0
    rng_seed: int = 0

    def field(self, x) -> np.ndarray:
        """Surface bloom b_t at points ``x`` (shape (n, 2))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for b in self.blobs:
            d = x - b.center
            prec = np.linalg.inv(b.cov)
            out += b.amplitude * np.exp(-0.5 * np.einsum("ni,ij,nj->n", d, prec, d))
        return out

    def subsurface(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.field(x - self.subsurface_offset)

    def surface_grid(self) -> np.ndarray:
        return self.field(self.grid.points)

    def subsurface_grid(self) -> np.ndarray:
        return self.subsurface(self.grid.points)

    def advance(self, n: int = 1) -> "BloomWorld":
        w = self
        for _ in range(n):
            w = step_environment(w)
        return w


def step_environment(world: BloomWorld) -> BloomWorld:
    """One step of the affine flow: centres c -> F c + v, covariances F C F^T."""
    F, v = world.F, world.v
    blobs = tuple(
        Blob(F @ b.center + v, b.amplitude, F @ b.cov @ F.T) for b in world.blobs
    )
    return replace(world, blobs=blobs, t=world.t + 1)


def high_advection_config(**overrides) -> WorldConfig:
    """Default moving world: fast along-lake drift with shear-stretched filaments."""
    kw = dict(velocity=(0.05, 0.0), shear=((0.0, 0.08), (0.0, 0.0)), spinup_steps=60)
    kw.update(overrides)
    return WorldConfig(**kw)


def transport(x: np.ndarray, F: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Apply the one-step flow map n times (n may be negative)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if n >= 0:
        for _ in range(n):
            x = x @ F.T + v
        return x
    Finv = np.linalg.inv(F)
    for _ in range(-n):
        x = (x - v) @ Finv.T
    return x


def make_world(cfg: WorldConfig, seed: int, stream_steps: int = 0) -> BloomWorld:
    """Random blob field, with an upstream stream when the world moves.

    ``n_blobs`` is a density per unit square.  Each blob gets an arrival
    time in [0, stream_steps] and a position in the domain at that time; its
    t=0 centre is that position carried backwards along the flow, so
    structure keeps arriving throughout the mission.  Every blob has already
    been deformed by ``spinup_steps`` of the flow at t=0.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB100]))
    F, v = cfg.flow()
    transits = cfg.speed * stream_steps
    n = int(round(cfg.n_blobs * (1.0 + transits)))
    Fa = np.linalg.matrix_power(F, cfg.spinup_steps)
    blobs = []
    for _ in range(n):
        tau = int(rng.integers(0, stream_steps + 1)) if transits > 0 else 0
        pos = rng.uniform(0.05, 0.95, size=2)
        c = transport(pos, F, v, -tau)[0]
        a = rng.uniform(*cfg.amplitude_range)
        s1, s2 = rng.uniform(*cfg.scale_range, size=2)
        ang = rng.uniform(0, np.pi)
        R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        cov0 = R @ np.diag([s1**2, s2**2]) @ R.T
        Fb = np.linalg.matrix_power(np.linalg.inv(F), tau)
        cov = Fb @ Fa @ cov0 @ Fa.T @ Fb.T
        blobs.append(Blob(c, float(a), cov))
    return BloomWorld(
        grid=DiscreteDomain.grid_2d(cfg.n_grid),
        blobs=tuple(blobs),
        F=F,
        v=v,
        subsurface_offset=np.asarray(cfg.subsurface_offset, dtype=float),
        t=0,
        rng_seed=seed,
    )

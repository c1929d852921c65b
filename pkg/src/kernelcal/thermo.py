"""Landauer and Sagawa-Ueda bookkeeping for kernel change.

Information enters in nats, so the Landauer price is kBT per nat.  Only
information *gains* are charged: losses add zero to the acquisition bound.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .kernelspace import KernelMatrix, KernelShapeError, hs_distance

BOLTZMANN = 1.380649e-23  # J/K
POWER_SLACK = 1e-12


@dataclass(frozen=True)
class ThermoConfig:
    kBT: float = 1.0

    def __post_init__(self):
        if not self.kBT > 0:
            raise ValueError("kBT must be > 0")

    @classmethod
    def physical(cls, temperature: float = 300.0) -> "ThermoConfig":
        return cls(BOLTZMANN * temperature)


@dataclass(frozen=True)
class LedgerStep:
    delta_I: float
    w_min: float


@dataclass(frozen=True)
class ThermoLedger:
    steps: tuple[LedgerStep, ...]
    kBT: float = 1.0
    cumulative_w_min: float = field(init=False)
    cumulative_delta_I_pos: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "cumulative_w_min", math.fsum(s.w_min for s in self.steps))
        object.__setattr__(self, "cumulative_delta_I_pos", math.fsum(max(0.0, s.delta_I) for s in self.steps))

    def __add__(self, other: "ThermoLedger") -> "ThermoLedger":
        if self.kBT != other.kBT:
            raise ValueError("cannot concatenate ledgers at different kBT")
        return ThermoLedger(self.steps + other.steps, self.kBT)

    def running_w_min(self) -> list[float]:
        return list(itertools.accumulate(s.w_min for s in self.steps))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "delta_I", "w_min", "cumulative"])
            for i, (s, c) in enumerate(zip(self.steps, self.running_w_min())):
                w.writerow([i, repr(s.delta_I), repr(s.w_min), repr(c)])


def _nats(x) -> float:
    return float(x.nats) if hasattr(x, "nats") else float(x)


def landauer_ledger(info_trajectory: Sequence, cfg: ThermoConfig = ThermoConfig()) -> ThermoLedger:
    """Minimum work per step, kBT * max(0, I_{t+1} - I_t)."""
    vals = [_nats(v) for v in info_trajectory]
    if len(vals) < 2:
        raise ValueError("information trajectory needs at least two entries")
    steps = []
    for a, b in zip(vals[:-1], vals[1:]):
        d = b - a
        steps.append(LedgerStep(d, cfg.kBT * max(0.0, d)))
    return ThermoLedger(tuple(steps), cfg.kBT)


def extraction_bound(delta_F: float, info, cfg: ThermoConfig = ThermoConfig()) -> float:
    """Upper bound on work extractable with ``info`` nats of correlation."""
    i = _nats(info)
    if i < 0:
        raise ValueError("mutual information must be >= 0")
    return float(delta_F + cfg.kBT * i)


@dataclass(frozen=True)
class SpeedRecord:
    hs_speed: float
    info_rate: float
    required_power: float
    supplied_power: float
    satisfied: bool


@dataclass(frozen=True)
class SpeedLimitReport:
    records: tuple[SpeedRecord, ...]

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.records)


def speed_limit_check(
    kernel_trajectory: Sequence[KernelMatrix] | None,
    info_trajectory: Sequence,
    supplied_power: Sequence[float],
    cfg: ThermoConfig = ThermoConfig(),
) -> SpeedLimitReport:
    """Per-step check kBT * dI/dt <= supplied power, with the HS speed as a diagnostic.

    ``supplied_power`` has one entry per step (len(info_trajectory) - 1).
    ``kernel_trajectory`` may be None when only the power check is wanted.
    """
    info = [_nats(v) for v in info_trajectory]
    n_steps = len(info) - 1
    if n_steps < 1 or len(supplied_power) != n_steps:
        raise KernelShapeError("supplied_power must have one entry per step")
    if kernel_trajectory is not None and len(kernel_trajectory) != len(info):
        raise KernelShapeError("kernel and information trajectories differ in length")
    recs = []
    for t in range(n_steps):
        speed = 0.0 if kernel_trajectory is None else hs_distance(kernel_trajectory[t], kernel_trajectory[t + 1])
        rate = max(0.0, info[t + 1] - info[t])
        need = cfg.kBT * rate
        have = float(supplied_power[t])
        recs.append(SpeedRecord(speed, rate, need, have, have >= need - POWER_SLACK))
    return SpeedLimitReport(tuple(recs))


def read_trace(path) -> dict:
    """Load an information trace from JSONL or CSV.

    Rows carry ``info`` (cumulative nats) and optionally ``supplied_power``
    and ``kernel_id``.
    """
    path = Path(path)
    rows = []
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    else:
        with open(path) as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"empty trace {path}")
    out = {"info": [float(r["info"]) for r in rows]}
    if all(r.get("supplied_power") not in (None, "") for r in rows):
        out["supplied_power"] = [float(r["supplied_power"]) for r in rows]
    return out


def ledger_from_trace(path, cfg: ThermoConfig = ThermoConfig()) -> ThermoLedger:
    return landauer_ledger(read_trace(path)["info"], cfg)


def net_change_bound_holds(ledger: ThermoLedger, info_trajectory: Sequence) -> bool:
    vals = [_nats(v) for v in info_trajectory]
    return ledger.cumulative_w_min >= ledger.kBT * (vals[-1] - vals[0]) - 1e-12 * max(1.0, abs(vals[-1]))


"""Exact maximum-caliber path measures over a finite kernel family.

A trajectory is a sequence of kernel indices k_0..k_T.  The path measure is
a Markov reference chain reweighted by switching cost and cumulative
information,

    P[path] = pi0(k_0) prod_t q(k_{t+1}|k_t) exp(-lambda_C C + lambda_G G) / Z,

with C the number of switches and G = sum_{t=0..T} I_{k_t}.  Because both
functionals are additive along the path, the measure is a chain-structured
Gibbs measure and every quantity is available from log-space transfer
matrices in O(T m^2).  ``enumerate_paths`` is the brute-force oracle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

ENUMERATION_LIMIT = 2**20


class PathSpecError(ValueError):
    pass


class StateSpaceTooLarge(ValueError):
    pass


class UndefinedOdds(ZeroDivisionError):
    pass


class InfeasibleTargets(ValueError):
    def __init__(self, msg, achievable):
        super().__init__(f"{msg}; achievable: {achievable}")
        self.achievable = achievable


@dataclass(frozen=True, eq=False)
class PathMeasureSpec:
    """Finite-family MaxCal problem.

    ``lambda_C`` may be negative: that is what calibration returns for
    switching targets above the reference rate.
    """

    m: int
    T: int
    pi0: np.ndarray
    q: np.ndarray
    info: np.ndarray
    lambda_C: float = 0.0
    lambda_G: float = 0.0

    def __post_init__(self):
        pi0 = np.asarray(self.pi0, dtype=float).ravel()
        q = np.asarray(self.q, dtype=float)
        info = np.asarray(self.info, dtype=float).ravel()
        if self.m < 2:
            raise PathSpecError("kernel family needs m >= 2")
        if self.T < 1:
            raise PathSpecError("horizon needs T >= 1")
        if pi0.shape != (self.m,) or q.shape != (self.m, self.m) or info.shape != (self.m,):
            raise PathSpecError("pi0, q, info shapes do not match m")
        if np.any(pi0 < 0) or abs(pi0.sum() - 1) > 1e-12:
            raise PathSpecError("pi0 must be a probability vector")
        if np.any(q < 0) or np.any(np.abs(q.sum(axis=1) - 1) > 1e-12):
            raise PathSpecError("q must be row-stochastic")
        if not (np.all(np.isfinite(info)) and np.isfinite(self.lambda_C) and np.isfinite(self.lambda_G)):
            raise PathSpecError("info and multipliers must be finite")
        for name, arr in (("pi0", pi0), ("q", q), ("info", info)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def with_multipliers(self, lambda_C: float, lambda_G: float) -> "PathMeasureSpec":
        return replace(self, lambda_C=float(lambda_C), lambda_G=float(lambda_G))

    def truncated(self, T: int) -> "PathMeasureSpec":
        return replace(self, T=int(T))

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "T": self.T,
            "pi0": self.pi0.tolist(),
            "q": self.q.tolist(),
            "info": self.info.tolist(),
            "lambda_C": self.lambda_C,
            "lambda_G": self.lambda_G,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PathMeasureSpec":
        m = int(obj.get("m", len(obj["info"])))
        pi0 = obj.get("pi0", [1.0 / m] * m)
        q = obj.get("q", [[1.0 / m] * m for _ in range(m)])
        return cls(
            m=m,
            T=int(obj["T"]),
            pi0=pi0,
            q=q,
            info=obj["info"],
            lambda_C=float(obj.get("lambda_C", 0.0)),
            lambda_G=float(obj.get("lambda_G", 0.0)),
        )


@dataclass(frozen=True)
class Trajectory:
    states: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True, eq=False)
class GibbsPathMeasure:
    ln_Z: float
    node_marginals: np.ndarray  # (T+1, m)
    pair_marginals: np.ndarray  # (T, m, m)
    expected_switch_cost: float
    expected_info: float
    log_alpha: np.ndarray
    log_beta: np.ndarray


@dataclass(frozen=True, eq=False)
class EnumeratedMeasure:
    paths: np.ndarray  # (n_paths, T+1)
    probs: np.ndarray
    log_weights: np.ndarray
    ln_Z: float
    node_marginals: np.ndarray
    pair_marginals: np.ndarray
    switch_cost: np.ndarray
    info_total: np.ndarray
    log_reference: np.ndarray

    def path_entropy(self) -> float:
        """-sum P ln(P/Q) by direct summation."""
        mask = self.probs > 0
        lp = np.log(self.probs[mask])
        return float(-np.sum(self.probs[mask] * (lp - self.log_reference[mask])))


def _check_traj(spec: PathMeasureSpec, traj) -> np.ndarray:
    s = np.asarray(traj.states if isinstance(traj, Trajectory) else traj, dtype=int)
    if s.shape != (spec.T + 1,) or np.any(s < 0) or np.any(s >= spec.m):
        raise PathSpecError("trajectory does not match the PathMeasureSpec (length or state range)")
    return s


def switch_cost(traj) -> int:
    s = np.asarray(traj.states if isinstance(traj, Trajectory) else traj)
    return int(np.sum(s[1:] != s[:-1]))


def info_total(spec: PathMeasureSpec, traj) -> float:
    s = _check_traj(spec, traj)
    return float(np.sum(spec.info[s]))


def path_weight(spec: PathMeasureSpec, traj) -> float:
    """Unnormalized Gibbs weight of one trajectory."""
    s = _check_traj(spec, traj)
    ref = spec.pi0[s[0]] * np.prod(spec.q[s[:-1], s[1:]])
    if ref == 0:
        return 0.0
    return float(ref * np.exp(-spec.lambda_C * switch_cost(s) + spec.lambda_G * info_total(spec, s)))


def _log(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def enumerate_paths(spec: PathMeasureSpec) -> EnumeratedMeasure:
    """Brute-force normalized measure over all m^(T+1) paths."""
    n_paths = spec.m ** (spec.T + 1)
    if n_paths > ENUMERATION_LIMIT:
        raise StateSpaceTooLarge(f"{n_paths} paths exceed the enumeration limit {ENUMERATION_LIMIT}")
    paths = np.array(list(itertools.product(range(spec.m), repeat=spec.T + 1)), dtype=int)
    log_q = _log(spec.q)
    log_ref = _log(spec.pi0)[paths[:, 0]] + np.sum(log_q[paths[:, :-1], paths[:, 1:]], axis=1)
    c = np.sum(paths[:, 1:] != paths[:, :-1], axis=1)
    g = np.sum(spec.info[paths], axis=1)
    lw = log_ref - spec.lambda_C * c + spec.lambda_G * g
    ln_z = float(logsumexp(lw))
    probs = np.exp(lw - ln_z)
    node = np.zeros((spec.T + 1, spec.m))
    pair = np.zeros((spec.T, spec.m, spec.m))
    for t in range(spec.T + 1):
        np.add.at(node[t], paths[:, t], probs)
    for t in range(spec.T):
        np.add.at(pair[t], (paths[:, t], paths[:, t + 1]), probs)
    return EnumeratedMeasure(paths, probs, lw, ln_z, node, pair, c, g, log_ref)


def _edge_log_potential(spec: PathMeasureSpec) -> np.ndarray:
    # psi[i, j] = log q(j|i) - lambda_C [i != j] + lambda_G I_j
    psi = _log(spec.q) - spec.lambda_C * (1.0 - np.eye(spec.m))
    return psi + spec.lambda_G * spec.info[None, :]


def _forward_backward(spec: PathMeasureSpec):
    psi = _edge_log_potential(spec)
    T, m = spec.T, spec.m
    la = np.empty((T + 1, m))
    lb = np.zeros((T + 1, m))
    la[0] = _log(spec.pi0) + spec.lambda_G * spec.info
    for t in range(T):
        la[t + 1] = logsumexp(la[t][:, None] + psi, axis=0)
    for t in range(T - 1, -1, -1):
        lb[t] = logsumexp(psi + lb[t + 1][None, :], axis=1)
    return psi, la, lb


def transfer_solve(spec: PathMeasureSpec) -> GibbsPathMeasure:
    """Log-space forward-backward evaluation of the path measure."""
    psi, la, lb = _forward_backward(spec)
    ln_z = float(logsumexp(la[-1]))
    if not np.isfinite(ln_z):
        raise FloatingPointError("forward messages vanished; spec has no positive-weight path")
    node = np.exp(la + lb - ln_z)
    pair = np.exp(la[:-1, :, None] + psi[None, :, :] + lb[1:, None, :] - ln_z)
    off = 1.0 - np.eye(spec.m)
    e_c = float(np.sum(pair * off))
    e_g = float(np.sum(node * spec.info[None, :]))
    return GibbsPathMeasure(ln_z, node, pair, e_c, e_g, la, lb)


@dataclass(frozen=True)
class TransitionOdds:
    one_step_odds: float
    exact_conditional_odds: float


def transition_odds(spec: PathMeasureSpec, t: int, from_state: int, to_state: int,
                    measure: GibbsPathMeasure | None = None) -> TransitionOdds:
    if not (0 <= t < spec.T):
        raise PathSpecError("t must satisfy 0 <= t < T")
    if not (0 <= from_state < spec.m and 0 <= to_state < spec.m):
        raise PathSpecError("state index out of range")
    q_stay = spec.q[from_state, from_state]
    if q_stay == 0:
        raise UndefinedOdds("q(from|from) = 0, odds undefined")
    switched = float(to_state != from_state)
    d_info = spec.info[to_state] - spec.info[from_state]
    one_step = spec.q[from_state, to_state] / q_stay * np.exp(-spec.lambda_C * switched + spec.lambda_G * d_info)
    if measure is None:
        measure = transfer_solve(spec)
    # conditional ratio in log space; equals pair[t, f, to] / pair[t, f, f]
    psi = _edge_log_potential(spec)
    lb = measure.log_beta[t + 1]
    lr = psi[from_state, to_state] + lb[to_state] - psi[from_state, from_state] - lb[from_state]
    exact = float(np.exp(lr))
    return TransitionOdds(float(one_step), exact)


def switch_probability(odds: float) -> float:
    return odds / (1.0 + odds)


def path_entropy(spec: PathMeasureSpec, measure: GibbsPathMeasure | None = None) -> float:
    """Relative path entropy S[P] = -E_P ln(P/Q) <= 0."""
    if measure is None:
        measure = transfer_solve(spec)
    s = spec.lambda_C * measure.expected_switch_cost - spec.lambda_G * measure.expected_info + measure.ln_Z
    return float(min(s, 0.0))


def sample_paths(spec: PathMeasureSpec, n: int, seed: int, partitions: int = 1) -> list[Trajectory]:
    """Forward-filter backward-sample ``n`` exact draws.

    Splitting into ``partitions`` uses spawned child seeds per partition and
    concatenates in partition order, so output depends on (seed, partitions).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    psi, la, _ = _forward_backward(spec)
    children = np.random.SeedSequence(seed).spawn(partitions) if partitions > 1 else [np.random.SeedSequence(seed)]
    sizes = [n // partitions + (1 if i < n % partitions else 0) for i in range(len(children))]
    out = []
    for ss, size in zip(children, sizes):
        if size:
            out.append(_ffbs(psi, la, size, np.random.default_rng(ss)))
    states = np.concatenate(out, axis=0)
    return [Trajectory(row) for row in states]


def sample_states(spec: PathMeasureSpec, n: int, seed: int) -> np.ndarray:
    """Same draws as ``sample_paths`` but as an (n, T+1) integer array."""
    psi, la, _ = _forward_backward(spec)
    return _ffbs(psi, la, n, np.random.default_rng(np.random.SeedSequence(seed)))


def _categorical(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    c = np.cumsum(p, axis=1)
    u = rng.random(logits.shape[0]) * c[:, -1]
    return np.minimum((c < u[:, None]).sum(axis=1), logits.shape[1] - 1)


def _ffbs(psi, la, n, rng) -> np.ndarray:
    T = la.shape[0] - 1
    out = np.empty((n, T + 1), dtype=int)
    out[:, T] = _categorical(np.broadcast_to(la[T], (n, la.shape[1])), rng)
    for t in range(T - 1, -1, -1):
        logits = la[t][None, :] + psi[:, out[:, t + 1]].T
        out[:, t] = _categorical(logits, rng)
    return out


def expectations(spec: PathMeasureSpec) -> np.ndarray:
    m = transfer_solve(spec)
    return np.array([m.expected_switch_cost, m.expected_info])


def achievable_range(spec: PathMeasureSpec) -> dict:
    return {
        "E_C": (0.0, float(spec.T)),
        "E_G": (float((spec.T + 1) * spec.info.min()), float((spec.T + 1) * spec.info.max())),
    }


def calibrate_multipliers(
    spec: PathMeasureSpec,
    target_E_C: float,
    target_E_G: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    fd_step: float = 1e-5,
) -> tuple[float, float]:
    """Find (lambda_C, lambda_G) whose Gibbs measure matches the targets.

    Damped Newton on the convex dual ln Z(theta) - theta . target with
    theta = (-lambda_C, lambda_G); the Jacobian of the expectation map is
    taken by central differences, and the step is halved until the dual
    decreases.
    """
    rng = achievable_range(spec)
    lo_c, hi_c = rng["E_C"]
    lo_g, hi_g = rng["E_G"]
    if not (lo_c < target_E_C < hi_c) or not (lo_g < target_E_G < hi_g):
        raise InfeasibleTargets("targets outside the open achievable interval", rng)
    target = np.array([target_E_C, target_E_G], dtype=float)

    def solve(theta):
        s = spec.with_multipliers(-theta[0], theta[1])
        meas = transfer_solve(s)
        return meas.ln_Z, np.array([meas.expected_switch_cost, meas.expected_info])

    def dual(theta):
        ln_z, _ = solve(theta)
        return ln_z - theta @ target

    theta = np.zeros(2)
    ln_z, mean = solve(theta)
    f = ln_z - theta @ target
    for _ in range(max_iter):
        resid = mean - target
        if np.max(np.abs(resid)) < tol:
            return float(-theta[0]), float(theta[1])
        jac = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = fd_step
            jac[:, j] = (solve(theta + e)[1] - solve(theta - e)[1]) / (2 * fd_step)
        jac = 0.5 * (jac + jac.T)
        try:
            step = -np.linalg.solve(jac + 1e-12 * np.eye(2), resid)
        except np.linalg.LinAlgError:
            step = -resid
        if not np.all(np.isfinite(step)):
            step = -resid
        a = 1.0
        while a > 1e-12:
            cand = theta + a * step
            fc = dual(cand)
            if np.isfinite(fc) and fc <= f + 1e-4 * a * (resid @ step):
                break
            a *= 0.5
        else:
            break
        theta = cand
        ln_z, mean = solve(theta)
        f = ln_z - theta @ target
    if np.max(np.abs(mean - target)) < 1e-8:
        return float(-theta[0]), float(theta[1])
    raise InfeasibleTargets("Newton iteration did not reach the targets", rng)

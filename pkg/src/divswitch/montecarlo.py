"""Path simulation of a stationary grid policy.

Estimates the policy value at a start node by simulating the controlled
surplus: lump actions and switches resolve instantly, waiting advances in
delta ticks, and a claim inside the tick snaps the surplus down to the
lattice (overshoot paid as dividends) or stops the path at ruin with the
penalty.  Paths are truncated at a finite horizon; the neglected tail is
bounded by e^{-c horizon} times the value scale and reported separately.

RNG: one counter-based Philox stream keyed by the seed drives the whole
simulation; per-tick draws are consumed in path-index order over the active
set (claim uniforms, per-source sizes in source order, fresh arrival gaps),
so identical (seed, paths, start) reproduce the result bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidPolicyError
from .grid import GridSpec, to_point
from .model import (
    ClaimModel,
    ConstantPenalty,
    ModelSpec,
    SurvivorPenalty,
    ZeroPenalty,
    eval_obstacle_batch,
    eval_penalty,
    total_intensity,
)
from .operators import NO_ACTION, SWITCH
from .solver import PolicyField


@dataclass(frozen=True)
class SimConfig:
    paths: int
    horizon: float
    seed: int
    start: tuple[int, ...]

    def __post_init__(self):
        if self.paths < 1:
            raise DomainError("paths must be >= 1")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))


def default_horizon(c: float, tail: float = 1e-4) -> float:
    """Horizon with discount weight e^{-c T} = tail on the truncated future."""
    return float(np.log(1.0 / tail) / c)


@dataclass
class SimResult:
    mean: float
    std_error: float
    dividends_mean: float
    switch_mean: float
    penalty_mean: float
    paths: int
    horizon: float
    outside_box_events: int
    horizon_hits: int


def sample_claim(claims: ClaimModel, rng: np.random.Generator):
    """(source index, jump vector): source with probability lam_l/lam, size from F_l."""
    lam = total_intensity(claims)
    if lam == 0.0:
        raise DomainError("cannot sample a claim from the no-claims model")
    probs = np.array([s.intensity / lam for s in claims.sources])
    l = int(rng.choice(len(probs), p=probs))
    beta = float(claims.sources[l].marginal.sample(rng, ()))
    return l, beta * np.asarray(claims.sources[l].allocation)


def _penalty_batch(penalty, xs: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    if isinstance(penalty, ZeroPenalty):
        return np.zeros(len(xs))
    if isinstance(penalty, ConstantPenalty):
        return np.full(len(xs), float(penalty.value))
    if isinstance(penalty, SurvivorPenalty):
        v1, v2 = penalty.tables
        out = np.zeros(len(xs))
        m1 = xs[:, 0] - alphas[:, 0] < 0
        m2 = xs[:, 1] - alphas[:, 1] < 0
        if np.any(m1):
            out[m1] -= np.asarray(v2(xs[m1, 1]))
        if np.any(m2):
            out[m2] -= np.asarray(v1(xs[m2, 0]))
        return out
    return np.array([eval_penalty(penalty, x, al) for x, al in zip(xs, alphas)])


def simulate_policy(
    model: ModelSpec, grid: GridSpec, policy: PolicyField, cfg: SimConfig
) -> SimResult:
    """Discounted-value estimate of the stationary policy from cfg.start."""
    n = model.n
    if len(cfg.start) != n:
        raise DomainError("start node dimension mismatch")
    if any(s < 0 or s > mm for s, mm in zip(cfg.start, grid.m_max)):
        raise DomainError(f"start node {cfg.start} outside the grid box")
    _validate_policy(policy)

    delta = grid.delta
    p = np.asarray(model.p)
    a = np.asarray(model.a)
    pay = (a * p) * delta
    c = model.c
    lam = model.lam
    sources = model.claims.sources
    src_cum = (
        np.cumsum([s.intensity for s in sources]) / lam if lam > 0 else np.zeros(0)
    )
    mm = np.asarray(grid.m_max)

    rng = np.random.Generator(np.random.Philox(key=cfg.seed))

    total = cfg.paths
    div_acc = np.zeros(total)
    sw_acc = np.zeros(total)
    pen_acc = np.zeros(total)
    outside = 0
    horizon_hits = 0

    idx = np.arange(total)
    m = np.tile(np.asarray(cfg.start, dtype=np.int64), (total, 1))
    t = np.zeros(total)
    if lam > 0:
        tau = rng.standard_exponential(total) / lam
    else:
        tau = np.full(total, np.inf)

    while idx.size:
        # retire paths that reached the horizon (their tail is the reported bias)
        live = t < cfg.horizon
        horizon_hits += int(np.count_nonzero(~live))
        if not np.all(live):
            idx, m, t, tau = idx[live], m[live], t[live], tau[live]
            if idx.size == 0:
                break

        # resolve instantaneous actions until every path is waiting
        while True:
            over = m > mm
            any_over = over.any(axis=1)
            outside += int(np.count_nonzero(any_over))
            look = np.minimum(m, mm)
            act = policy.actions[tuple(look.T)].astype(np.int64)
            if np.any(any_over):
                act[any_over] = np.argmax(over[any_over], axis=1)
            if np.all(act == NO_ACTION):
                break
            disc = np.exp(-c * t)
            sw_mask = act == SWITCH
            if np.any(sw_mask):
                pts = to_point(grid, m[sw_mask])
                sw_acc[idx[sw_mask]] += disc[sw_mask] * eval_obstacle_batch(
                    model.obstacle, pts
                )
            for i in range(n):
                pm = act == i
                if np.any(pm):
                    div_acc[idx[pm]] += disc[pm] * pay[i]
                    m[pm, i] -= 1
            keep = ~sw_mask
            if not np.all(keep):
                idx, m, t, tau = idx[keep], m[keep], t[keep], tau[keep]
                if idx.size == 0:
                    break
        if idx.size == 0:
            break

        # one waiting tick: either a full delta of drift or the next claim
        gap = tau - t
        no_claim = gap > delta
        m[no_claim] += 1
        t[no_claim] += delta

        cl = ~no_claim
        n_cl = int(np.count_nonzero(cl))
        if n_cl:
            dt = gap[cl]
            y = to_point(grid, m[cl]) + dt[:, None] * p
            src = np.searchsorted(src_cum, rng.random(n_cl), side="right")
            src = np.minimum(src, len(sources) - 1)
            beta = np.empty(n_cl)
            for l, s in enumerate(sources):
                sel = src == l
                k = int(np.count_nonzero(sel))
                if k:
                    beta[sel] = s.marginal.sample(rng, k)
            alloc = np.stack([np.asarray(s.allocation) for s in sources])
            alpha = beta[:, None] * alloc[src]
            z = y - alpha
            t_claim = tau[cl]
            disc = np.exp(-c * t_claim)
            ruined = (z < 0).any(axis=1)

            cl_idx = np.nonzero(cl)[0]
            if np.any(ruined):
                rows = cl_idx[ruined]
                pen_acc[idx[rows]] += -disc[ruined] * _penalty_batch(
                    model.penalty, y[ruined], alpha[ruined]
                )
            surv = ~ruined
            if np.any(surv):
                rows = cl_idx[surv]
                zk = z[surv]
                k = _to_index_batch(grid, zk)
                over_pay = ((zk - to_point(grid, k)) * a).sum(axis=1)
                div_acc[idx[rows]] += disc[surv] * np.maximum(over_pay, 0.0)
                m[rows] = k
                t[rows] = t_claim[surv]
            # ruined paths drop out; survivors draw the next arrival
            keep = np.ones(idx.size, dtype=bool)
            keep[cl_idx[ruined]] = False
            new_gaps = rng.standard_exponential(int(surv.sum())) / lam if lam > 0 else None
            if new_gaps is not None and np.any(surv):
                tau[cl_idx[surv]] = t_claim[surv] + new_gaps
            idx, m, t, tau = idx[keep], m[keep], t[keep], tau[keep]

    div_mean = float(np.mean(div_acc))
    sw_mean = float(np.mean(sw_acc))
    pen_mean = float(np.mean(pen_acc))
    totals = div_acc + sw_acc + pen_acc
    se = float(np.std(totals, ddof=1) / np.sqrt(total)) if total > 1 else 0.0
    return SimResult(
        mean=div_mean + sw_mean + pen_mean,
        std_error=se,
        dividends_mean=div_mean,
        switch_mean=sw_mean,
        penalty_mean=pen_mean,
        paths=total,
        horizon=cfg.horizon,
        outside_box_events=outside,
        horizon_hits=horizon_hits,
    )


def _to_index_batch(grid: GridSpec, z: np.ndarray) -> np.ndarray:
    spacing = grid.delta * np.asarray(grid.premiums)
    k = np.floor(z / spacing).astype(np.int64)
    k = np.where(((k + 1) * grid.delta) * np.asarray(grid.premiums) <= z, k + 1, k)
    k = np.where((k * grid.delta) * np.asarray(grid.premiums) > z, k - 1, k)
    return np.maximum(k, 0)


def _validate_policy(policy: PolicyField) -> None:
    for i in range(policy.grid.n):
        face = [slice(None)] * policy.grid.n
        face[i] = 0
        if np.any(policy.actions[tuple(face)] == i):
            raise InvalidPolicyError(f"policy pays axis {i} dividends at the zero face")

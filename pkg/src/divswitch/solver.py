"""Monotone value iteration to the discrete HJB fixed point.

Starting from the switch-immediately field v_1 = f(g(m)), repeated Jacobi
sweeps v_{l+1} = T(v_l) increase pointwise toward the lattice-optimal value.
Iteration stops when the sup-norm increment falls below tol_iter (default
1e-8 * max(1, sup|v_1|)); the post-hoc residual max_m (T(v) - v)(m) is
reported against tol_res = 10 * tol_iter.  The stationary policy reads one
action per node from the argmax of T, and region maps follow from it under
2n-neighbor adjacency.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .errors import DomainError, NonconvergenceError, OutsideBoxWarning
from .grid import GridSpec, refine, snap_down, to_index
from .model import ModelSpec
from .operators import (
    NO_ACTION,
    SWITCH,
    CoefficientTable,
    ValueField,
    apply_T_field,
    precompute_coeffs,
)

MONOTONE_SLACK = 1e-12


@dataclass
class SolveReport:
    iterations: int
    final_sup_delta: float
    residual: float
    wall_time: float
    tol_iter: float
    tol_res: float
    monotone_violations: int = 0

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_sup_delta": self.final_sup_delta,
            "residual": self.residual,
            "wall_time": self.wall_time,
            "tol_iter": self.tol_iter,
            "tol_res": self.tol_res,
            "monotone_violations": self.monotone_violations,
        }


@dataclass
class PolicyField:
    """Per-node action: SWITCH, NO_ACTION, or the paying axis index."""

    grid: GridSpec
    actions: np.ndarray

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int8)
        if self.actions.shape != self.grid.shape:
            raise DomainError("policy shape does not match grid")
        for i in range(self.grid.n):
            face = [slice(None)] * self.grid.n
            face[i] = 0
            if np.any(self.actions[tuple(face)] == i):
                raise DomainError(f"policy pays axis {i} dividends at m_{i} = 0")

    def mask(self, code: int) -> np.ndarray:
        return self.actions == code

    def component_count(self, code: int) -> int:
        """Connected components of one region under 2n-neighbor adjacency."""
        _, count = scipy.ndimage.label(self.mask(code))
        return int(count)

    def region_summary(self) -> dict:
        out = {}
        for code in [SWITCH, NO_ACTION] + list(range(self.grid.n)):
            name = {SWITCH: "switch", NO_ACTION: "none"}.get(code, f"div{code + 1}")
            mask = self.mask(code)
            out[name] = {"nodes": int(mask.sum()), "components": self.component_count(code)}
        return out

    def boundary_no_action(self) -> bool:
        """True when any top-face node waits; the box then truncates the scheme."""
        for i in range(self.grid.n):
            face = [slice(None)] * self.grid.n
            face[i] = -1
            if np.any(self.actions[tuple(face)] == NO_ACTION):
                return True
        return False


def value_iteration(
    model: ModelSpec,
    grid: GridSpec,
    coeffs: CoefficientTable,
    tol_iter: float | None = None,
    max_iter: int = 1_000_000,
    v_init: np.ndarray | None = None,
    workers: int = 1,
):
    """Iterate v_{l+1} = T(v_l) from the obstacle (or a subsolution warm start).

    Returns (ValueField, SolveReport); raises NonconvergenceError at the cap.
    """
    start = time.perf_counter()
    f_arr = coeffs.obstacle_arr
    if v_init is None:
        v = f_arr.copy()
    else:
        v = np.maximum(np.asarray(v_init, dtype=float), f_arr)
    scale = max(1.0, float(np.max(np.abs(v))))
    if tol_iter is None:
        tol_iter = 1e-8 * scale
    violations = 0
    sup_delta = np.inf
    iterations = 0
    while iterations < max_iter:
        new, _ = apply_T_field(coeffs, v, workers=workers)
        diff = new - v
        sup_delta = float(np.max(np.abs(diff)))
        violations += int(np.count_nonzero(diff < -MONOTONE_SLACK))
        v = new
        iterations += 1
        if sup_delta <= tol_iter:
            break
    else:
        report = SolveReport(
            iterations=iterations,
            final_sup_delta=sup_delta,
            residual=float("nan"),
            wall_time=time.perf_counter() - start,
            tol_iter=tol_iter,
            tol_res=10 * tol_iter,
            monotone_violations=violations,
        )
        raise NonconvergenceError(
            f"no convergence after {iterations} sweeps (sup delta {sup_delta:g})", report
        )
    field_ = ValueField(grid, v)
    res = residual(model, grid, coeffs, field_, workers=workers)
    report = SolveReport(
        iterations=iterations,
        final_sup_delta=sup_delta,
        residual=res,
        wall_time=time.perf_counter() - start,
        tol_iter=tol_iter,
        tol_res=10 * tol_iter,
        monotone_violations=violations,
    )
    return field_, report


def residual(
    model: ModelSpec,
    grid: GridSpec,
    coeffs: CoefficientTable,
    v: ValueField,
    workers: int = 1,
) -> float:
    """Signed max over nodes of T(v)(m) - v(m); ~0 from above at the fixed point."""
    tv, _ = apply_T_field(coeffs, v.data, workers=workers)
    return float(np.max(tv - v.data))


def extract_policy(
    model: ModelSpec,
    grid: GridSpec,
    coeffs: CoefficientTable,
    v: ValueField,
    workers: int = 1,
) -> PolicyField:
    """Stationary strategy: argmax action of T at the converged field."""
    _, actions = apply_T_field(coeffs, v.data, want_actions=True, workers=workers)
    return PolicyField(grid, actions)


def extend_Vdelta(v: ValueField, weights, x) -> float:
    """Off-grid extension V(x) = v(<x>) + a . (x - <x>); warns outside the box."""
    x = np.asarray(x, dtype=float)
    grid = v.grid
    idx = to_index(grid, x)
    mm = np.asarray(grid.m_max)
    if np.any(idx > mm):
        warnings.warn(
            f"point {x} lies outside the truncated box; slope-a extension used",
            OutsideBoxWarning,
            stacklevel=2,
        )
        idx = np.minimum(idx, mm)
    base = snap_down(grid, x)
    base = np.minimum(base, (mm * grid.delta) * np.asarray(grid.premiums))
    return float(v.data[tuple(idx)] + np.dot(np.asarray(weights), x - base))


@dataclass
class LevelReport:
    delta: float
    sup_diff: float          # sup over coarse nodes of v_fine(2m) - v_coarse(m)
    violations: int          # count of v_coarse(m) > v_fine(2m) + 1e-9
    iterations: int
    residual: float


@dataclass
class RefinementReport:
    levels: list[LevelReport] = field(default_factory=list)

    def sup_diffs(self) -> list[float]:
        return [lv.sup_diff for lv in self.levels if not np.isnan(lv.sup_diff)]

    def total_violations(self) -> int:
        return sum(lv.violations for lv in self.levels)


def refinement_run(
    model: ModelSpec,
    grid0: GridSpec,
    levels: int,
    tol_iter: float | None = None,
    warm_start: bool = True,
    workers: int = 1,
):
    """Solve at delta, delta/2, ..., checking the embedded-grid monotonicity.

    Coarse node m and fine node 2m sit at the identical surplus point, and
    the coarse strategy set embeds in the fine one, so v_coarse(m) <=
    v_fine(2m) up to solver tolerance.  Returns (RefinementReport, fields).
    """
    if levels < 1:
        raise DomainError(f"levels must be >= 1, got {levels}")
    report = RefinementReport()
    fields = []
    grid = grid0
    prev: ValueField | None = None
    for _ in range(levels):
        coeffs = precompute_coeffs(model, grid)
        v_init = None
        if warm_start and prev is not None:
            v_init = _embed_coarse(prev, grid, model)
        v, solve_rep = value_iteration(
            model, grid, coeffs, tol_iter=tol_iter, v_init=v_init, workers=workers
        )
        if prev is None:
            sup_diff, viol = float("nan"), 0
        else:
            stride = tuple(slice(None, None, 2) for _ in range(grid.n))
            fine_on_coarse = v.data[stride]
            gap = fine_on_coarse - prev.data
            sup_diff = float(np.max(np.abs(gap)))
            viol = int(np.count_nonzero(gap < -1e-9))
        report.levels.append(
            LevelReport(
                delta=grid.delta,
                sup_diff=sup_diff,
                violations=viol,
                iterations=solve_rep.iterations,
                residual=solve_rep.residual,
            )
        )
        fields.append(v)
        prev = v
        grid = refine(grid)
    return report, fields


def _embed_coarse(coarse: ValueField, fine_grid: GridSpec, model: ModelSpec) -> np.ndarray:
    """Seed a fine level with the coarse solution's slope-a extension.

    The embedded field is the value of admissible strategies (snap to the
    coarse lattice, then play coarse-optimally), hence still a subsolution
    start after clipping at the obstacle.
    """
    idx = np.indices(fine_grid.shape)
    coarse_idx = tuple(idx[i] // 2 for i in range(fine_grid.n))
    out = coarse.data[coarse_idx]
    for i in range(fine_grid.n):
        odd = idx[i] % 2 == 1
        out = out + odd * (model.a[i] * model.p[i] * fine_grid.delta)
    return out

"""One-dimensional sub-problems feeding the two-company merger instance.

The stand-alone company values V_1, V_2 and the merged-company value V_M are
plain no-switch dividend problems: the n = 1 scheme with zero penalty and an
obstacle low enough that switching is never optimal.  Their value tables
build the survivor penalty and the merger obstacle of the 2-d solve.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

from .errors import DomainError
from .grid import GridSpec, refine
from .model import (
    ClaimModel,
    ClaimSource,
    Marginal,
    MergerObstacle,
    ModelSpec,
    NeverSwitch,
    SurvivorPenalty,
    ValueTable1D,
    ZeroPenalty,
)
from .operators import precompute_coeffs
from .solver import _embed_coarse, value_iteration

DEFAULT_SPAN_FACTOR = 4.0

# The 1-d tables feed the 2-d obstacle and penalty through interpolation, so
# they are solved two halvings finer than the requesting grid: the chord sag
# of a table scales with its spacing squared and must stay below the tie
# window of the 2-d argmax.
TABLE_REFINE = 2


def _no_switch_level(weight: float, premium: float, discount: float) -> float:
    # dominated by any dividend value bound a p / c
    return -10.0 * (weight * premium / discount + 1.0)


def solve_1d(
    intensity: float,
    premium: float,
    discount: float,
    marginal: Marginal,
    grid: GridSpec,
    weight: float = 1.0,
    tol_iter: float | None = None,
    workers: int = 1,
    refine_levels: int = 0,
) -> ValueTable1D:
    """Stand-alone dividend value on a 1-d grid, exported as a knot table."""
    sources = (ClaimSource(intensity, (1.0,), marginal),) if intensity > 0 else ()
    model = ModelSpec(
        n=1,
        p=(premium,),
        c=discount,
        a=(weight,),
        claims=ClaimModel(sources),
        penalty=ZeroPenalty(),
        obstacle=NeverSwitch(_no_switch_level(weight, premium, discount)),
    )
    return _solve_1d_model(
        model, grid, tol_iter=tol_iter, workers=workers, refine_levels=refine_levels
    )


def _solve_1d_model(model, grid, tol_iter=None, workers=1, refine_levels=0) -> ValueTable1D:
    if model.n != 1 or grid.n != 1:
        raise DomainError("solve_1d needs a one-dimensional model and grid")
    # zero penalty keeps T0 of a non-negative field non-negative, so the
    # clipped-at-f zero field is a subsolution start (saves the climb from f);
    # each halving warm-starts from the embedded coarser solution
    v_init = None
    v = None
    for level in range(refine_levels + 1):
        coeffs = precompute_coeffs(model, grid)
        if v_init is None:
            v_init = coeffs.obstacle_arr * 0.0
        v, _ = value_iteration(
            model, grid, coeffs, tol_iter=tol_iter, v_init=v_init, workers=workers
        )
        if level < refine_levels:
            fine = refine(grid)
            v_init = _embed_coarse(v, fine, model)
            grid = fine
    return ValueTable1D(
        xs=tuple(float(x) for x in grid.axis_points(0)),
        vs=tuple(float(val) for val in v.data),
        tail_slope=model.a[0],
    )


@dataclass(frozen=True)
class MergerParams:
    intensity: float
    premium: float


def merger_params(model: ModelSpec) -> MergerParams:
    """Merged company: lam_M = sum lam_l, p_M = sum p_i."""
    return MergerParams(model.lam, float(sum(model.p)))


def build_merger_inputs(
    model: ModelSpec,
    merger_cost: float,
    grid: GridSpec,
    span_factor: float = DEFAULT_SPAN_FACTOR,
    merged_weight: float = 1.0,
    tol_iter: float | None = None,
    workers: int = 1,
    table_refine: int = TABLE_REFINE,
):
    """Solve V_1, V_2, V_M and return (MergerObstacle, SurvivorPenalty).

    Requires n = 2 with axis-concentrated sources.  The merged company takes
    all sources at full size (allocations sum to 1), and each stand-alone
    company takes the sources on its own axis.  The 1-d grids share the 2-d
    delta and span span_factor times the box's coordinate-sum diagonal, so
    obstacle evaluations inside the box never reach the table tails.
    """
    if model.n != 2:
        raise DomainError("build_merger_inputs needs a two-company model")
    if not model.claims.axis_only():
        raise DomainError("build_merger_inputs needs axis-concentrated sources")
    corner = [(grid.m_max[i] * grid.delta) * model.p[i] for i in range(2)]
    span = span_factor * sum(corner)

    def grid_for(premium: float) -> GridSpec:
        m_max = max(2, math.ceil(span / (grid.delta * premium)))
        return GridSpec(grid.delta, (m_max,), (premium,))

    per_axis = [[], []]
    for s in model.claims.sources:
        per_axis[s.axis()].append(s)
    if not per_axis[0] or not per_axis[1]:
        raise DomainError("each company needs at least one claim source")

    def standalone(i: int) -> ValueTable1D:
        sources = tuple(
            ClaimSource(s.intensity, (1.0,), s.marginal) for s in per_axis[i]
        )
        sub = ModelSpec(
            n=1,
            p=(model.p[i],),
            c=model.c,
            a=(model.a[i],),
            claims=ClaimModel(sources),
            penalty=ZeroPenalty(),
            obstacle=NeverSwitch(_no_switch_level(model.a[i], model.p[i], model.c)),
        )
        return _solve_1d_model(
            sub, grid_for(model.p[i]), tol_iter=tol_iter, refine_levels=table_refine
        )

    def merged() -> ValueTable1D:
        pm = merger_params(model)
        sources = tuple(
            ClaimSource(s.intensity, (1.0,), s.marginal) for s in model.claims.sources
        )
        sub = ModelSpec(
            n=1,
            p=(pm.premium,),
            c=model.c,
            a=(merged_weight,),
            claims=ClaimModel(sources),
            penalty=ZeroPenalty(),
            obstacle=NeverSwitch(_no_switch_level(merged_weight, pm.premium, model.c)),
        )
        return _solve_1d_model(
            sub, grid_for(pm.premium), tol_iter=tol_iter, refine_levels=table_refine
        )

    with ThreadPoolExecutor(max_workers=max(1, min(3, workers))) as pool:
        f1 = pool.submit(standalone, 0)
        f2 = pool.submit(standalone, 1)
        fm = pool.submit(merged)
        v1, v2, vm = f1.result(), f2.result(), fm.result()

    if vm.xs[-1] < sum(corner):
        raise DomainError(
            f"merged 1-d table spans {vm.xs[-1]:g} < box diagonal {sum(corner):g};"
            " increase span_factor"
        )
    return MergerObstacle(vm, merger_cost), SurvivorPenalty((v1, v2))

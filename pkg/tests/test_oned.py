import math

import numpy as np
import pytest

from divswitch import (
    ClaimModel,
    ClaimSource,
    Exponential,
    GridSpec,
    MergerObstacle,
    ModelSpec,
    NeverSwitch,
    SurvivorPenalty,
    ZeroPenalty,
    build_merger_inputs,
    eval_cdf,
    solve_1d,
)
from divswitch.errors import DomainError


def classical_barrier_value(lam, p, c, d):
    """De Finetti with Exp(d) claims: smooth-fit barrier and value function.

    Characteristic roots of p r^2 + (p d - lam - c) r - c d = 0; the barrier
    solves V''(b) = 0 and V(x) = x - b + V(b) beyond it.  Used purely as an
    independent oracle for the grid solves.
    """
    coef = [p, p * d - lam - c, -c * d]
    r1, r2 = np.roots(coef)
    if r1 < r2:
        r1, r2 = r2, r1
    b = math.log((r2**2 * (d + r2)) / (r1**2 * (d + r1))) / (r1 - r2)
    b = max(b, 0.0)
    denom = r1 * (d + r1) * math.exp(r1 * b) - r2 * (d + r2) * math.exp(r2 * b)

    def value(x):
        x = np.asarray(x, dtype=float)
        inside = ((d + r1) * np.exp(r1 * np.minimum(x, b)) - (d + r2) * np.exp(r2 * np.minimum(x, b))) / denom
        return np.where(x <= b, inside, inside + (x - b))

    return b, value


def test_solve_1d_no_claims_closed_form():
    grid = GridSpec(0.25, (20,), (2.0,))
    table = solve_1d(0.0, 2.0, 0.5, Exponential(1.0), grid)
    ecd = math.exp(-0.5 * 0.25)
    assert table(0.0) == pytest.approx(2.0 * 0.25 * ecd / (1 - ecd), abs=1e-5)


def test_solve_1d_matches_classical_formula():
    # company 2 of the first merger example
    lam, p, c, d = 2.0, 0.674, 0.11, 3.5
    b, value = classical_barrier_value(lam, p, c, d)
    assert b == pytest.approx(0.3149, abs=2e-4)  # sanity on the oracle itself
    grid = GridSpec(1 / 60, (math.ceil(6.0 * 60 / p),), (p,))
    table = solve_1d(lam, p, c, Exponential(d), grid, refine_levels=2)
    xs = np.linspace(0.0, 4.0, 41)
    err = np.max(np.abs(np.asarray(table(xs)) - value(xs)))
    # monotone scheme approaches from below at O(delta)
    assert err < 5e-3
    assert np.all(np.asarray(table(xs)) <= value(xs) + 1e-9)


def test_solve_1d_concavity_against_finer_oracle():
    lam, p, c, d = 2.4, 1.08, 0.11, 3.0
    grid = GridSpec(1 / 15, (60,), (p,))
    coarse = solve_1d(lam, p, c, Exponential(d), grid)
    fine = solve_1d(lam, p, c, Exponential(d), grid, refine_levels=2)
    vals = np.asarray(coarse.vs)
    diffs = np.diff(vals)
    assert np.all(np.diff(diffs) <= 1e-9)  # concave along the grid
    # the refined solve dominates the coarse one at shared points
    shared = np.asarray(coarse.xs)
    assert np.all(np.asarray(fine(shared)) >= vals - 1e-9)


def test_solve_1d_increments_and_linear_tail():
    lam, p, c, d = 2.0, 0.674, 0.11, 3.5
    grid = GridSpec(1 / 30, (math.ceil(8.0 * 30 / p),), (p,))
    table = solve_1d(lam, p, c, Exponential(d), grid, tol_iter=1e-11)
    vals = np.asarray(table.vs)
    step = grid.delta * p
    diffs = np.diff(vals)
    assert np.min(diffs) >= 1.0 * step - 1e-9
    assert diffs[-1] == pytest.approx(step, abs=1e-6)  # linear slope-a tail


def test_refinement_embedding_1d():
    lam, p, c, d = 2.0, 0.674, 0.11, 3.5
    g = GridSpec(1 / 10, (40,), (p,))
    coarse = solve_1d(lam, p, c, Exponential(d), g)
    fine = solve_1d(lam, p, c, Exponential(d), g, refine_levels=1)
    vc = np.asarray(coarse.vs)
    vf = np.asarray(fine.vs)[::2]
    assert np.all(vc <= vf + 1e-9)


@pytest.fixture(scope="module")
def merger_inputs():
    claims = ClaimModel(
        (
            ClaimSource(2.4, (1.0, 0.0), Exponential(3.0)),
            ClaimSource(2.0, (0.0, 1.0), Exponential(3.5)),
        )
    )
    base = ModelSpec(2, (1.08, 0.674), 0.11, (1.0, 1.0), claims, ZeroPenalty(), NeverSwitch(-1.0))
    grid = GridSpec(1 / 10, (14, 22), (1.08, 0.674))
    obstacle, penalty = build_merger_inputs(base, 0.0, grid, workers=3, table_refine=1)
    return base, grid, obstacle, penalty


def test_merger_parameters(merger_inputs):
    base, grid, obstacle, penalty = merger_inputs
    from divswitch.oned import merger_params

    params = merger_params(base)
    assert params.intensity == pytest.approx(4.4)
    assert params.premium == pytest.approx(1.754)


def test_merger_claim_mixture(merger_inputs):
    base, *_ = merger_inputs
    # F_M(x) = F(x, x): merged claims mix the two exponentials
    merged = ClaimModel(
        tuple(ClaimSource(s.intensity, (1.0,), s.marginal) for s in base.claims.sources)
    )
    for x in (0.3, 1.0, 2.5):
        expected = (2.4 / 4.4) * (1 - math.exp(-3 * x)) + (2.0 / 4.4) * (1 - math.exp(-3.5 * x))
        assert eval_cdf(merged, (x,)) == pytest.approx(expected, rel=1e-12)
        assert eval_cdf(base.claims, (x, x)) == pytest.approx(expected, rel=1e-12)


def test_merger_obstacle_and_penalty_structure(merger_inputs):
    base, grid, obstacle, penalty = merger_inputs
    assert isinstance(obstacle, MergerObstacle)
    assert isinstance(penalty, SurvivorPenalty)
    assert obstacle.cost == 0.0
    # zero-cost merger: the obstacle is V_M of the coordinate sum everywhere
    from divswitch.model import eval_obstacle

    for x in ((0.0, 0.0), (0.7, 0.3), (1.5, 2.0)):
        assert eval_obstacle(obstacle, x) == pytest.approx(float(obstacle.table(sum(x))))
    # the merged table spans past the box diagonal
    corner = sum((grid.m_max[i] * grid.delta) * base.p[i] for i in range(2))
    assert obstacle.table.xs[-1] >= 4.0 * corner - 1e-9


def test_merger_requires_axis_sources():
    shared = ClaimModel((ClaimSource(1.0, (0.5, 0.5), Exponential(1.0)),))
    base = ModelSpec(2, (1.0, 1.0), 0.1, (1.0, 1.0), shared, ZeroPenalty(), NeverSwitch(-1.0))
    grid = GridSpec(0.1, (5, 5), (1.0, 1.0))
    with pytest.raises(DomainError):
        build_merger_inputs(base, 0.0, grid)

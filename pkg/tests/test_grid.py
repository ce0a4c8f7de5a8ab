import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divswitch import GridSpec, clamp_extrapolate, refine, snap_down, to_index, to_point
from divswitch.errors import DomainError, GridSizeError


def test_to_point_basic():
    g = GridSpec(0.5, (10, 10), (2.0, 1.0))
    assert np.array_equal(to_point(g, (3, 4)), [3.0, 2.0])
    assert np.array_equal(to_point(g, (0, 0)), [0.0, 0.0])


def test_to_point_exact_at_paper_spacing():
    # 60 steps of delta = 1/60 must give exactly one premium unit
    g = GridSpec(1 / 60, (120, 120), (1.08, 0.674))
    pt = to_point(g, (60, 0))
    assert pt[0] == 1.08
    assert pt[1] == 0.0


def test_to_index_floor():
    g = GridSpec(0.5, (10, 10), (2.0, 1.0))
    assert tuple(to_index(g, (3.4, 2.9))) == (3, 5)
    assert tuple(to_index(g, (0.999 * 1.0, 0.0))) == (0, 0)


def test_to_index_rejects_negative():
    g = GridSpec(0.5, (10,), (2.0,))
    with pytest.raises(DomainError):
        to_index(g, (-0.1,))


def test_snap_down_examples():
    g = GridSpec(0.5, (10, 10), (2.0, 1.0))
    assert np.array_equal(snap_down(g, (3.4, 2.9)), [3.0, 2.5])
    # idempotence
    assert np.array_equal(snap_down(g, snap_down(g, (3.4, 2.9))), [3.0, 2.5])


def test_snap_down_just_below_node_dyadic():
    # exact dyadic arithmetic: 1.5 - 2^-20 floors to the previous node
    g = GridSpec(0.25, (10,), (2.0,))
    x = 1.5 - 2.0**-20
    assert snap_down(g, (x,))[0] == 1.0


@given(st.lists(st.integers(min_value=0, max_value=400), min_size=1, max_size=3))
@settings(max_examples=200, deadline=None)
def test_roundtrip_index_point(m):
    g = GridSpec(1 / 60, tuple(401 for _ in m), tuple([1.08, 0.674, 0.31][: len(m)]))
    assert tuple(to_index(g, to_point(g, m))) == tuple(m)


@given(
    st.lists(st.floats(min_value=0.0, max_value=50.0, allow_nan=False), min_size=2, max_size=2)
)
@settings(max_examples=200, deadline=None)
def test_snap_down_properties(x):
    g = GridSpec(1 / 30, (2000, 2000), (1.08, 0.674))
    y = snap_down(g, x)
    assert np.all(y <= np.asarray(x) + 0.0)
    assert np.array_equal(snap_down(g, y), y)


def test_refine_geometry():
    g = GridSpec(1 / 30, (20, 20), (1.08, 0.674))
    f = refine(g)
    assert f.delta == g.delta / 2
    assert f.m_max == (40, 40)
    for m in [(0, 0), (3, 7), (20, 20)]:
        fine = to_point(f, tuple(2 * v for v in m))
        coarse = to_point(g, m)
        assert np.array_equal(fine, coarse)  # exact, even for non-dyadic delta


def test_three_refinements():
    g = GridSpec(1 / 10, (4,), (1.0,))
    for _ in range(3):
        g = refine(g)
    assert g.delta == (1 / 10) / 8
    assert g.m_max == (32,)


def test_grid_size_cap():
    with pytest.raises(GridSizeError):
        GridSpec(1e-4, (100_000, 100_000), (1.0, 1.0))


def test_clamp_extrapolate_interior_and_extension():
    g = GridSpec(0.5, (10,), (2.0,))
    field = np.arange(11, dtype=float)
    field[10] = 5.0
    assert clamp_extrapolate(g, field, (1.0,), (7,)) == field[7]
    # two cells past the edge: 5 + 1 * (2 * 0.5 * 2) = 7
    assert clamp_extrapolate(g, field, (1.0,), (12,)) == pytest.approx(7.0)


def test_clamp_extrapolate_monotone_along_ray():
    g = GridSpec(0.5, (10,), (2.0,))
    field = np.linspace(0.0, 5.0, 11)
    vals = [clamp_extrapolate(g, field, (0.7,), (m,)) for m in range(10, 18)]
    assert all(b > a for a, b in zip(vals, vals[1:]))

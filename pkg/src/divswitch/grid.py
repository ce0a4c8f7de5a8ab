"""Lattice geometry for the truncated surplus grid.

Nodes live at points (m_1 * delta * p_1, ..., m_n * delta * p_n) for integer
indices 0 <= m_i <= m_max_i, so one time step delta of premium inflow moves
the surplus exactly one node up every axis.  Index arithmetic is integer-only;
coordinates are always derived as (m * delta) * p in that association, which
makes coarse/fine node coincidence under delta -> delta/2 refinement exact in
floating point (halving is exact, and (2m)*(delta/2) rounds identically to
m*delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridSizeError

# Hard cap on the truncated node count; fail fast instead of thrashing.
MAX_NODES = 80_000_000


@dataclass(frozen=True)
class GridSpec:
    """Truncated lattice: time step, per-axis index bounds, premium rates."""

    delta: float
    m_max: tuple[int, ...]
    premiums: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "m_max", tuple(int(m) for m in self.m_max))
        object.__setattr__(self, "premiums", tuple(float(p) for p in self.premiums))
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if len(self.m_max) != len(self.premiums):
            raise DomainError("m_max and premiums must have the same length")
        if any(m < 1 for m in self.m_max):
            raise DomainError(f"m_max entries must be >= 1, got {self.m_max}")
        if any(p <= 0 for p in self.premiums):
            raise DomainError(f"premiums must be positive, got {self.premiums}")
        if self.node_count > MAX_NODES:
            raise GridSizeError(
                f"grid has {self.node_count} nodes, exceeding the cap of {MAX_NODES}"
            )

    @property
    def n(self) -> int:
        return len(self.m_max)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(m + 1 for m in self.m_max)

    @property
    def node_count(self) -> int:
        return math.prod(m + 1 for m in self.m_max)

    def spacing(self) -> np.ndarray:
        """Node spacing per axis: exactly delta * p_i."""
        return self.delta * np.asarray(self.premiums)

    def axis_points(self, i: int) -> np.ndarray:
        """Coordinates of all nodes along axis i."""
        return (np.arange(self.m_max[i] + 1) * self.delta) * self.premiums[i]


def to_point(grid: GridSpec, m) -> np.ndarray:
    """Map indices to coordinates: (m_i * delta) * p_i per axis.

    Accepts a single index vector or an array whose last axis is the index.
    """
    m = np.asarray(m)
    if np.any(m < 0):
        raise DomainError(f"indices must be non-negative, got {m}")
    return (m * grid.delta) * np.asarray(grid.premiums)


def to_index(grid: GridSpec, x) -> np.ndarray:
    """Index of the closest node at or below x, per coordinate.

    Floor division with a guard: the candidate from floating floor is nudged
    so that to_index(to_point(m)) == m exactly and the returned index is the
    true max{k : (k*delta)*p <= x} under to_point's arithmetic.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"coordinates must be non-negative, got {x}")
    p = np.asarray(grid.premiums)
    idx = np.floor(x / (grid.delta * p)).astype(np.int64)
    # Correct floating-point floor against the canonical node coordinates.
    idx = np.where(((idx + 1) * grid.delta) * p <= x, idx + 1, idx)
    idx = np.where((idx * grid.delta) * p > x, idx - 1, idx)
    return idx


def snap_down(grid: GridSpec, x) -> np.ndarray:
    """Largest grid point <= x componentwise (idempotent)."""
    return to_point(grid, to_index(grid, x))


def refine(grid: GridSpec) -> GridSpec:
    """Halve the step: coarse node m sits at fine node 2m, identical point."""
    return GridSpec(grid.delta / 2, tuple(2 * m for m in grid.m_max), grid.premiums)


def in_box(grid: GridSpec, m) -> bool:
    m = np.asarray(m)
    return bool(np.all(m >= 0) and np.all(m <= np.asarray(grid.m_max)))


def clamp_extrapolate(grid: GridSpec, field, weights, m) -> float:
    """Read field at index m, slope-a linear extension beyond the box.

    For m <= m_max this is field[m]; otherwise the value at the clamped node
    plus a . (g(m) - g(clamp(m))), the linear extension consistent with the
    dividend constraint (the value gradient is at least the weight vector).
    """
    m = np.asarray(m, dtype=np.int64)
    if np.any(m < 0):
        raise DomainError(f"indices must be non-negative, got {m}")
    data = field.data if hasattr(field, "data") else np.asarray(field)
    mm = np.asarray(grid.m_max)
    clamped = np.minimum(m, mm)
    base = float(data[tuple(clamped)])
    if np.all(clamped == m):
        return base
    a = np.asarray(weights, dtype=float)
    return base + float(np.dot(a, to_point(grid, m) - to_point(grid, clamped)))

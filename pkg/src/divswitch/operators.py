"""Discrete one-step operators on the truncated lattice.

The wait operator is affine in the field:

    T0(w)(m) = e^{-(c+lam) delta} w(m + 1)
               + sum_{k <= m} a1(k, m) w(k) + a2(m),

with a1(k, m) = kappa[m - k] an offset kernel and a2(m) the overshoot
integrals minus the discounted ruin integral.  The lump and switch operators
are

    T_i(w)(m) = w(m - e_i) + delta a_i p_i      (only where m_i > 0),
    T_s(w)(m) = f(g(m)),

and T = max over all of them.  A full Jacobi sweep evaluates the kernel sum
as one truncated lattice convolution (FFT), reading w(m + 1) past the box
through the slope-a linear extension.

Argmax ties resolve as Switch > NoAction > PayDiv(1) > ... > PayDiv(n) so
region maps are deterministic.  The tie window is 1e-6 of the local value
scale: past the merged-company barrier the actions coincide exactly up to
the obstacle table's interpolation sag (~h^2/8 of its curvature), and a
window below that sag would read the noise as strict preference and shred
the region maps.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft

from . import _kernels
from .errors import DomainError, NumericsError
from .grid import GridSpec, clamp_extrapolate, to_point
from .model import ModelSpec, eval_obstacle, eval_obstacle_batch, validate_growth_on_box

# action codes in a policy field
SWITCH = -2
NO_ACTION = -1
# lump payment on axis i is encoded as the integer i (0-based)

TIE_TOL = 1e-6


def action_label(code: int) -> str:
    if code == SWITCH:
        return "switch"
    if code == NO_ACTION:
        return "none"
    return f"div{code + 1}"


def action_code(label: str) -> int:
    if label == "switch":
        return SWITCH
    if label == "none":
        return NO_ACTION
    if label.startswith("div"):
        return int(label[3:]) - 1
    raise DomainError(f"unknown action label {label!r}")


@dataclass
class ValueField:
    """Real-valued function on the truncated lattice."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.shape:
            raise DomainError(f"field shape {self.data.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DomainError("value field has non-finite entries")

    def at(self, m) -> float:
        return float(self.data[tuple(np.asarray(m))])


@dataclass
class CoefficientTable:
    """Precomputed T0 data for one (model, grid) pair.

    `kappa` is the offset kernel (a1(k, m) = kappa[m - k]); tables loaded
    from the binary cache carry explicit per-node sparse rows instead.
    """

    grid: GridSpec
    discount: float
    weights: tuple[float, ...]
    pay: np.ndarray               # delta * a_i * p_i per axis
    a2: np.ndarray
    obstacle_arr: np.ndarray
    kappa: Optional[np.ndarray] = None
    ruin: Optional[np.ndarray] = None
    # explicit representation (cache loads)
    row_ptr: Optional[np.ndarray] = None
    row_idx: Optional[np.ndarray] = None
    row_val: Optional[np.ndarray] = None
    _khat: Optional[np.ndarray] = field(default=None, repr=False)
    _pad: Optional[tuple[int, ...]] = field(default=None, repr=False)
    _nz: Optional[list] = field(default=None, repr=False)
    _csr: object = field(default=None, repr=False)

    def mass_bound(self, model: ModelSpec) -> float:
        K = model.c + model.lam
        return model.lam / K * -np.expm1(-K * self.grid.delta) if model.lam > 0 else 0.0

    def jump_mass(self) -> np.ndarray:
        """sum_k a1(k, m) per node (cumulative kernel mass)."""
        if self.kappa is not None:
            out = self.kappa.copy()
            for ax in range(out.ndim):
                np.cumsum(out, axis=ax, out=out)
            return out
        return self.jump_sum(np.ones(self.grid.shape))

    def _kernel_nonzeros(self):
        if self._nz is None:
            idx = np.argwhere(self.kappa != 0.0)
            self._nz = [(tuple(r), float(self.kappa[tuple(r)])) for r in idx]
        return self._nz

    def rows(self, m):
        """Sparse row of a1 coefficients at node m as [(k, a1), ...]."""
        m = tuple(int(v) for v in m)
        if self.kappa is not None:
            out = []
            for r, val in self._kernel_nonzeros():
                if all(ri <= mi for ri, mi in zip(r, m)):
                    out.append((tuple(mi - ri for ri, mi in zip(r, m)), val))
            return out
        flat = int(np.ravel_multi_index(m, self.grid.shape))
        lo, hi = self.row_ptr[flat], self.row_ptr[flat + 1]
        return [
            (tuple(int(v) for v in np.unravel_index(self.row_idx[i], self.grid.shape)), float(self.row_val[i]))
            for i in range(lo, hi)
        ]

    def jump_sum(self, w: np.ndarray, workers: int = 1) -> np.ndarray:
        """sum_{k <= m} a1(k, m) w(k) for every node, via lattice convolution."""
        if self.kappa is not None:
            if self._khat is None:
                shape = self.grid.shape
                self._pad = tuple(
                    scipy.fft.next_fast_len(2 * s - 1, real=True) for s in shape
                )
                self._khat = scipy.fft.rfftn(self.kappa, self._pad, workers=workers)
            what = scipy.fft.rfftn(w, self._pad, workers=workers)
            conv = scipy.fft.irfftn(what * self._khat, self._pad, workers=workers)
            return conv[tuple(slice(0, s) for s in self.grid.shape)]
        if self._csr is None:
            from scipy.sparse import csr_matrix

            count = self.grid.node_count
            self._csr = csr_matrix(
                (self.row_val, self.row_idx, self.row_ptr), shape=(count, count)
            )
        return (self._csr @ w.reshape(-1)).reshape(self.grid.shape)


def precompute_coeffs(model: ModelSpec, grid: GridSpec) -> CoefficientTable:
    """Build the coefficient table; validates positivity and the mass bound."""
    if model.n != grid.n or tuple(model.p) != grid.premiums:
        raise DomainError("grid premiums must match the model's premium vector")
    validate_growth_on_box(model, grid)
    kappa, ov, rint, ruin = _kernels.build_tables(model, grid)
    neg = kappa.min() if kappa.size else 0.0
    if neg < -1e-12:
        raise NumericsError(f"negative jump coefficient {neg}")
    np.clip(kappa, 0.0, None, out=kappa)
    a2 = _cumulate(ov) - rint
    table = CoefficientTable(
        grid=grid,
        discount=float(np.exp(-(model.c + model.lam) * grid.delta)),
        weights=model.a,
        pay=(np.asarray(model.a) * np.asarray(model.p)) * grid.delta,
        a2=a2,
        obstacle_arr=_obstacle_array(model, grid),
        kappa=kappa,
        ruin=ruin,
    )
    bound = table.mass_bound(model)
    excess = table.jump_mass().max() - bound if model.lam > 0 else 0.0
    if excess > 1e-12:
        raise NumericsError(f"jump mass exceeds the discounted bound by {excess}")
    return table


def _cumulate(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    for ax in range(out.ndim):
        np.cumsum(out, axis=ax, out=out)
    return out


def _obstacle_array(model: ModelSpec, grid: GridSpec) -> np.ndarray:
    mesh = np.stack(
        np.meshgrid(*(grid.axis_points(i) for i in range(grid.n)), indexing="ij"), axis=-1
    )
    return eval_obstacle_batch(model.obstacle, mesh)


# ---------------------------------------------------------------------------
# operator applications
# ---------------------------------------------------------------------------


def apply_T0(coeffs: CoefficientTable, w: ValueField, m) -> float:
    """Wait one step: discounted drift read plus jump sum plus a2."""
    m = np.asarray(m, dtype=np.int64)
    up = clamp_extrapolate(coeffs.grid, w, coeffs.weights, m + 1)
    acc = coeffs.discount * up
    for k, a1 in coeffs.rows(m):
        acc += a1 * w.data[k]
    return float(acc + coeffs.a2[tuple(m)])


def apply_Ti(model: ModelSpec, w: ValueField, m, i: int) -> float:
    """Lump payment on axis i; -inf marks the inapplicable m_i = 0 case."""
    m = np.asarray(m, dtype=np.int64)
    if m[i] == 0:
        return -np.inf
    shifted = m.copy()
    shifted[i] -= 1
    return float(w.data[tuple(shifted)] + model.a[i] * model.p[i] * w.grid.delta)


def apply_Ts(model: ModelSpec, grid: GridSpec, m) -> float:
    """Immediate switch: the obstacle at the node, independent of the field."""
    return eval_obstacle(model.obstacle, to_point(grid, np.asarray(m)))


def apply_T(coeffs: CoefficientTable, model: ModelSpec, grid: GridSpec, w: ValueField, m):
    """(max value, argmax action) under the fixed tie-break order."""
    vals = [apply_Ts(model, grid, m), apply_T0(coeffs, w, m)]
    codes = [SWITCH, NO_ACTION]
    for i in range(model.n):
        vals.append(apply_Ti(model, w, m, i))
        codes.append(i)
    best = max(vals)
    tol = TIE_TOL * max(1.0, abs(best))
    for v, code in zip(vals, codes):
        if v >= best - tol:
            return best, code
    raise AssertionError("unreachable")


def shift_up_extended(grid: GridSpec, w: np.ndarray, weights) -> np.ndarray:
    """out[m] = w[m + 1], slope-a extended where m + 1 leaves the box."""
    out = np.pad(w, [(0, 1)] * grid.n, mode="edge")
    pay = (np.asarray(weights) * np.asarray(grid.premiums)) * grid.delta
    for i in range(grid.n):
        sl = [slice(None)] * grid.n
        sl[i] = -1
        out[tuple(sl)] += pay[i]
    return out[tuple(slice(1, None) for _ in range(grid.n))]


def apply_T_field(
    coeffs: CoefficientTable,
    w: np.ndarray,
    *,
    want_actions: bool = False,
    workers: int = 1,
):
    """One Jacobi sweep: T(w) at every node, optionally with argmax actions."""
    grid = coeffs.grid
    t0 = (
        coeffs.discount * shift_up_extended(grid, w, coeffs.weights)
        + coeffs.jump_sum(w, workers=workers)
        + coeffs.a2
    )
    ts = coeffs.obstacle_arr
    best = np.maximum(t0, ts)
    ti_list = []
    for i in range(grid.n):
        ti = np.full(grid.shape, -np.inf)
        src = [slice(None)] * grid.n
        dst = [slice(None)] * grid.n
        src[i] = slice(0, -1)
        dst[i] = slice(1, None)
        ti[tuple(dst)] = w[tuple(src)] + coeffs.pay[i]
        ti_list.append(ti)
        np.maximum(best, ti, out=best)
    if not want_actions:
        return best, None
    tol = TIE_TOL * np.maximum(1.0, np.abs(best))
    actions = np.full(grid.shape, NO_ACTION, dtype=np.int8)
    for i in range(grid.n - 1, -1, -1):
        actions[ti_list[i] >= best - tol] = i
    actions[t0 >= best - tol] = NO_ACTION
    actions[ts >= best - tol] = SWITCH
    return best, actions


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

_MAGIC = b"DSC1"


def config_key(payload: bytes) -> bytes:
    """32-byte content hash used to key coefficient caches."""
    return hashlib.sha256(payload).digest()


def save_coeffs(table: CoefficientTable, path, key: bytes) -> None:
    """Header (version, n, m_max, delta, hash) + per-node rows (count, entries, a2)."""
    if len(key) != 32:
        raise DomainError("cache key must be a 32-byte digest")
    grid = table.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, grid.n))
        fh.write(struct.pack(f"<{grid.n}Q", *grid.m_max))
        fh.write(struct.pack("<d", grid.delta))
        fh.write(key)
        a2 = table.a2.reshape(-1)
        for flat, m in enumerate(np.ndindex(*grid.shape)):
            rows = table.rows(m)
            fh.write(struct.pack("<Q", len(rows)))
            for k, val in rows:
                fh.write(struct.pack(f"<{grid.n}Q", *k))
                fh.write(struct.pack("<d", val))
            fh.write(struct.pack("<d", a2[flat]))


def load_coeffs(path, model: ModelSpec, grid: GridSpec, key: bytes) -> CoefficientTable:
    """Rebuild a table with explicit sparse rows; validates the header against inputs."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DomainError(f"{path} is not a coefficient cache")
        version, n = struct.unpack("<II", fh.read(8))
        if version != 1 or n != grid.n:
            raise DomainError("cache version/dimension mismatch")
        m_max = struct.unpack(f"<{n}Q", fh.read(8 * n))
        (delta,) = struct.unpack("<d", fh.read(8))
        stored = fh.read(32)
        if tuple(m_max) != grid.m_max or delta != grid.delta:
            raise DomainError("cache grid does not match the requested grid")
        if stored != key:
            raise DomainError("cache content hash does not match the configuration")
        count = grid.node_count
        row_ptr = np.zeros(count + 1, dtype=np.int64)
        idx_chunks = []
        val_chunks = []
        a2 = np.empty(count)
        for flat in range(count):
            (rows,) = struct.unpack("<Q", fh.read(8))
            row_ptr[flat + 1] = row_ptr[flat] + rows
            if rows:
                raw = np.frombuffer(fh.read(rows * (8 * n + 8)), dtype=np.uint8)
                rec = raw.reshape(rows, 8 * n + 8)
                ks = rec[:, : 8 * n].copy().view("<u8").reshape(rows, n)
                vals = rec[:, 8 * n :].copy().view("<f8").reshape(rows)
                idx_chunks.append(np.ravel_multi_index(ks.T.astype(np.int64), grid.shape))
                val_chunks.append(vals.astype(float))
            (a2[flat],) = struct.unpack("<d", fh.read(8))
    row_idx = np.concatenate(idx_chunks) if idx_chunks else np.zeros(0, dtype=np.int64)
    row_val = np.concatenate(val_chunks) if val_chunks else np.zeros(0)
    return CoefficientTable(
        grid=grid,
        discount=float(np.exp(-(model.c + model.lam) * grid.delta)),
        weights=model.a,
        pay=(np.asarray(model.a) * np.asarray(model.p)) * grid.delta,
        a2=a2.reshape(grid.shape),
        obstacle_arr=_obstacle_array(model, grid),
        kappa=None,
        row_ptr=row_ptr,
        row_idx=row_idx,
        row_val=row_val,
    )

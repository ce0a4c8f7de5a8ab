"""Exact per-node integrals behind the one-step operator's coefficient table.

For a node m, pre-jump surplus y(t) = g(m) + t*p, a claim beta from source l
lands the snapped surplus at index k = m - r.  The jump weight of offset r is

    kappa[r] = lam_l * int_0^delta e^{-(c+lam) t} P( beta in I_r(t) ) dt,

where I_r(t) is the beta-interval mapping onto cell k, and the companion
overshoot integral ov[r] collects the discounted dividends a . (y - beta a_l
- g(k)) paid to snap down.  Both depend on m only through r = m - k, so the
whole table is an offset kernel; boundary truncation (r <= m) is applied by
the consumer.  Per node we also need

    rint[m] = int_0^delta e^{-(c+lam) t} R(y(t)) dt,
    ruin[m] = lam_l-weighted discounted mass of ruinous jumps,

and the exact total-probability identity

    sum_{r <= m} kappa[r] + ruin[m] = (lam/(c+lam)) (1 - e^{-(c+lam) delta})

holds to machine precision because the per-cell masses telescope.

Axis-concentrated sources (a unit allocation column) with exponential or
atomic marginals integrate in closed form.  General allocations reduce to
piecewise closed forms by splitting [0, delta] where the affine interval
envelopes max_i lo_i(t) and min_i hi_i(t) cross each other or zero.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .errors import NumericsError
from .grid import GridSpec
from .model import (
    ConstantPenalty,
    DeficitPenalty,
    Exponential,
    ModelSpec,
    PiecewiseEmpirical,
    SurvivorPenalty,
    ValueTable1D,
    ZeroPenalty,
    eval_R,
)

_GL_NODES = {q: np.polynomial.legendre.leggauss(q) for q in (16, 32, 64, 128, 256)}


def _e0(k: float, u, v):
    """int_u^v e^{-k t} dt for k > 0 (vector-safe in u, v)."""
    return (np.exp(-k * np.asarray(u)) - np.exp(-k * np.asarray(v))) / k


def _e1(k: float, u, v):
    """int_u^v t e^{-k t} dt for k > 0."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return ((u / k + 1.0 / k**2) * np.exp(-k * u)) - ((v / k + 1.0 / k**2) * np.exp(-k * v))


def build_tables(model: ModelSpec, grid: GridSpec):
    """Return (kappa, ov, rint, ruin) dense arrays over grid.shape."""
    shape = grid.shape
    K = model.c + model.lam
    kappa = np.zeros(shape)
    ov = np.zeros(shape)
    ruin = np.zeros(shape)
    ruin_per_source = []
    for s in model.claims.sources:
        ax = s.axis()
        if ax is not None:
            kq, ovq, ruinq = _axis_source(model, grid, s, ax, K)
            sl = tuple(slice(None) if i == ax else 0 for i in range(model.n))
            kappa[sl] += kq
            ov[sl] += ovq
            bshape = tuple(-1 if i == ax else 1 for i in range(model.n))
            ruin_l = np.broadcast_to(ruinq.reshape(bshape), shape)
        else:
            kg, ovg, ruin_l = _general_source(model, grid, s, K)
            kappa += kg
            ov += ovg
        ruin += ruin_l
        ruin_per_source.append(ruin_l)
    rint = _build_rint(model, grid, K, ruin, ruin_per_source)
    return kappa, ov, rint, ruin


# ---------------------------------------------------------------------------
# axis-concentrated sources
# ---------------------------------------------------------------------------


def _axis_source(model: ModelSpec, grid: GridSpec, source, j: int, K: float):
    """Offset kernels kappa[q], ov[q] along axis j plus the ruin-mass vector."""
    lam_l = source.intensity
    delta = grid.delta
    P = model.p[j]
    aj = model.a[j]
    a_oth = float(np.dot(model.a, model.p)) - aj * P
    Q = grid.m_max[j]
    q = np.arange(Q + 1)
    marg = source.marginal

    if isinstance(marg, Exponential):
        d = marg.rate
        D = d * P
        I0 = _e0(K, 0.0, delta)
        I1 = _e1(K, 0.0, delta)
        J0 = _e0(K + D, 0.0, delta)
        J1 = _e1(K + D, 0.0, delta)
        head = np.exp(-D * delta * q)        # head[q] = e^{-D delta q}
        drop = head[:-1] - head[1:] if Q >= 1 else np.zeros(0)

        kq = np.empty(Q + 1)
        kq[0] = lam_l * (I0 - J0)
        kq[1:] = lam_l * drop * J0

        ovq = np.empty(Q + 1)
        ovq[0] = lam_l * ((a_oth + aj * P) * I1 - (aj / d) * I0 - a_oth * J1 + (aj / d) * J0)
        ovq[1:] = lam_l * (a_oth * drop * J1 + (aj * delta * P * head[:-1] - aj * drop / d) * J0)

        ruinq = lam_l * head * J0
        return kq, ovq, ruinq

    # atomic marginal: per atom b, offset q receives it while t is in
    # [b/P - q delta, b/P - (q-1) delta) clipped to [0, delta]
    atoms = np.asarray(marg.atoms)
    probs = np.asarray(marg.probs)
    s_over = atoms / P
    t0 = np.clip(s_over[None, :] - q[:, None] * delta, 0.0, delta)
    t1 = np.clip(s_over[None, :] - (q[:, None] - 1) * delta, 0.0, delta)
    g0 = np.where(t1 > t0, _e0(K, t0, t1), 0.0)
    g1 = np.where(t1 > t0, _e1(K, t0, t1), 0.0)
    kq = lam_l * (g0 * probs[None, :]).sum(axis=1)
    # overshoot integrand per atom: a_oth*t + aj*((q delta + t) P - b)
    lump = (a_oth + aj * P) * g1 + (aj * (q[:, None] * delta * P - atoms[None, :])) * g0
    ovq = lam_l * (lump * probs[None, :]).sum(axis=1)
    # ruin while t < b/P - m_j delta
    tr = np.clip(s_over[None, :] - q[:, None] * delta, 0.0, delta)
    ruinq = lam_l * (np.where(tr > 0, _e0(K, 0.0, tr), 0.0) * probs[None, :]).sum(axis=1)
    return kq, ovq, ruinq


# ---------------------------------------------------------------------------
# general allocation columns
# ---------------------------------------------------------------------------


def _piece_breaks(lines, delta):
    """Sorted breakpoints in [0, delta]: pairwise crossings and zero crossings."""
    pts = {0.0, delta}
    for (b1, s1), (b2, s2) in combinations(lines, 2):
        if s1 != s2:
            t = (b2 - b1) / (s1 - s2)
            if 0.0 < t < delta:
                pts.add(t)
    for b, s in lines:
        if s != 0.0:
            t = -b / s
            if 0.0 < t < delta:
                pts.add(t)
    return sorted(pts)


def _interval_envelope(r, active, alloc, p, delta):
    """Affine families lo_i(t), hi_i(t) of the beta-interval for offset r."""
    lo = [(((r[i] - 1) * delta) * p[i] / alloc[i], p[i] / alloc[i]) for i in active]
    hi = [((r[i] * delta) * p[i] / alloc[i], p[i] / alloc[i]) for i in active]
    return lo, hi


def _general_source(model: ModelSpec, grid: GridSpec, source, K: float):
    """Kernels for a source whose allocation spreads over several coordinates."""
    n = model.n
    alloc = np.asarray(source.allocation)
    active = [i for i in range(n) if alloc[i] > 0]
    inactive = [i for i in range(n) if alloc[i] == 0]
    delta = grid.delta
    p = np.asarray(model.p)
    a = np.asarray(model.a)
    W = float(np.dot(a, alloc))
    C1 = float(np.dot(a, p))
    lam_l = source.intensity

    kappa = np.zeros(grid.shape)
    ov = np.zeros(grid.shape)

    # BFS over reachable offsets: a staircase along the ray direction.  Steps
    # between consecutive populated cells live in {0,1}^active (multi-axis
    # steps occur when cell crossings align exactly), so expanding every
    # valid cell over that binary box covers the whole staircase.
    from collections import deque
    from itertools import product

    steps = [
        eps
        for eps in product((0, 1), repeat=len(active))
        if any(eps)
    ]
    seen = set()
    queue = deque([tuple(0 for _ in range(n))])
    seen.add(queue[0])
    while queue:
        r = queue.popleft()
        k_val, ov_val = _offset_integrals(r, active, alloc, p, a, delta, K, source, C1, W)
        if k_val <= 0.0:
            continue
        kappa[r] += lam_l * k_val
        ov[r] += lam_l * ov_val
        for eps in steps:
            nxt = list(r)
            ok = True
            for i, e in zip(active, eps):
                nxt[i] += e
                if nxt[i] > grid.m_max[i]:
                    ok = False
                    break
            nxt = tuple(nxt)
            if ok and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    del inactive

    ruin = _general_ruin(model, grid, source, K)
    return kappa, ov, ruin


def _offset_integrals(r, active, alloc, p, a, delta, K, source, C1, W):
    """(mass, overshoot) integrals for one offset r of a general source."""
    lo, hi = _interval_envelope(r, active, alloc, p, delta)
    C0 = float(np.dot(a, (np.asarray(r) * delta) * p))
    marg = source.marginal
    breaks = _piece_breaks(lo + hi, delta)
    k_acc = 0.0
    ov_acc = 0.0
    for u, v in zip(breaks[:-1], breaks[1:]):
        if v - u <= 1e-15:
            continue
        tm = 0.5 * (u + v)
        lo_vals = [(b + s * tm, b, s) for b, s in lo]
        hi_vals = [(b + s * tm, b, s) for b, s in hi]
        l_val, l0, l1 = max(lo_vals)
        h_val, h0, h1 = min(hi_vals)
        if l_val < 0.0:
            l0, l1 = 0.0, 0.0
            l_val = 0.0
        if h_val <= l_val:
            # the envelopes may still cross inside (u, v); split once more
            if h_val - l_val < 0 and _cross_inside(l0, l1, h0, h1, u, v):
                for uu, vv in _split_at_cross(l0, l1, h0, h1, u, v):
                    kk, oo = _piece_mass(marg, K, uu, vv, l0, l1, h0, h1, C0, C1, W)
                    k_acc += kk
                    ov_acc += oo
            continue
        if _cross_inside(l0, l1, h0, h1, u, v):
            for uu, vv in _split_at_cross(l0, l1, h0, h1, u, v):
                kk, oo = _piece_mass(marg, K, uu, vv, l0, l1, h0, h1, C0, C1, W)
                k_acc += kk
                ov_acc += oo
        else:
            kk, oo = _piece_mass(marg, K, u, v, l0, l1, h0, h1, C0, C1, W)
            k_acc += kk
            ov_acc += oo
    return k_acc, ov_acc


def _cross_inside(l0, l1, h0, h1, u, v):
    du = (h0 - l0) + (h1 - l1) * u
    dv = (h0 - l0) + (h1 - l1) * v
    return (du > 0) != (dv > 0)


def _split_at_cross(l0, l1, h0, h1, u, v):
    t = (l0 - h0) / (h1 - l1)
    pieces = []
    for uu, vv in ((u, t), (t, v)):
        mid = 0.5 * (uu + vv)
        if vv > uu and (h0 - l0) + (h1 - l1) * mid > 0:
            pieces.append((uu, vv))
    return pieces


def _piece_mass(marg, K, u, v, l0, l1, h0, h1, C0, C1, W):
    """Closed-form (mass, overshoot) on a piece with affine LO/HI envelopes."""
    if isinstance(marg, Exponential):
        d = marg.rate
        # mass: e^{-d LO} - e^{-d HI}, each times e^{-K t}
        m = math.exp(-d * l0) * float(_e0(K + d * l1, u, v)) - math.exp(-d * h0) * float(
            _e0(K + d * h1, u, v)
        )
        # overshoot: (C0 + C1 t)(F(HI)-F(LO)) - W * int_LO^HI beta dF
        # with int beta dF = (LO + 1/d) e^{-d LO} - (HI + 1/d) e^{-d HI}
        cl0 = C0 - W * (l0 + 1.0 / d)
        cl1 = C1 - W * l1
        ch0 = C0 - W * (h0 + 1.0 / d)
        ch1 = C1 - W * h1
        o = math.exp(-d * l0) * (cl0 * float(_e0(K + d * l1, u, v)) + cl1 * float(_e1(K + d * l1, u, v)))
        o -= math.exp(-d * h0) * (ch0 * float(_e0(K + d * h1, u, v)) + ch1 * float(_e1(K + d * h1, u, v)))
        return m, o
    # atoms: b is inside (LO(t), HI(t)] over a t-window solvable per atom
    m_acc = 0.0
    o_acc = 0.0
    for b, w in zip(marg.atoms, marg.probs):
        # LO(t) < b: l0 + l1 t < b ; HI(t) >= b: h0 + h1 t >= b
        t_lo = u if l1 == 0.0 else None
        if l1 > 0:
            t_hi_lo = (b - l0) / l1  # LO(t) < b for t < this
            w_hi = min(v, t_hi_lo)
        else:
            w_hi = v if l0 < b else u
        if h1 > 0:
            t_lo_hi = (b - h0) / h1  # HI(t) >= b for t >= this
            w_lo = max(u, t_lo_hi)
        else:
            w_lo = u if h0 >= b else v
        lo_t = max(u, w_lo) if t_lo is None else max(t_lo, w_lo)
        hi_t = min(v, w_hi)
        if hi_t > lo_t:
            g0 = float(_e0(K, lo_t, hi_t))
            g1 = float(_e1(K, lo_t, hi_t))
            m_acc += w * g0
            o_acc += w * ((C0 - W * b) * g0 + C1 * g1)
    return m_acc, o_acc


def _general_ruin(model: ModelSpec, grid: GridSpec, source, K: float):
    """Discounted ruin mass per node for a general source (piecewise exact)."""
    alloc = np.asarray(source.allocation)
    active = [i for i in range(model.n) if alloc[i] > 0]
    p = np.asarray(model.p)
    delta = grid.delta
    marg = source.marginal
    lam_l = source.intensity
    out = np.zeros(grid.shape)
    for m in np.ndindex(*grid.shape):
        lines = [((m[i] * delta) * p[i] / alloc[i], p[i] / alloc[i]) for i in active]
        acc = 0.0
        for u, v in zip(*_break_pairs(lines, delta)):
            if v - u <= 1e-15:
                continue
            tm = 0.5 * (u + v)
            b0, b1 = min(((b + s * tm, b, s) for b, s in lines))[1:]
            if isinstance(marg, Exponential):
                d = marg.rate
                acc += math.exp(-d * b0) * float(_e0(K + d * b1, u, v))
            else:
                for b, w in zip(marg.atoms, marg.probs):
                    # ruin while B(t) < b: b0 + b1 t < b
                    hi_t = v if b1 == 0 else min(v, (b - b0) / b1)
                    if hi_t > u and b0 + b1 * u < b:
                        acc += w * float(_e0(K, u, hi_t))
        out[m] = lam_l * acc
    return out


def _break_pairs(lines, delta):
    pts = _piece_breaks(lines, delta)
    return pts[:-1], pts[1:]


# ---------------------------------------------------------------------------
# discounted ruin-penalty integral rint[m]
# ---------------------------------------------------------------------------


def _build_rint(model: ModelSpec, grid: GridSpec, K: float, ruin, ruin_per_source):
    pen = model.penalty
    if isinstance(pen, ZeroPenalty):
        return np.zeros(grid.shape)
    if isinstance(pen, ConstantPenalty):
        return pen.value * ruin
    if isinstance(pen, SurvivorPenalty) and model.n == 2 and model.claims.axis_only():
        return _survivor_rint(model, grid, K)
    if isinstance(pen, DeficitPenalty) and model.claims.axis_only():
        out = np.zeros(grid.shape)
        ok = True
        for l, s in enumerate(model.claims.sources):
            if isinstance(s.marginal, Exponential):
                # memorylessness: E[f(beta - thr); beta > thr] = tail * E[f(Exp(d))]
                from .model import _ray_expectation

                m_l = _ray_expectation(s.marginal, pen.per_source[l])
                out += m_l * ruin_per_source[l]
            else:
                ok = False
                break
        if ok:
            return out
    return _generic_rint(model, grid, K)


def _survivor_rint(model: ModelSpec, grid: GridSpec, K: float):
    """Exact rint for the two-company survivor reward with axis sources."""
    pen = model.penalty
    delta = grid.delta
    out = np.zeros(grid.shape)
    for s in model.claims.sources:
        j = s.axis()
        o = 1 - j
        table = pen.tables[o]
        po = model.p[o]
        mo = np.arange(grid.m_max[o] + 1)
        mj = np.arange(grid.m_max[j] + 1)
        if isinstance(s.marginal, Exponential):
            D = s.marginal.rate * model.p[j]
            head = np.exp(-D * delta * mj)
            q_vec = np.array(
                [
                    _exp_table_integral(K + D, 0.0, delta, table, (m * delta) * po, po)
                    for m in mo
                ]
            )
            contrib = -s.intensity * (
                np.outer(head, q_vec) if j == 0 else np.outer(q_vec, head)
            )
        else:
            atoms = np.asarray(s.marginal.atoms)
            probs = np.asarray(s.marginal.probs)
            pj = model.p[j]
            grid_block = np.zeros((len(mj), len(mo)))
            for b, w in zip(atoms, probs):
                t_end = np.clip(b / pj - mj * delta, 0.0, delta)
                for jj, te in enumerate(t_end):
                    if te <= 0:
                        continue
                    for oo in mo:
                        grid_block[jj, oo] += w * _exp_table_integral(
                            K, 0.0, te, table, (oo * delta) * po, po
                        )
            contrib = -s.intensity * (grid_block if j == 0 else grid_block.T)
        out += contrib
    return out


def _exp_table_integral(k: float, t0: float, t1: float, table: ValueTable1D, base, slope):
    """int_{t0}^{t1} e^{-k t} V(base + slope t) dt, exact for piecewise-linear V."""
    if t1 <= t0:
        return 0.0
    xs = np.asarray(table.xs)
    vs = np.asarray(table.vs)
    # knot crossings in (t0, t1)
    cross = (xs - base) / slope
    pts = [t0] + [float(t) for t in cross if t0 < t < t1] + [t1]
    pts = sorted(set(pts))
    acc = 0.0
    for u, v in zip(pts[:-1], pts[1:]):
        ym = base + slope * 0.5 * (u + v)
        if ym >= xs[-1]:
            gamma = table.tail_slope
            alpha = vs[-1] - gamma * xs[-1]
        else:
            i = int(np.searchsorted(xs, ym, side="right") - 1)
            i = max(i, 0)
            gamma = (vs[i + 1] - vs[i]) / (xs[i + 1] - xs[i])
            alpha = vs[i] - gamma * xs[i]
        c0 = alpha + gamma * base
        c1 = gamma * slope
        acc += c0 * float(_e0(k, u, v)) + c1 * float(_e1(k, u, v))
    return acc


def _generic_rint(model: ModelSpec, grid: GridSpec, K: float):
    """Per-node adaptive Gauss-Legendre of t -> e^{-K t} R(y(t)) with hint splits."""
    delta = grid.delta
    p = np.asarray(model.p)
    out = np.zeros(grid.shape)
    for m in np.ndindex(*grid.shape):
        base = (np.asarray(m) * delta) * p
        hints = _rint_hints(model, grid, m)

        def f(t):
            return math.exp(-K * t) * eval_R(model, base + t * p)

        out[m] = _adaptive_pieces(f, 0.0, delta, hints, node=m)
    return out


def _rint_hints(model: ModelSpec, grid: GridSpec, m):
    """Breakpoints of the R integrand: atom and table-knot crossings."""
    hints = set()
    delta = grid.delta
    pen = model.penalty
    for s in model.claims.sources:
        if isinstance(s.marginal, PiecewiseEmpirical):
            alloc = np.asarray(s.allocation)
            for i in np.nonzero(alloc)[0]:
                for b in s.marginal.atoms:
                    t = b * alloc[i] / model.p[i] - m[i] * delta
                    if 0.0 < t < delta:
                        hints.add(float(t))
    if isinstance(pen, SurvivorPenalty):
        for i, table in enumerate(pen.tables):
            o = 1 - i
            for knot in table.xs:
                t = knot / model.p[o] - m[o] * delta
                if 0.0 < t < delta:
                    hints.add(float(t))
    return sorted(hints)


def _adaptive_pieces(f, t0, t1, hints, node, rtol=1e-12):
    pts = [t0] + [h for h in hints if t0 < h < t1] + [t1]
    acc = 0.0
    for u, v in zip(pts[:-1], pts[1:]):
        acc += _adaptive_gl(f, u, v, node, rtol)
    return acc


def _adaptive_gl(f, u, v, node, rtol):
    if v <= u:
        return 0.0
    prev = None
    for q in (16, 32, 64, 128, 256):
        nodes, weights = _GL_NODES[q]
        mid, half = 0.5 * (u + v), 0.5 * (v - u)
        val = half * float(np.dot(weights, [f(mid + half * x) for x in nodes]))
        if prev is not None and abs(val - prev) <= rtol * max(1.0, abs(val)):
            return val
        prev = val
    raise NumericsError(f"quadrature did not converge for the R integral at node {node}")

"""Problem instance: claims, ruin penalty, switch obstacle, model functions.

The surplus of n companies is an n-dimensional compound Poisson process with
drift built from m independent one-dimensional sources: source l arrives with
intensity lam_l, draws a size beta from its marginal, and company i absorbs
the share a_il (allocation column a_l, entries >= 0 summing to 1).  The joint
claim distribution is

    F(x) = sum_l (lam_l / lam) F_l( min_{i: a_il != 0} x_i / a_il ),
    lam = sum_l lam_l.

At the ruin time the shareholders pay upsilon(x, alpha) (negative values are
rewards), a function on B = {(x, alpha): x - alpha not in R_+^n}.  The switch
obstacle f gives the value collected on an immediate irreversible switch.
This module also evaluates the ruin integral

    R(x) = lam * integral over {x - alpha not in R_+^n} of upsilon(x, alpha) dF(alpha)

and the exponential growth gauge h0(x) = exp((c/2n) * sum_i x_i / p_i).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError, NumericsError

_ALLOC_TOL = 1e-9


# ---------------------------------------------------------------------------
# one-dimensional value tables (CSV-backed knots, linear interpolation)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueTable1D:
    """Piecewise-linear table with a linear slope extension past the last knot."""

    xs: tuple[float, ...]
    vs: tuple[float, ...]
    tail_slope: float

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vs = np.asarray(self.vs, dtype=float)
        if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 2:
            raise DomainError("value table needs >= 2 knots with matching values")
        if np.any(np.diff(xs) <= 0):
            raise DomainError("value table knots must be strictly increasing")
        if not np.all(np.isfinite(vs)):
            raise DomainError("value table has non-finite entries")
        object.__setattr__(self, "xs", tuple(float(v) for v in xs))
        object.__setattr__(self, "vs", tuple(float(v) for v in vs))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.xs[0] - 1e-12):
            raise DomainError(f"table evaluated below first knot {self.xs[0]}")
        inside = np.interp(np.minimum(x, self.xs[-1]), self.xs, self.vs)
        tail = self.vs[-1] + self.tail_slope * (x - self.xs[-1])
        out = np.where(x > self.xs[-1], tail, inside)
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def from_csv(path, tail_slope: Optional[float] = None) -> "ValueTable1D":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        xs, vs = data[:, 0], data[:, 1]
        if tail_slope is None:
            tail_slope = (vs[-1] - vs[-2]) / (xs[-1] - xs[-2])
        return ValueTable1D(tuple(xs), tuple(vs), float(tail_slope))

    def to_csv(self, path):
        with open(path, "w") as fh:
            for x, v in zip(self.xs, self.vs):
                fh.write(f"{x!r},{v!r}\n")


# ---------------------------------------------------------------------------
# claim marginals and sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """Exponential claim size with rate d > 0 (mean 1/d); no mass at 0."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"exponential rate must be positive, got {self.rate}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return 1.0 / self.rate

    def sample(self, rng, size):
        return rng.standard_exponential(size) / self.rate


@dataclass(frozen=True)
class PiecewiseEmpirical:
    """Finite atom distribution on (0, inf): sorted support with probabilities."""

    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 1 or atoms.shape != probs.shape or atoms.size == 0:
            raise DomainError("empirical marginal needs matching atoms/probs")
        if np.any(atoms <= 0):
            raise DomainError("empirical atoms must be strictly positive (no mass at 0)")
        if np.any(np.diff(atoms) <= 0):
            raise DomainError("empirical atoms must be strictly increasing")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise DomainError("empirical probabilities must be positive and sum to 1")
        object.__setattr__(self, "atoms", tuple(float(v) for v in atoms))
        object.__setattr__(self, "probs", tuple(float(v) for v in probs))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.probs)])
        out = cum[np.searchsorted(self.atoms, x, side="right")]
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.probs))

    def sample(self, rng, size):
        return np.asarray(self.atoms)[rng.choice(len(self.atoms), size=size, p=self.probs)]


Marginal = Union[Exponential, PiecewiseEmpirical]


@dataclass(frozen=True)
class ClaimSource:
    """One independent compound Poisson source with its allocation column."""

    intensity: float
    allocation: tuple[float, ...]
    marginal: Marginal

    def __post_init__(self):
        if not self.intensity > 0:
            raise DomainError(f"source intensity must be positive, got {self.intensity}")
        alloc = np.asarray(self.allocation, dtype=float)
        if np.any(alloc < 0):
            raise DomainError(f"allocation entries must be >= 0, got {self.allocation}")
        if abs(alloc.sum() - 1.0) > _ALLOC_TOL:
            raise DomainError(f"allocation must sum to 1, got sum {alloc.sum()}")
        object.__setattr__(self, "allocation", tuple(float(v) for v in alloc))

    def axis(self) -> Optional[int]:
        """Axis index if the allocation is a unit vector, else None."""
        alloc = np.asarray(self.allocation)
        active = np.nonzero(alloc)[0]
        if len(active) == 1 and abs(alloc[active[0]] - 1.0) <= _ALLOC_TOL:
            return int(active[0])
        return None


@dataclass(frozen=True)
class ClaimModel:
    """All claim sources.  Empty tuple is the degenerate no-claims model."""

    sources: tuple[ClaimSource, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        dims = {len(s.allocation) for s in self.sources}
        if len(dims) > 1:
            raise DomainError("sources disagree on dimension")
        n = dims.pop() if dims else 0
        if n >= 2:
            # Equal columns would be one source in disguise; reject for n >= 2
            # (n = 1 legitimately mixes marginals on the single ray).
            for i in range(len(self.sources)):
                for j in range(i + 1, len(self.sources)):
                    d = np.asarray(self.sources[i].allocation) - np.asarray(
                        self.sources[j].allocation
                    )
                    if np.max(np.abs(d)) <= _ALLOC_TOL:
                        raise DomainError(
                            f"sources {i} and {j} have identical allocation columns"
                        )

    def axis_only(self) -> bool:
        return all(s.axis() is not None for s in self.sources)


def total_intensity(claims: ClaimModel) -> float:
    """Aggregate arrival rate lam = sum_l lam_l."""
    return float(sum(s.intensity for s in claims.sources))


def eval_cdf(claims: ClaimModel, x) -> float:
    """Joint claim CDF F(x) for x in R_+^n."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"eval_cdf needs x >= 0, got {x}")
    lam = total_intensity(claims)
    if lam == 0.0:
        return 0.0
    acc = 0.0
    for s in claims.sources:
        alloc = np.asarray(s.allocation)
        active = alloc > 0
        acc += s.intensity * float(s.marginal.cdf(np.min(x[active] / alloc[active])))
    return acc / lam


# ---------------------------------------------------------------------------
# ruin penalties
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroPenalty:
    pass


@dataclass(frozen=True)
class ConstantPenalty:
    value: float


@dataclass(frozen=True)
class DeficitPenalty:
    """Per-source penalty of the scalar total deficit sum_i max(0, (alpha - x)_i).

    `allocations` carries the source rays so the ruinous jump can be attributed;
    build with `deficit_penalty_for` to copy them from a ClaimModel.
    """

    per_source: tuple[Callable[[float], float], ...]
    allocations: tuple[tuple[float, ...], ...]


def deficit_penalty_for(claims: ClaimModel, fns) -> DeficitPenalty:
    fns = tuple(fns)
    if len(fns) != len(claims.sources):
        raise DomainError("need one deficit function per claim source")
    return DeficitPenalty(fns, tuple(s.allocation for s in claims.sources))


@dataclass(frozen=True)
class SurvivorPenalty:
    """n = 2 reward: the surviving company keeps paying its own dividends.

    upsilon(x, alpha) = -( V2(x2) 1{x1 < alpha1} + V1(x1) 1{x2 < alpha2} ).
    """

    tables: tuple[ValueTable1D, ValueTable1D]


@dataclass(frozen=True)
class CustomPenalty:
    fn: Callable[[np.ndarray, np.ndarray], float]


Penalty = Union[ZeroPenalty, ConstantPenalty, DeficitPenalty, SurvivorPenalty, CustomPenalty]


def _require_in_B(x, alpha):
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(x < 0) or np.any(alpha < 0):
        raise DomainError("penalty arguments must lie in R_+^n x R_+^n")
    if np.all(x - alpha >= 0):
        raise DomainError(f"(x, alpha) = ({x}, {alpha}) is not in B: x - alpha >= 0")
    return x, alpha


def _match_ray(alpha, allocations) -> int:
    for l, alloc in enumerate(allocations):
        a = np.asarray(alloc)
        active = a > 0
        if not np.any(active):
            continue
        beta = alpha[active][0] / a[active][0]
        if beta > 0 and np.allclose(alpha, beta * a, rtol=1e-9, atol=1e-12):
            return l
    raise DomainError(f"jump {alpha} does not lie on any source ray")


def eval_penalty(penalty: Penalty, x, alpha) -> float:
    """upsilon(x, alpha) on B; raises DomainError off B."""
    x, alpha = _require_in_B(x, alpha)
    if isinstance(penalty, ZeroPenalty):
        return 0.0
    if isinstance(penalty, ConstantPenalty):
        return float(penalty.value)
    if isinstance(penalty, SurvivorPenalty):
        if x.shape != (2,):
            raise DomainError("survivor penalty is defined for n = 2")
        v1, v2 = penalty.tables
        out = 0.0
        if x[0] - alpha[0] < 0:
            out -= float(v2(x[1]))
        if x[1] - alpha[1] < 0:
            out -= float(v1(x[0]))
        return out
    if isinstance(penalty, DeficitPenalty):
        l = _match_ray(alpha, penalty.allocations)
        deficit = float(np.sum(np.maximum(alpha - x, 0.0)))
        return float(penalty.per_source[l](deficit))
    if isinstance(penalty, CustomPenalty):
        return float(penalty.fn(x, alpha))
    raise TypeError(f"unknown penalty {penalty!r}")


def expected_penalty_at_zero(penalty: Penalty, claims: ClaimModel) -> float:
    """E|upsilon(0, U_1)|, exact for the structured variants.

    At x = 0 every jump ruins, so the expectation runs over the whole claim
    law.  Used for the never-switch default and the value lower bound.
    """
    lam = total_intensity(claims)
    if lam == 0.0:
        return 0.0
    if isinstance(penalty, ZeroPenalty):
        return 0.0
    if isinstance(penalty, ConstantPenalty):
        return abs(penalty.value)
    acc = 0.0
    for l, s in enumerate(claims.sources):
        w = s.intensity / lam
        if isinstance(penalty, SurvivorPenalty):
            axis = s.axis()
            if axis is None:
                # both coordinates ruin on any beta > 0 of a mixed ray
                val = float(penalty.tables[0](0.0)) + float(penalty.tables[1](0.0))
            else:
                other = 1 - axis
                val = float(penalty.tables[other](0.0))
            acc += w * abs(val)
        elif isinstance(penalty, DeficitPenalty):
            fn = penalty.per_source[l]
            acc += w * _ray_expectation(s.marginal, lambda b: abs(fn(b)))
        elif isinstance(penalty, CustomPenalty):
            alloc = np.asarray(s.allocation)
            acc += w * _ray_expectation(
                s.marginal, lambda b: abs(penalty.fn(np.zeros(len(alloc)), b * alloc))
            )
        else:
            raise TypeError(f"unknown penalty {penalty!r}")
    return acc


_GL64 = np.polynomial.legendre.leggauss(64)
_LAG64 = np.polynomial.laguerre.laggauss(64)


def _ray_expectation(marginal: Marginal, fn, lower: float = 0.0) -> float:
    """E[fn(beta); beta > lower] under a one-dim marginal."""
    if isinstance(marginal, PiecewiseEmpirical):
        return float(
            sum(p * fn(b) for b, p in zip(marginal.atoms, marginal.probs) if b > lower)
        )
    d = marginal.rate
    nodes, weights = _LAG64
    # integral_{lower}^{inf} fn(b) d e^{-d b} = e^{-d lower} E[fn(lower + E/d)]
    vals = np.array([fn(lower + u / d) for u in nodes])
    out = float(np.exp(-d * lower) * np.dot(weights, vals))
    if not np.isfinite(out):
        raise NumericsError("ray expectation diverged; penalty not integrable")
    return out


# ---------------------------------------------------------------------------
# switch obstacles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NeverSwitch:
    """Constant obstacle dominated by every admissible value; switching never optimal."""

    value: float


@dataclass(frozen=True)
class MergerObstacle:
    """f(x) = V_M(sum x_i - c_M) 1{sum x_i >= c_M}, merger cost c_M >= 0."""

    table: ValueTable1D
    cost: float = 0.0

    def __post_init__(self):
        if self.cost < 0:
            raise DomainError(f"merger cost must be >= 0, got {self.cost}")


@dataclass(frozen=True)
class CustomObstacle:
    fn: Callable[[np.ndarray], float]


Obstacle = Union[NeverSwitch, MergerObstacle, CustomObstacle]


def eval_obstacle(obstacle: Obstacle, x) -> float:
    x = np.asarray(x, dtype=float)
    if isinstance(obstacle, NeverSwitch):
        return float(obstacle.value)
    if isinstance(obstacle, MergerObstacle):
        s = float(np.sum(x))
        return float(obstacle.table(s - obstacle.cost)) if s >= obstacle.cost else 0.0
    if isinstance(obstacle, CustomObstacle):
        return float(obstacle.fn(x))
    raise TypeError(f"unknown obstacle {obstacle!r}")


def eval_obstacle_batch(obstacle: Obstacle, points: np.ndarray) -> np.ndarray:
    """Vectorized obstacle over an array of points (last axis = coordinate)."""
    points = np.asarray(points, dtype=float)
    if isinstance(obstacle, NeverSwitch):
        return np.full(points.shape[:-1], float(obstacle.value))
    if isinstance(obstacle, MergerObstacle):
        s = points.sum(axis=-1)
        on = s >= obstacle.cost
        out = np.zeros(points.shape[:-1])
        if np.any(on):
            out[on] = obstacle.table(s[on] - obstacle.cost)
        return out
    flat = points.reshape(-1, points.shape[-1])
    return np.array([eval_obstacle(obstacle, x) for x in flat]).reshape(points.shape[:-1])


def never_switch_default(penalty: Penalty, claims: ClaimModel) -> float:
    """Strictly dominated constant: -(1 + E|upsilon(0, U_1)|) * 10."""
    return -(1.0 + expected_penalty_at_zero(penalty, claims)) * 10.0


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Dimension, premiums, discount, dividend weights, claims, penalty, obstacle."""

    n: int
    p: tuple[float, ...]
    c: float
    a: tuple[float, ...]
    claims: ClaimModel = field(default_factory=ClaimModel)
    penalty: Penalty = field(default_factory=ZeroPenalty)
    obstacle: Obstacle = field(default_factory=lambda: NeverSwitch(-1e6))

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if len(self.p) != self.n or len(self.a) != self.n:
            raise DomainError("p and a must have length n")
        if any(v <= 0 for v in self.p):
            raise DomainError(f"premium rates must be positive, got {self.p}")
        if any(v <= 0 for v in self.a):
            raise DomainError(f"dividend weights must be positive, got {self.a}")
        if not self.c > 0:
            raise DomainError(f"discount rate must be positive, got {self.c}")
        for s in self.claims.sources:
            if len(s.allocation) != self.n:
                raise DomainError("claim source dimension does not match n")
        if isinstance(self.penalty, SurvivorPenalty) and self.n != 2:
            raise DomainError("survivor penalty requires n = 2")

    @property
    def lam(self) -> float:
        return total_intensity(self.claims)


def growth_bound(model: ModelSpec, x) -> float:
    """h0(x) = exp((c / 2n) * sum_i x_i / p_i)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"growth_bound needs x >= 0, got {x}")
    return float(np.exp(model.c / (2 * model.n) * np.sum(x / np.asarray(model.p))))


def ruin_threshold(source: ClaimSource, x) -> float:
    """Smallest beta at which a jump of this source exits R_+^n from x."""
    alloc = np.asarray(source.allocation)
    active = alloc > 0
    return float(np.min(np.asarray(x, dtype=float)[active] / alloc[active]))


def eval_R(model: ModelSpec, x) -> float:
    """Ruin integral R(x) = sum_l lam_l E[ upsilon(x, beta a_l); beta > B_l(x) ].

    Closed forms for the structured penalties on axis-concentrated sources;
    the generic path integrates along each source ray.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"eval_R needs x >= 0, got {x}")
    pen = model.penalty
    if isinstance(pen, ZeroPenalty):
        return 0.0
    acc = 0.0
    for l, s in enumerate(model.claims.sources):
        thr = ruin_threshold(s, x)
        tail = 1.0 - float(s.marginal.cdf(thr))
        axis = s.axis()
        if isinstance(pen, ConstantPenalty):
            acc += s.intensity * pen.value * tail
        elif isinstance(pen, SurvivorPenalty) and axis is not None:
            other = 1 - axis
            acc -= s.intensity * float(pen.tables[other](x[other])) * tail
        elif isinstance(pen, DeficitPenalty) and axis is not None:
            fn = pen.per_source[l]
            acc += s.intensity * _ray_expectation(s.marginal, lambda b: fn(b - thr), thr)
        else:
            alloc = np.asarray(s.allocation)

            def integrand(beta, alloc=alloc):
                return eval_penalty(pen, x, beta * alloc)

            acc += s.intensity * _ray_penalty_integral(s.marginal, integrand, x, alloc)
    if not np.isfinite(acc):
        raise NumericsError(f"R({x}) is not finite; penalty not integrable")
    return acc


def _ray_penalty_integral(marginal: Marginal, integrand, x, alloc) -> float:
    """E[integrand(beta); beta > B(x)] with breakpoints where coordinates ruin."""
    active = np.nonzero(alloc)[0]
    crossings = sorted(float(x[i] / alloc[i]) for i in active)
    thr = crossings[0]
    if isinstance(marginal, PiecewiseEmpirical):
        return float(
            sum(p * integrand(b) for b, p in zip(marginal.atoms, marginal.probs) if b > thr)
        )
    d = marginal.rate
    nodes, weights = _GL64
    acc = 0.0
    # piecewise smooth between successive coordinate crossings, then the tail
    pieces = crossings + [crossings[-1] + 40.0 / d]
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        if hi <= lo:
            continue
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        b = mid + half * nodes
        vals = np.array([integrand(bi) for bi in b]) * d * np.exp(-d * b)
        acc += half * float(np.dot(weights, vals))
    return acc


def validate_growth_on_box(model: ModelSpec, grid, samples: int = 64) -> None:
    """GC sanity on the truncated domain: f and R evaluate finite at sampled nodes."""
    rng = np.random.default_rng(0)
    mm = np.asarray(grid.m_max)
    idx = rng.integers(0, mm + 1, size=(samples, model.n))
    idx[0] = 0
    idx[1] = mm
    for m in idx:
        pt = (m * grid.delta) * np.asarray(model.p)
        f = eval_obstacle(model.obstacle, pt)
        r = eval_R(model, pt)
        if not (np.isfinite(f) and np.isfinite(r)):
            raise NumericsError(f"growth check failed at node {tuple(m)}: f={f}, R={r}")

"""Config files: one JSON document per experiment.

Keys: n, p[], c, a[], sources[].{intensity, allocation[], marginal.{kind,
rate|atoms}}, penalty.{kind, ...}, obstacle.{kind, c_M, table_path},
grid.{delta, m_max[]}, plus optional solver/simulate sections.  delta may be
a number or an exact "p/q" rational string.  Survivor penalties and merger
obstacles without explicit table paths are realized by solving the 1-d
sub-problems; the emitted tables land next to the other artifacts and the
echoed effective config points at them, so a re-run is reproducible.
"""

from __future__ import annotations

import importlib.resources
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ConfigError
from .grid import GridSpec
from .model import (
    ClaimModel,
    ClaimSource,
    ConstantPenalty,
    Exponential,
    MergerObstacle,
    ModelSpec,
    NeverSwitch,
    PiecewiseEmpirical,
    SurvivorPenalty,
    ValueTable1D,
    ZeroPenalty,
    never_switch_default,
)

PRESETS = ("example1", "example2")


def load_config(path_or_name: str) -> dict:
    """Read a config file; bare preset names resolve to the shipped presets."""
    if path_or_name in PRESETS:
        ref = importlib.resources.files("divswitch.presets") / f"{path_or_name}.json"
        text = ref.read_text()
    else:
        if not os.path.exists(path_or_name):
            raise ConfigError(f"config file not found: {path_or_name}")
        with open(path_or_name) as fh:
            text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def parse_delta(value) -> float:
    if isinstance(value, str):
        try:
            frac = Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"grid.delta: cannot parse rational {value!r}") from exc
        if frac <= 0:
            raise ConfigError(f"grid.delta: must be positive, got {value!r}")
        return float(frac)
    if isinstance(value, (int, float)) and value > 0:
        return float(value)
    raise ConfigError(f"grid.delta: must be a positive number or 'p/q', got {value!r}")


def _need(cfg: dict, key: str, kind, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}{key}: missing required key")
    val = cfg[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(f"{path}{key}: expected {kind}, got {type(val).__name__}")
    return val


def _vector(cfg: dict, key: str, n: int, path: str):
    raw = _need(cfg, key, list, path)
    if len(raw) != n:
        raise ConfigError(f"{path}{key}: expected {n} entries, got {len(raw)}")
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}{key}: entries must be numbers") from exc


def _parse_marginal(raw: dict, path: str):
    kind = _need(raw, "kind", str, path)
    if kind == "exponential":
        return Exponential(_need(raw, "rate", float, path))
    if kind == "empirical":
        atoms = _need(raw, "atoms", list, path)
        try:
            xs = tuple(float(a[0]) for a in atoms)
            ps = tuple(float(a[1]) for a in atoms)
        except (TypeError, IndexError, ValueError) as exc:
            raise ConfigError(f"{path}atoms: expected [value, prob] pairs") from exc
        return PiecewiseEmpirical(xs, ps)
    raise ConfigError(f"{path}kind: unknown marginal kind {kind!r}")


@dataclass
class ConfigBundle:
    model: ModelSpec
    grid: GridSpec
    effective: dict
    emitted_tables: dict = field(default_factory=dict)


def realize(cfg: dict, out_dir: str | None = None, threads: int = 1) -> ConfigBundle:
    """Validate a config dict and build the model and grid it describes."""
    from .errors import DomainError

    try:
        return _realize(cfg, out_dir, threads)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _realize(cfg: dict, out_dir: str | None, threads: int) -> ConfigBundle:
    n = _need(cfg, "n", int, "")
    if n < 1:
        raise ConfigError("n: must be >= 1")
    p = _vector(cfg, "p", n, "")
    c = _need(cfg, "c", float, "")
    a = _vector(cfg, "a", n, "")

    sources = []
    raw_sources = _need(cfg, "sources", list, "")
    for i, raw in enumerate(raw_sources):
        path = f"sources[{i}]."
        if not isinstance(raw, dict):
            raise ConfigError(f"sources[{i}]: expected an object")
        intensity = _need(raw, "intensity", float, path)
        allocation = _vector(raw, "allocation", n, path)
        marginal = _parse_marginal(_need(raw, "marginal", dict, path), path + "marginal.")
        sources.append(ClaimSource(intensity, allocation, marginal))
    claims = ClaimModel(tuple(sources))

    grid_raw = _need(cfg, "grid", dict, "")
    delta = parse_delta(_need(grid_raw, "delta", object, "grid."))
    m_max = _need(grid_raw, "m_max", list, "grid.")
    if len(m_max) != n or not all(isinstance(v, int) and v >= 1 for v in m_max):
        raise ConfigError("grid.m_max: expected positive integers, one per axis")
    grid = GridSpec(delta, tuple(m_max), p)

    pen_raw = _need(cfg, "penalty", dict, "")
    obs_raw = _need(cfg, "obstacle", dict, "")
    pen_kind = _need(pen_raw, "kind", str, "penalty.")
    obs_kind = _need(obs_raw, "kind", str, "obstacle.")

    effective = json.loads(json.dumps(cfg))
    effective["grid"]["delta"] = cfg["grid"]["delta"]
    emitted = {}

    need_auto_penalty = pen_kind == "survivor" and "tables" not in pen_raw
    need_auto_obstacle = obs_kind == "merger" and "table_path" not in obs_raw

    penalty = None
    obstacle = None

    if pen_kind == "zero":
        penalty = ZeroPenalty()
    elif pen_kind == "constant":
        penalty = ConstantPenalty(_need(pen_raw, "value", float, "penalty."))
    elif pen_kind == "survivor":
        if n != 2:
            raise ConfigError("penalty.kind: survivor requires n = 2")
        if not need_auto_penalty:
            paths = _need(pen_raw, "tables", list, "penalty.")
            if len(paths) != 2:
                raise ConfigError("penalty.tables: expected two CSV paths")
            penalty = SurvivorPenalty(
                tuple(_load_table(pth, f"penalty.tables[{i}]") for i, pth in enumerate(paths))
            )
    else:
        raise ConfigError(f"penalty.kind: unknown kind {pen_kind!r}")

    if obs_kind == "never_switch":
        val = obs_raw.get("value")
        if val is None:
            base_pen = penalty if penalty is not None else ZeroPenalty()
            val = never_switch_default(base_pen, claims)
            effective["obstacle"]["value"] = val
        obstacle = NeverSwitch(float(val))
    elif obs_kind == "merger":
        cost = float(obs_raw.get("c_M", 0.0))
        if cost < 0:
            raise ConfigError("obstacle.c_M: must be >= 0")
        if not need_auto_obstacle:
            obstacle = MergerObstacle(
                _load_table(obs_raw["table_path"], "obstacle.table_path"), cost
            )
    else:
        raise ConfigError(f"obstacle.kind: unknown kind {obs_kind!r}")

    if need_auto_penalty or need_auto_obstacle:
        if n != 2:
            raise ConfigError("auto-built merger/survivor tables require n = 2")
        base = ModelSpec(n, p, c, a, claims, ZeroPenalty(), NeverSwitch(-1.0))
        from .oned import build_merger_inputs

        cost = float(obs_raw.get("c_M", 0.0)) if obs_kind == "merger" else 0.0
        auto_obstacle, auto_penalty = build_merger_inputs(
            base, cost, grid, workers=threads
        )
        if need_auto_penalty:
            penalty = auto_penalty
            if out_dir is not None:
                paths = []
                for i, table in enumerate(auto_penalty.tables):
                    pth = os.path.join(out_dir, f"v{i + 1}.csv")
                    table.to_csv(pth)
                    paths.append(pth)
                    emitted[f"v{i + 1}"] = table
                effective["penalty"]["tables"] = paths
        if need_auto_obstacle:
            obstacle = auto_obstacle
            if out_dir is not None:
                pth = os.path.join(out_dir, "vm.csv")
                auto_obstacle.table.to_csv(pth)
                emitted["vm"] = auto_obstacle.table
                effective["obstacle"]["table_path"] = pth

    model = ModelSpec(n, p, c, a, claims, penalty, obstacle)
    return ConfigBundle(model=model, grid=grid, effective=effective, emitted_tables=emitted)


def _load_table(path, key: str) -> ValueTable1D:
    if not isinstance(path, str) or not os.path.exists(path):
        raise ConfigError(f"{key}: table CSV not found: {path!r}")
    try:
        return ValueTable1D.from_csv(path)
    except Exception as exc:
        raise ConfigError(f"{key}: cannot load table {path!r}: {exc}") from exc


def canonical_bytes(cfg: dict) -> bytes:
    """Canonical byte serialization used for coefficient-cache keys."""
    return json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()

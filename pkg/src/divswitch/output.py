"""Deterministic artifact writers: value CSV, region PGM, report CSVs.

Floats are written with repr (shortest round-trip), so re-runs of the same
configuration produce byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError
from .grid import GridSpec, to_point
from .operators import NO_ACTION, SWITCH, ValueField, action_code, action_label
from .solver import PolicyField, RefinementReport

# gray levels for the n = 2 region map
_PGM_LEVELS = {SWITCH: 0, 0: 85, 1: 170, NO_ACTION: 255}


def write_value_csv(path, grid: GridSpec, v: ValueField, policy: PolicyField) -> None:
    n = grid.n
    header = (
        [f"m{i + 1}" for i in range(n)]
        + [f"x{i + 1}" for i in range(n)]
        + ["v", "action"]
    )
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for m in np.ndindex(*grid.shape):
            x = to_point(grid, np.asarray(m))
            cells = [str(i) for i in m]
            cells += [repr(float(c)) for c in x]
            cells.append(repr(float(v.data[m])))
            cells.append(action_label(int(policy.actions[m])))
            fh.write(",".join(cells) + "\n")


def read_value_csv(path, grid: GridSpec):
    """Rebuild (ValueField, PolicyField) from a value CSV written for this grid."""
    n = grid.n
    data = np.full(grid.shape, np.nan)
    actions = np.full(grid.shape, NO_ACTION, dtype=np.int8)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:n] != [f"m{i + 1}" for i in range(n)]:
            raise ConfigError(f"{path}: unexpected value CSV header {header}")
        for line in fh:
            parts = line.strip().split(",")
            m = tuple(int(v) for v in parts[:n])
            data[m] = float(parts[2 * n])
            actions[m] = action_code(parts[2 * n + 1])
    if np.any(np.isnan(data)):
        raise ConfigError(f"{path}: value CSV does not cover the grid box")
    return ValueField(grid, data), PolicyField(grid, actions)


def write_policy_pgm(path, policy: PolicyField) -> None:
    """Plain (P2) PGM, one pixel per node; rows scan m2 from the top."""
    if policy.grid.n != 2:
        raise ConfigError("PGM region maps are defined for n = 2 only")
    levels = np.vectorize(lambda a: _PGM_LEVELS[int(a)])(policy.actions)
    h = policy.grid.shape[1]
    w = policy.grid.shape[0]
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in range(h - 1, -1, -1):
            fh.write(" ".join(str(int(v)) for v in levels[:, row]) + "\n")


def write_refinement_csv(path, report: RefinementReport) -> None:
    with open(path, "w") as fh:
        fh.write("level,delta,sup_diff,violations,iterations,residual\n")
        for i, lv in enumerate(report.levels):
            sup = "" if np.isnan(lv.sup_diff) else repr(lv.sup_diff)
            fh.write(
                f"{i},{lv.delta!r},{sup},{lv.violations},{lv.iterations},{lv.residual!r}\n"
            )


def write_mc_csv(path, rows) -> None:
    """rows: iterables of (node tuple, v, mean, se, z, paths, horizon)."""
    with open(path, "w") as fh:
        first = rows[0][0]
        n = len(first)
        head = [f"m{i + 1}" for i in range(n)]
        fh.write(",".join(head) + ",v_delta,mc_mean,mc_se,z_score,paths,horizon\n")
        for node, v, mean, se, z, paths, horizon in rows:
            cells = [str(i) for i in node]
            cells += [repr(float(v)), repr(float(mean)), repr(float(se)), repr(float(z))]
            cells += [str(paths), repr(float(horizon))]
            fh.write(",".join(cells) + "\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

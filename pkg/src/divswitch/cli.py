"""Command-line front end: solve, refine, simulate.

Exit codes: 0 ok, 2 config/validation error, 3 nonconvergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import output
from .errors import ConfigError, DivswitchError, DomainError, NonconvergenceError
from .montecarlo import SimConfig, default_horizon, simulate_policy
from .operators import precompute_coeffs
from .solver import extract_policy, refinement_run, value_iteration

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divswitch",
        description="Grid solver for multidimensional optimal dividends with switching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="config JSON path or preset name")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker cap")
        sp.add_argument("--tol-iter", type=float, default=None, help="sweep stop tolerance")

    sp = sub.add_parser("solve", help="solve one instance, write value/policy artifacts")
    common(sp)

    sp = sub.add_parser("refine", help="solve a refinement ladder delta, delta/2, ...")
    common(sp)
    sp.add_argument("--levels", type=int, required=True, help="number of grid levels")

    sp = sub.add_parser("simulate", help="Monte Carlo cross-check of a prior solve")
    common(sp)
    sp.add_argument("--nodes", required=True, help="start nodes, e.g. '10,20;30,5'")
    sp.add_argument("--paths", type=int, default=200_000)
    sp.add_argument("--seed", type=int, default=20240801)
    return parser


def _prepare_out(out_dir: str) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise _IOFailure(f"output directory {out_dir!r} is not writable: {exc}") from exc


class _IOFailure(Exception):
    pass


def cmd_solve(args) -> int:
    _prepare_out(args.out)
    cfg = cfgmod.load_config(args.config)
    bundle = cfgmod.realize(cfg, out_dir=args.out, threads=args.threads)
    model, grid = bundle.model, bundle.grid
    coeffs = precompute_coeffs(model, grid)
    v, report = value_iteration(
        model, grid, coeffs, tol_iter=args.tol_iter, workers=args.threads
    )
    policy = extract_policy(model, grid, coeffs, v)
    if policy.boundary_no_action():
        print(
            "warning: the non-action region touches the box boundary;"
            " enlarge grid.m_max to trust values near the edge",
            file=sys.stderr,
        )
    output.write_value_csv(os.path.join(args.out, "value.csv"), grid, v, policy)
    if grid.n == 2:
        output.write_policy_pgm(os.path.join(args.out, "policy.pgm"), policy)
    output.write_json(os.path.join(args.out, "report.json"), report.as_dict())
    output.write_json(os.path.join(args.out, "config.echo.json"), bundle.effective)
    print(
        f"solved in {report.iterations} sweeps,"
        f" residual {report.residual:.3e}, regions {policy.region_summary()}"
    )
    return EXIT_OK


def cmd_refine(args) -> int:
    if args.levels < 1:
        raise ConfigError("--levels must be >= 1")
    _prepare_out(args.out)
    cfg = cfgmod.load_config(args.config)
    bundle = cfgmod.realize(cfg, out_dir=args.out, threads=args.threads)
    report, _ = refinement_run(
        bundle.model,
        bundle.grid,
        args.levels,
        tol_iter=args.tol_iter,
        workers=args.threads,
    )
    output.write_refinement_csv(os.path.join(args.out, "refinement.csv"), report)
    output.write_json(os.path.join(args.out, "config.echo.json"), bundle.effective)
    print(
        f"refined {args.levels} level(s),"
        f" violations {report.total_violations()}, sup diffs {report.sup_diffs()}"
    )
    return EXIT_OK


def _parse_nodes(raw: str, n: int):
    nodes = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != n:
            raise ConfigError(f"--nodes: node {chunk!r} needs {n} indices")
        try:
            nodes.append(tuple(int(p) for p in parts))
        except ValueError as exc:
            raise ConfigError(f"--nodes: node {chunk!r} is not integral") from exc
    if not nodes:
        raise ConfigError("--nodes: no nodes given")
    return nodes


def cmd_simulate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    value_path = os.path.join(args.out, "value.csv")
    if not os.path.exists(value_path):
        raise _IOFailure(
            f"no solve artifacts in {args.out!r}: run 'divswitch solve' first"
            f" (missing {value_path})"
        )
    echo_path = os.path.join(args.out, "config.echo.json")
    load_from = echo_path if os.path.exists(echo_path) else None
    bundle = cfgmod.realize(
        cfgmod.load_config(load_from) if load_from else cfg,
        out_dir=None,
        threads=args.threads,
    )
    model, grid = bundle.model, bundle.grid
    nodes = _parse_nodes(args.nodes, grid.n)
    for node in nodes:
        if any(i < 0 or i > mm for i, mm in zip(node, grid.m_max)):
            raise ConfigError(f"--nodes: node {node} lies outside the grid box")
    v, policy = output.read_value_csv(value_path, grid)
    horizon = default_horizon(model.c)
    rows = []
    for node in nodes:
        sim = simulate_policy(
            model, grid, policy, SimConfig(args.paths, horizon, args.seed, node)
        )
        ref = v.data[node]
        se_floor = 1e-12 * max(1.0, abs(ref))
        z = (sim.mean - ref) / sim.std_error if sim.std_error > se_floor else 0.0
        rows.append((node, ref, sim.mean, sim.std_error, z, sim.paths, horizon))
        if sim.outside_box_events:
            print(
                f"warning: {sim.outside_box_events} out-of-box corrections at node"
                f" {node}; the box may be too small",
                file=sys.stderr,
            )
    output.write_mc_csv(os.path.join(args.out, "mc_summary.csv"), rows)
    worst = max(abs(r[4]) for r in rows)
    print(f"simulated {len(rows)} node(s), max |z| = {worst:.2f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    np.seterr(over="raise", invalid="raise")
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "refine":
            return cmd_refine(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        raise AssertionError("unreachable")
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonconvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivswitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

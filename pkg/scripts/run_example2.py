#!/usr/bin/env python3
"""Solve the costly-merger example (delta = 1/50, c_M = 0.364) and locate the
junction where the non-action and both dividend regions meet."""

import sys

from divswitch.cli import main as cli_main
from divswitch.operators import NO_ACTION, SWITCH
from divswitch import config as cfgmod
from divswitch.output import read_value_csv

OUT = "out/example2"


def run():
    rc = cli_main(["solve", "--config", "example2", "--out", OUT, "--threads", "4"])
    if rc != 0:
        return rc
    bundle = cfgmod.realize(cfgmod.load_config(f"{OUT}/config.echo.json"))
    _, policy = read_value_csv(f"{OUT}/value.csv", bundle.grid)
    acts = policy.actions
    grid = bundle.grid
    for i in range(acts.shape[0] - 1):
        for j in range(acts.shape[1] - 1):
            quad = {int(acts[i, j]), int(acts[i + 1, j]), int(acts[i, j + 1]),
                    int(acts[i + 1, j + 1])}
            if {NO_ACTION, 0, 1} <= quad and SWITCH not in quad:
                mid = (((i + 0.5) * grid.delta) * grid.premiums[0],
                       ((j + 0.5) * grid.delta) * grid.premiums[1])
                print(f"three-region junction near {mid}")
    print(f"region map: {OUT}/policy.pgm")
    return 0


if __name__ == "__main__":
    sys.exit(run())

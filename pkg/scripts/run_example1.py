#!/usr/bin/env python3
"""Solve the first two-company merger example (delta = 1/60 on [0,3]^2).

Solves the shipped example1 preset, writes the value table, region PGM and
report under out/example1/, and prints the region summary plus the corner of
the bottom non-action rectangle.
"""

import sys

import numpy as np
import scipy.ndimage

from divswitch.cli import main as cli_main
from divswitch.operators import NO_ACTION
from divswitch import config as cfgmod
from divswitch.output import read_value_csv

OUT = "out/example1"


def run():
    rc = cli_main(["solve", "--config", "example1", "--out", OUT, "--threads", "4"])
    if rc != 0:
        return rc
    bundle = cfgmod.realize(cfgmod.load_config(f"{OUT}/config.echo.json"))
    _, policy = read_value_csv(f"{OUT}/value.csv", bundle.grid)
    labels, count = scipy.ndimage.label(policy.mask(NO_ACTION))
    idx = np.argwhere(labels == labels[0, 0])
    bb = idx.max(axis=0)
    corner = (
        float((bb[0] * bundle.grid.delta) * bundle.grid.premiums[0]),
        float((bb[1] * bundle.grid.delta) * bundle.grid.premiums[1]),
    )
    print(f"non-action components: {count}; bottom rectangle corner ~ {corner}")
    print(f"region map: {OUT}/policy.pgm")
    return 0


if __name__ == "__main__":
    sys.exit(run())

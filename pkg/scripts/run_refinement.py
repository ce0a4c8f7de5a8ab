#!/usr/bin/env python3
"""Refinement ladder for example 1: delta = 1/15 -> 1/30 -> 1/60.

Checks the embedded-grid monotonicity at every halving and reports the sup
differences between successive levels.
"""

import json
import sys

from divswitch.cli import main as cli_main

OUT = "out/refinement"

CONFIG = {
    "n": 2,
    "p": [1.08, 0.674],
    "c": 0.11,
    "a": [1.0, 1.0],
    "sources": [
        {"intensity": 2.4, "allocation": [1.0, 0.0],
         "marginal": {"kind": "exponential", "rate": 3.0}},
        {"intensity": 2.0, "allocation": [0.0, 1.0],
         "marginal": {"kind": "exponential", "rate": 3.5}},
    ],
    "penalty": {"kind": "survivor"},
    "obstacle": {"kind": "merger", "c_M": 0.0},
    "grid": {"delta": "1/15", "m_max": [42, 67]},
}


def run():
    import os

    os.makedirs(OUT, exist_ok=True)
    cfg_path = f"{OUT}/ladder.json"
    with open(cfg_path, "w") as fh:
        json.dump(CONFIG, fh, indent=2)
    rc = cli_main(["refine", "--config", cfg_path, "--out", OUT, "--levels", "3"])
    if rc == 0:
        print(f"report: {OUT}/refinement.csv")
    return rc


if __name__ == "__main__":
    sys.exit(run())

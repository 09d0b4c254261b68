#!/usr/bin/env python3
"""A besieged city: hunger in the womb, then recovery.

Runs the blockade scenario at its shipped parameters and prints each yearly
birth cohort next to the food supply its members met in utero.  The dip
cohort is the one carried through the hungriest winter.  Pass --calibrate
to refit the free parameters first (several minutes).
"""

from __future__ import annotations

import argparse

import numpy as np

from sexratio.calibration import apply, calibrate
from sexratio.engine import run
from sexratio.scenarios import builtin


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--calibrate", action="store_true")
    args = ap.parse_args()

    sc = builtin("blockade")
    if args.calibrate:
        res = calibrate(sc, seed=0)
        print("fitted:", {k: round(v, 3) for k, v in res.params.items()}, "feasible:", res.feasible)
        sc = apply(sc, res.params)

    tr = run(None, sc, seed=0)
    gest = sc.config.gestation
    print("year  target  simulated  mean nutrition in utero")
    for tg in sc.targets:
        grid = np.linspace(tg.start - gest, tg.end, 50)
        food = np.mean([sc.nutrition.at(t) for t in grid])
        target = "rising" if tg.kind == "between_neighbours" else f"{tg.value:.0f}"
        print(f"{tg.start:4.0f}  {target:>6}  {tr.sr_tb(tg.start, tg.end):9.1f}  {food:10.2f}")


if __name__ == "__main__":
    main()

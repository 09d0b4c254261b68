#!/usr/bin/env python3
"""Harsher environments move the parity age t_p earlier.

First the deterministic cohort solution, then a handful of simulated
populations for comparison.  Conception sex ratio follows the father's
sensor, so each harshness gets its own SR(0).
"""

from __future__ import annotations

import dataclasses

from sexratio.demography import NoParityCrossing, cohort_solve, parity_age_numbers
from sexratio.engine import run_replicates
from sexratio.environment import HarshnessSchedule
from sexratio.reproduction import preconception_sr
from sexratio.scenarios import builtin


def oracle_tp(cfg, H: float) -> tuple[float, float]:
    p = preconception_sr(cfg.preconception.q_ref, H, cfg.preconception)
    sr0 = 100.0 * p / (1.0 - p)
    try:
        return sr0, parity_age_numbers(cohort_solve(cfg, sr0, harshness=H))
    except NoParityCrossing:
        return sr0, float("nan")


def main() -> None:
    base = builtin("baseline_peace")
    print(" H     SR(0)  t_p cohort   t_p simulated (6 runs)")
    for H in (0.1, 0.4, 0.8):
        sr0, tp = oracle_tp(base.config, H)
        sc = dataclasses.replace(base, harshness=HarshnessSchedule.constant(H))
        s = run_replicates(None, sc, list(range(1, 7)))
        m, lo, hi = s.stats["t_p"]
        print(f"{H:4.1f}  {sr0:6.1f}  {tp:9.1f}   {m:6.1f}  [{lo:5.1f}, {hi:5.1f}]")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Peace against war: what a draft of the fittest men does to the birth sex ratio.

Both runs share a seed and every parameter except the draft event, so the
difference in the birth cohort is the draft's doing.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from sexratio.engine import run
from sexratio.scenarios import CalibrationSpec, builtin

N = 10_000


def describe(label: str, tr) -> None:
    print(f"{label:>6}: SR at conception {tr.sr0(start=0.0):6.1f}   SR at birth {tr.sr_tb(start=0.0):6.1f}")


def main() -> None:
    war = builtin("war_draft", {"population": {"size": N}})
    peace = dataclasses.replace(war, name="peace", events=(), targets=(), calibration=CalibrationSpec())

    print("Birth-cohort sex ratio per year (males per 100 females)")
    for label, sc in (("peace", peace), ("war", war)):
        tr = run(None, sc, seed=7)
        print(f"{label:>6}:", " ".join(f"{v:6.1f}" for v in tr.sr_tb_series()[1:]))
    print()
    for label, sc in (("peace", peace), ("war", war)):
        describe(label, run(None, sc, seed=7))

    # survivors thin out with age and SR falls through 100 on the way.  A few
    # years of deaths are too few for a life table, so use the long baseline.
    tr = run(None, builtin("baseline_peace", {"population": {"size": N}}), seed=7)
    ages, sr = tr.period_table().curve()
    print("\nLife-table sex ratio by age after fifty years of peace")
    for a in range(0, int(ages[-1]) + 1, 10):
        print(f"  {a:3d}  {np.interp(a, ages, sr):6.1f}")
    print(f"parity age t_p = {tr.parity_age():.1f} years")


if __name__ == "__main__":
    np.set_printoptions(precision=1)
    main()

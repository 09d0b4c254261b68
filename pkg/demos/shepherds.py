#!/usr/bin/env python3
"""Shepherds who come home once a year father mostly daughters.

While a man is away his abstinence clock runs, and a month at home is
rarely enough to conceive and reset it.  A mild sensor turns the wait
into hardship, which favours sons.  A sharp one soon carries it past the
catastrophe threshold, and then sons become rare.  The men who stay in
the village set the usual ratio.
"""

from __future__ import annotations

from sexratio.engine import run
from sexratio.scenarios import builtin, set_param


def main() -> None:
    sc = builtin("mountain_abstinence")
    print("beta_abst  shepherds' children  village children")
    for beta in (0.0, 1.0, 4.0):
        tr = run(None, set_param(sc, "sensor.beta_abst", beta), seed=3)
        print(f"{beta:9.1f}  {tr.sr_tb(1.0, 10.0, group=1):19.1f}  {tr.sr_tb(1.0, 10.0, group=0):16.1f}")


if __name__ == "__main__":
    main()

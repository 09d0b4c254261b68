#!/usr/bin/env python3
"""Sexual and asexual populations chasing a moving optimum.

Both arms share lifespan, birth rate and mutation size.  The sexual arm
adds only one thing: fathers are picked in proportion to their fitness
rank.  At a still optimum neither dies out, at a racing one both do, and in
between the sexual arm survives far more often.
"""

from __future__ import annotations

from sexratio.scenarios import builtin
from sexratio.tracking import race_configs, tracking_race

REPLICATES = 60


def main() -> None:
    sc = builtin("tracking_race")
    sexual, asexual = race_configs(sc.config)
    print(f"extinction probability over {sc.config.horizon:.0f} years, {REPLICATES} runs per arm")
    print(" drift   sexual            asexual           separated")
    for v in (0.0, 0.07, sc.drift.rate, 0.3, 3.0):
        r = tracking_race(sexual, asexual, v, REPLICATES, seed=1)
        s, a = r.p_ext_sexual, r.p_ext_asexual
        print(f"{v:6.2f}   {s[0]:.2f} [{s[1]:.2f},{s[2]:.2f}]   {a[0]:.2f} [{a[1]:.2f},{a[2]:.2f}]   {r.significant}")


if __name__ == "__main__":
    main()

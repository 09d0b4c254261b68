"""Writing trajectories and summaries.

CSV files are long form with a fixed column order and floats written as
the shortest decimal that round-trips (``repr``); NaN is an empty field.
Every file is written to a hidden staging name in the target directory and
renamed into place, so a reader never sees a partial file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from sexratio.demography import sex_ratio
from sexratio.engine import Trajectory

LONG_COLUMNS = ("time", "statistic", "value", "replicate")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else x
    return obj


def json_text(data) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def write_atomic(path: Path, text: str) -> Path:
    """Write ``text`` via a staging file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = path.parent / f".{path.name}.partial"
    with open(staging, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(staging, path)
    return path


# ---------------------------------------------------------------------------
# trajectory tables
# ---------------------------------------------------------------------------


def long_rows(tr: Trajectory, replicate: int = 0) -> list[tuple]:
    """(time, statistic, value, replicate) rows for the recorded series."""
    rows = []
    sr_tb = tr.sr_tb_series()
    sr_tb_real = tr.sr_tb_series(kind="realised")
    s = tr.series
    for i, t in enumerate(tr.times):
        stats = {
            "alive_m": s["alive_m"][i],
            "alive_f": s["alive_f"][i],
            "in_utero_m": s["in_utero_m"][i],
            "in_utero_f": s["in_utero_f"][i],
            "births_m": s["births_m"][i].sum(),
            "births_f": s["births_f"][i].sum(),
            "sr_tb": sr_tb[i],
            "sr_tb_realised": sr_tb_real[i],
            "sr0": sex_ratio(s["conc_pm"][i].sum(), s["conc_pf"][i].sum()),
            "qbar_m": s["qbar_m"][i],
            "qbar_f": s["qbar_f"][i],
            "deaths": s["deaths"][i],
            "drafted": s["drafted"][i],
        }
        for k, v in stats.items():
            rows.append((float(t), k, float(v), replicate))
    return rows


def profile_rows(tr: Trajectory, replicate: int = 0) -> list[tuple]:
    edges = tr.profile_edges
    rows = []
    for i, t in enumerate(tr.times):
        sr = sex_ratio(tr.profiles_m[i], tr.profiles_f[i])
        for j in range(len(edges) - 1):
            rows.append((float(t), float(edges[j]), float(edges[j + 1]), int(tr.profiles_m[i][j]), int(tr.profiles_f[i][j]), float(sr[j]), replicate))
    return rows


def order_rows(tr: Trajectory, replicate: int = 0) -> list[tuple]:
    exp = tr.order_expected
    real = tr.order_realised
    rows = []
    for i in range(1, len(exp)):
        rows.append((i, float(exp[i, 1]), float(exp[i, 0]), float(sex_ratio(exp[i, 1], exp[i, 0])), int(real[i, 1]), int(real[i, 0]), replicate))
    return rows


def quality_rows(tr: Trajectory, replicate: int = 0) -> list[tuple]:
    tab = tr.period_table()
    return [(float(a), float(m), float(f), replicate) for a, m, f in zip(tab.q_ages, tab.qbar_m, tab.qbar_f)]


def life_rows(tr: Trajectory, replicate: int = 0) -> list[tuple]:
    tab = tr.period_table()
    return [(float(a), float(lm), float(lf), float(sr), replicate) for a, lm, lf, sr in zip(tab.ages, tab.l_m, tab.l_f, tab.sr)]


TABLES = {
    "trajectory": (LONG_COLUMNS, long_rows),
    "profiles": (("time", "bin_start", "bin_end", "males", "females", "SR", "replicate"), profile_rows),
    "birth_order": (("order", "expected_males", "expected_females", "SR", "born_males", "born_females", "replicate"), order_rows),
    "quality": (("age", "qbar_m", "qbar_f", "replicate"), quality_rows),
    "life_table": (("age", "l_m", "l_f", "SR", "replicate"), life_rows),
}


def write_tables(out_dir: Path, stem: str, trajs: Sequence[Trajectory]) -> list[Path]:
    """One CSV per table, rows from every replicate in order."""
    paths = []
    for name, (header, fn) in TABLES.items():
        rows = []
        for r, tr in enumerate(trajs):
            rows.extend(fn(tr, r))
        paths.append(write_atomic(Path(out_dir) / f"{stem}_{name}.csv", csv_text(header, rows)))
    return paths

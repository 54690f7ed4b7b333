"""Scaling sweeps over particle number and ε-rule."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..errors import RieszLakeError
from .config import evaluate_rule
from .runner import run_scenario, with_overrides

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("N", "epsilon_rule", "epsilon", "script_H_0", "script_H_T", "hneg_kappa_T", "amplitude_bound", "error")


def thread_cap() -> int:
    raw = os.environ.get("RIESZ_LAKE_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer RIESZ_LAKE_THREADS=%r", raw)
        return 1


def sweep_cells(raw: dict) -> list[dict]:
    spec = raw.get("sweep", {})
    Ns = list(spec.get("N", []))
    rules = spec.get("epsilon_rule")
    if rules is None:
        p = raw.get("particles", {})
        rules = [p.get("epsilon_rule", p.get("epsilon"))]
    elif isinstance(rules, str):
        rules = [rules]
    return [{"N": int(N), "epsilon_rule": r} for N in Ns for r in rules]


def _cell_config(raw, cell, out_dir):
    base = {k: v for k, v in raw.items() if k != "sweep"}
    particles = {k: v for k, v in base.get("particles", {}).items() if k not in ("epsilon", "epsilon_rule")}
    particles.update(N=cell["N"], epsilon_rule=cell["epsilon_rule"])
    sub = None
    if out_dir is not None:
        sub = str(Path(out_dir) / "cells" / f"N{cell['N']}_eps{_slug(cell['epsilon_rule'])}")
    return with_overrides({**base, "particles": particles}, output={"dir": sub or "out"}), sub


def _slug(rule):
    return "".join(ch if ch.isalnum() or ch in ".-" else "_" for ch in str(rule))


def run_cell(raw, cell, out_dir=None) -> dict:
    """One sweep row; failures are caught and reported in ``error``."""
    row = {"N": cell["N"], "epsilon_rule": cell["epsilon_rule"], "epsilon": math.nan,
           "script_H_0": math.nan, "script_H_T": math.nan, "hneg_kappa_T": math.nan,
           "amplitude_bound": math.nan, "error": ""}
    try:
        row["epsilon"] = evaluate_rule(cell["epsilon_rule"], N=cell["N"])
        cfg, sub = _cell_config(raw, cell, out_dir)
        res = run_scenario(cfg, out_dir=sub, write=sub is not None)
        row["script_H_0"] = res.records[0].script_H
        row["script_H_T"] = res.records[-1].script_H
        row["hneg_kappa_T"] = res.records[-1].hneg_kappa
        if res.config["kernel"]["family"] == "oned_coulomb":
            row["amplitude_bound"] = math.sqrt(2.0) / (cell["N"] * row["epsilon"])
    except (RieszLakeError, ValueError, ZeroDivisionError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def scaling_sweep(raw: dict, out_dir=None, threads=None) -> list[dict]:
    """Run every ``(N, epsilon_rule)`` cell and write ``sweep.csv`` when ``out_dir`` is given.

    Rows come back in cell order regardless of how many workers ran them.
    """
    cells = sweep_cells(raw)
    workers = threads or raw.get("sweep", {}).get("threads") or thread_cap()
    workers = min(int(workers), thread_cap() if "RIESZ_LAKE_THREADS" in os.environ else int(workers))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, [raw] * len(cells), cells, [out_dir] * len(cells)))
    else:
        rows = [run_cell(raw, c, out_dir) for c in cells]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_sweep_csv(Path(out_dir) / "sweep.csv", rows)
    return rows


def write_sweep_csv(path, rows):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    os.replace(tmp, path)

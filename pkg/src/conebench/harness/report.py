"""Benchmark result records: raw per-cell rows, aggregates, and writers.

The CSV is the primary artifact; the JSON summary (and any figure) is
recomputable from it. Floats go through ``repr`` so parsing the CSV back
reproduces them bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from ..estimators import rmse_mae

SCHEMA_VERSION = 1


@dataclass
class ResultRow:
    sim: int
    run: int
    estimator: str
    tau_hat: float | None
    tau: float
    status: str = "ok"
    error: str = ""


@dataclass
class EvalReport:
    config: dict
    rows: list
    summary: dict
    estimator_order: tuple
    schema_version: int = SCHEMA_VERSION


def aggregate_rows(rows, estimator_order) -> dict:
    """Per-estimator RMSE/MAE over successful cells."""
    summary = {}
    for name in estimator_order:
        ok = [(r.tau_hat, r.tau) for r in rows
              if r.estimator == name and r.status == "ok"]
        failed = sum(1 for r in rows if r.estimator == name and r.status != "ok")
        entry = {"n_ok": len(ok), "n_failed": failed, "rmse": None, "mae": None}
        if ok:
            entry["rmse"], entry["mae"] = rmse_mae(ok)
        summary[name] = entry
    return summary


def make_report(config_echo: dict, rows, estimator_order) -> EvalReport:
    return EvalReport(config=config_echo, rows=list(rows),
                      summary=aggregate_rows(rows, estimator_order),
                      estimator_order=tuple(estimator_order))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sim", "run", "estimator", "tau_hat", "tau",
                         "status", "error"])
        for r in report.rows:
            writer.writerow([r.sim, r.run, r.estimator, _fmt(r.tau_hat),
                             _fmt(r.tau), r.status, r.error])


def read_rows_csv(path) -> list:
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                sim=int(rec["sim"]), run=int(rec["run"]),
                estimator=rec["estimator"],
                tau_hat=float(rec["tau_hat"]) if rec["tau_hat"] else None,
                tau=float(rec["tau"]), status=rec["status"],
                error=rec["error"]))
    return rows


def write_summary_json(report: EvalReport, path) -> None:
    doc = {
        "schema_version": report.schema_version,
        "config": report.config,
        "estimators": list(report.estimator_order),
        "summary": report.summary,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- parameter sweep ---


@dataclass
class SweepCell:
    gamma: float
    zeta: float
    rmse: float | None
    mae: float | None
    n_ok: int = 0
    status: str = "ok"
    error: str = ""


@dataclass
class SweepResult:
    config: dict
    cells: list
    sim_seeds: list
    schema_version: int = SCHEMA_VERSION

    @property
    def rmse_ratio(self):
        """max/min RMSE over successful cells (stability diagnostic)."""
        vals = [c.rmse for c in self.cells if c.status == "ok" and c.rmse]
        if not vals:
            return None
        return max(vals) / min(vals)


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gamma", "zeta", "rmse", "mae", "n_ok", "status", "error"])
        for c in result.cells:
            writer.writerow([_fmt(c.gamma), _fmt(c.zeta), _fmt(c.rmse),
                             _fmt(c.mae), c.n_ok, c.status, c.error])


def write_sweep_summary_json(result: SweepResult, path) -> None:
    doc = {
        "schema_version": result.schema_version,
        "config": result.config,
        "sim_seeds": result.sim_seeds,
        "rmse_ratio_max_over_min": result.rmse_ratio,
        "cells": [{"gamma": c.gamma, "zeta": c.zeta, "rmse": c.rmse,
                   "mae": c.mae, "n_ok": c.n_ok, "status": c.status,
                   "error": c.error} for c in result.cells],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

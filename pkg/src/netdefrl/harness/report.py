"""Persisting experiment results: per-run CSV, summary, plot series."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict

from .experiment import (OUTCOMES, ExperimentConfig, ExperimentResult, RunResult, classify_outcome,
                         summarize)

RUNS_HEADER = ("seed", "preserved_nodes", "critical_compromised", "outcome")
CURVE_HEADER = ("episode", "return", "preserved_nodes", "critical_compromised")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def runs_csv(runs, baseline: int) -> str:
    rows = [(r.seed, r.preserved_nodes, int(r.critical_compromised), classify_outcome(r, baseline))
            for r in sorted(runs, key=lambda r: r.seed)]
    return _csv_text(RUNS_HEADER, rows)


def curve_csv(curve) -> str:
    return _csv_text(CURVE_HEADER, [(e, repr(float(ret)), p, int(c)) for e, ret, p, c in curve])


def summary_doc(result: ExperimentResult) -> dict:
    doc = asdict(result.summary)
    doc["name"] = result.config.name
    doc["failed_seeds"] = [f["seed"] for f in result.failed]
    doc["candidates"] = result.candidates
    return doc


def plot_doc(result: ExperimentResult) -> dict:
    s = result.summary
    runs = sorted(result.runs, key=lambda r: r.seed)
    doc = {
        "outcome_bars": {
            "labels": list(OUTCOMES),
            "percent": [s.pct_no_impact, s.pct_fewer_preserved, s.pct_compromised],
        },
        "preserved_per_run": {
            "seed": [r.seed for r in runs],
            "preserved": [r.preserved_nodes for r in runs],
            "baseline": s.baseline_preserved,
        },
    }
    curves = [r.curve for r in runs if r.curve]
    if curves:
        n = min(len(c) for c in curves)
        doc["mean_return_curve"] = {
            "episode": list(range(n)),
            "mean_return": [sum(c[i][1] for c in curves) / len(curves) for i in range(n)],
        }
    return doc


def results_doc(result: ExperimentResult) -> dict:
    return {
        "config": result.config.to_dict(),
        "baseline_preserved": result.summary.baseline_preserved,
        "oracle_actions": result.oracle_actions,
        "candidates": result.candidates,
        "failed": result.failed,
        "runs": [
            {"seed": r.seed, "preserved_nodes": r.preserved_nodes,
             "critical_compromised": r.critical_compromised, "actions": r.actions,
             "wall_time": r.wall_time, "curve": [list(row) for row in r.curve]}
            for r in result.runs
        ],
    }


def result_from_doc(doc: dict) -> ExperimentResult:
    cfg = ExperimentConfig.from_dict(doc["config"])
    runs = [RunResult(r["seed"], r["preserved_nodes"], r["critical_compromised"], r["actions"],
                      r.get("wall_time", 0.0), [tuple(row) for row in r.get("curve", [])])
            for r in doc["runs"]]
    failed = doc.get("failed", [])
    return ExperimentResult(cfg, runs, summarize(runs, doc["baseline_preserved"], len(failed)), failed,
                            doc.get("candidates"), doc.get("oracle_actions"))


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_reports(result: ExperimentResult, out_dir: str) -> None:
    """runs.csv, summary.json, plot_data.json and per-run curve CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "runs.csv"), runs_csv(result.runs, result.summary.baseline_preserved))
    _write(os.path.join(out_dir, "summary.json"), _json_text(summary_doc(result)))
    _write(os.path.join(out_dir, "plot_data.json"), _json_text(plot_doc(result)))
    curve_dir = os.path.join(out_dir, "curves")
    if result.runs:
        os.makedirs(curve_dir, exist_ok=True)
    for r in result.runs:
        _write(os.path.join(curve_dir, f"run_{r.seed}.csv"), curve_csv(r.curve))


def write_all(result: ExperimentResult, out_dir: str) -> None:
    write_reports(result, out_dir)
    _write(os.path.join(out_dir, "results.json"), _json_text(results_doc(result)))


def report(results_path: str, out_dir: str | None = None) -> ExperimentResult:
    """Regenerate the report files from a saved ``results.json``."""
    with open(results_path, encoding="utf-8") as fh:
        result = result_from_doc(json.load(fh))
    write_reports(result, out_dir or os.path.dirname(os.path.abspath(results_path)))
    return result

"""Run artifacts: convergence CSV, JSON report, manifest and summaries.

Numbers are written as decimal text with 12 significant digits and LF line
endings.  Existing files are never overwritten unless ``force`` is given.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .benchmarks import reference_solution
from .errors import ConfigError
from .estimator import HISTORY_FIELDS, ConvergenceHistory, HistoryRow

SCHEMA = "rare-ring/1"


def fmt(v) -> str:
    """12-significant-digit decimal text; integers stay integral."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def _json_value(v):
    # JSON has no inf/nan; keep them readable and reversible
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, np.ndarray):
        return _json_value(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(fmt(v))
    return v


def _check_target(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)


def _write_bytes(path: Path, data: bytes, force: bool) -> dict:
    _check_target(path, force)
    with open(path, "wb") as fh:
        fh.write(data)
    return manifest_entry(path)


def manifest_entry(path) -> dict:
    path = Path(path)
    data = path.read_bytes()
    return {"file": path.name, "size": len(data), "sha256": hashlib.sha256(data).hexdigest()}


def history_csv_text(history: ConvergenceHistory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for row in history:
        writer.writerow([fmt(getattr(row, name)) for name in HISTORY_FIELDS])
    return buf.getvalue()


def write_history_csv(history: ConvergenceHistory, path, force: bool = False) -> dict:
    """Header plus one row per record; returns the manifest entry."""
    if len(history) == 0:
        raise ConfigError("history is empty")
    return _write_bytes(Path(path), history_csv_text(history).encode(), force)


def read_history_csv(path) -> ConvergenceHistory:
    history = ConvergenceHistory()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            history.append(HistoryRow(
                n_sim=int(rec["n_sim"]),
                psi=float(rec["psi"]),
                label=rec["label"],
                p_hat=float(rec["p_hat"]),
                cov=float(rec["cov"]),
                r_inner=float(rec["r_inner"]),
                r_outer=float(rec["r_outer"]),
                n_rare=int(rec["n_rare"]),
            ))
    return history


def _reference_ratio(cfg, final) -> dict:
    if cfg.benchmark is None:
        return {}
    ref = reference_solution(cfg.benchmark).p_f
    out = {"p_ref": ref}
    for rec in final:
        if rec.label.name == "failure":
            out["ratio"] = rec.p_hat / ref
    return out


def report_dict(result) -> dict:
    from .driver import config_dict

    cfg = result.config
    return _json_value({
        "schema": SCHEMA,
        "config": config_dict(cfg),
        "termination": result.termination,
        "n_sim": result.n_sim,
        "estimates": [rec.to_dict() for rec in result.final],
        "localized": [rec.to_dict() for rec in result.localized],
        "sensitivities": [s.to_dict() for s in result.sensitivities],
        "reference": _reference_ratio(cfg, result.final),
        "history": [{name: getattr(row, name) for name in HISTORY_FIELDS} for row in result.history],
        "origins": result.origins,
        "ed": result.ed.to_dict(),
    })


REQUIRED_KEYS = {
    "schema": str,
    "config": dict,
    "termination": str,
    "n_sim": int,
    "estimates": list,
    "localized": list,
    "sensitivities": list,
    "reference": dict,
    "history": list,
    "ed": dict,
}


def validate_report(data: dict) -> None:
    """Raise ``ConfigError`` unless ``data`` follows the report schema."""
    for key, typ in REQUIRED_KEYS.items():
        if key not in data:
            raise ConfigError(f"report lacks {key!r}")
        if not isinstance(data[key], typ):
            raise ConfigError(f"report field {key!r} should be {typ.__name__}")
    if data["schema"] != SCHEMA:
        raise ConfigError(f"unsupported schema {data['schema']!r}")
    if data["termination"] not in ("budget", "psi_stop", "user"):
        raise ConfigError("unknown termination reason")
    for rec in data["estimates"]:
        for key in ("label", "p_hat", "cov", "n_is", "method"):
            if key not in rec:
                raise ConfigError(f"estimate record lacks {key!r}")
    for key in ("dim", "points", "codes", "labels"):
        if key not in data["ed"]:
            raise ConfigError(f"design lacks {key!r}")


def write_report_json(result, path, force: bool = False) -> dict:
    text = json.dumps(report_dict(result), indent=1, sort_keys=True) + "\n"
    return _write_bytes(Path(path), text.encode(), force)


def write_run(result, out_dir, fmt_: str = "csv", force: bool = False) -> list[dict]:
    """Write the artifacts of one run plus ``manifest.json``."""
    out = Path(out_dir)
    if fmt_ not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    targets = ["history.csv", "ed.csv"] if fmt_ == "csv" else ["report.json"]
    for name in [*targets, "manifest.json"]:
        _check_target(out / name, force)
    entries = []
    if fmt_ == "csv":
        entries.append(write_history_csv(result.history, out / "history.csv", force))
        entries.append(_write_bytes(out / "ed.csv", result.ed.to_csv().encode(), force))
    else:
        entries.append(write_report_json(result, out / "report.json", force))
    manifest = {"schema": SCHEMA, "files": entries}
    _write_bytes(out / "manifest.json", (json.dumps(manifest, indent=1) + "\n").encode(), force)
    return entries


def verify_manifest(out_dir) -> bool:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    return all(manifest_entry(out / e["file"]) == e for e in manifest["files"])


SUMMARY_COLUMNS = ("name", "n_sim", "p_hat", "cov", "ratio")


def summarize(results) -> str:
    """Median estimate, stopping size and CoV per benchmark, as a text table."""
    results = list(results)
    if not results:
        raise ConfigError("nothing to summarize")
    groups: dict[str, list] = {}
    for res in results:
        name = res.config.benchmark or res.config.command or "external"
        groups.setdefault(name, []).append(res)
    lines = ["{:<16} {:>7} {:>14} {:>10} {:>8}".format(*SUMMARY_COLUMNS)]
    for name, group in groups.items():
        p = np.median([r.p_hat for r in group])
        n = np.median([r.n_sim for r in group])
        covs = [r.estimate().cov if r.estimate() else math.inf for r in group]
        cov = float(np.median(covs))
        ratio = math.nan
        if group[0].config.benchmark is not None:
            ratio = p / reference_solution(group[0].config.benchmark).p_f
        lines.append(f"{name:<16} {n:>7g} {p:>14.6g} {cov:>10.4g} {ratio:>8.4g}")
    return "\n".join(lines) + "\n"


def default_out_dir() -> Path:
    return Path(os.environ.get("RARE_RING_OUT", "rare_ring_out"))

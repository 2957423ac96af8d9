"""
Artifact writers.

Structured results are JSON (sorted keys, floats in repr form); curves and
sample tables are CSV or JSON rows. Nothing time- or host-dependent is
written, so reruns with the same config and seeds give identical bytes.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .family import UnitaryGroupClosure, classify_transitivity, is_unique_invariant

logger = logging.getLogger(__name__)


ATLAS = "atlas.json"
CHI = "chi.json"
GROUP = "group.json"
FAMILY = "family.json"
INVARIANCE = "invariance.json"
SUMMARY = "summary.json"


def plain(obj):
    """JSON-ready copy: numpy scalars and arrays unwrapped, complex as [re, im], non-finite as strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [plain(float(obj.real)), plain(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(plain(doc), indent=2, sort_keys=True) + "\n")
    logger.debug("wrote %s", path)
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def _cell(value) -> str:
    value = plain(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
    logger.debug("wrote %s (%d rows)", path, len(rows))
    return path


def write_rows(out_dir, stem: str, rows: Sequence[dict], fmt: str = "csv",
               columns: Optional[Sequence[str]] = None) -> Path:
    """Tabular artifact as stem.csv or stem.json."""
    out_dir = Path(out_dir)
    if fmt == "csv":
        return write_csv(out_dir / f"{stem}.csv", rows, columns)
    if fmt == "json":
        return write_json(out_dir / f"{stem}.json", {"rows": list(rows)})
    raise ConfigError(f"unknown artifact format {fmt!r}")


# =============================================================================
# SUMMARY
# =============================================================================

def _matrices(docs) -> list:
    arrs = [np.asarray(m, dtype=np.float64) for m in docs]
    return [a[..., 0] + 1j * a[..., 1] for a in arrs]


def _group_from_doc(doc: dict) -> UnitaryGroupClosure:
    return UnitaryGroupClosure(
        int(doc["r_m"]),
        _matrices(doc["generators"]),
        doc["kind"],
        _matrices(doc.get("elements", [])),
        int(doc.get("lie_dim", 0)),
    )


def build_summary(atlas_doc: dict, chi_doc: dict, group_doc: dict,
                  invariance_doc: Optional[dict] = None, family_doc: Optional[dict] = None,
                  name: str = "") -> dict:
    """Pipeline verdicts, computed only from stage documents."""
    group = _group_from_doc(group_doc)
    verdict = classify_transitivity(group)
    weights = [a["weight"] for a in chi_doc["atoms"]]
    summary = {
        "name": name,
        "r_m": atlas_doc["r_m"],
        "atlas_size": len(atlas_doc["representatives"]),
        "chi_support": len(weights),
        "chi_weights": weights,
        "group_kind": group.kind,
        "group_order": group.order,
        "lie_dim": group.lie_dim,
        "transitivity": verdict,
        "unique_invariant_measure": is_unique_invariant(verdict),
    }
    if "period" in chi_doc:
        summary["period"] = chi_doc["period"]
    if family_doc is not None and "smartness" in family_doc:
        summary["smart_certified"] = family_doc["smartness"]["certified"]
    if invariance_doc is not None:
        summary["invariance_w1"] = invariance_doc["w1"]
        summary["invariance_se"] = invariance_doc["bootstrap_se"]
        summary["invariance_excess"] = invariance_doc["excess"]
    return summary


def summary_from_artifacts(out_dir) -> dict:
    """Re-derive the pipeline summary from the stage documents in out_dir."""
    out_dir = Path(out_dir)
    docs = {}
    for key in (ATLAS, CHI, GROUP):
        path = out_dir / key
        if not path.exists():
            raise FileNotFoundError(f"missing stage artifact: {path}")
        docs[key] = read_json(path)
    optional = {key: read_json(out_dir / key) if (out_dir / key).exists() else None
                for key in (INVARIANCE, FAMILY)}
    name = ""
    if (out_dir / SUMMARY).exists():
        name = read_json(out_dir / SUMMARY).get("name", "")
    return build_summary(docs[ATLAS], docs[CHI], docs[GROUP], optional[INVARIANCE], optional[FAMILY], name)

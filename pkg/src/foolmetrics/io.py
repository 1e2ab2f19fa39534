"""File formats owned by the metrics and analysis layers.

Records are JSON Lines: one object per record with keys ``id``,
``pre_label``, ``post_ranking``, ``pre_label_rank`` and optionally
``target_label``.  An optional first line ``{"_meta": {...}}`` carries the
attack name, model name, class count and free-form metadata.  Every writer
here is deterministic, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io as _io
import json
from os import PathLike
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import CategorySubset, ComparisonReport
from .errors import InvariantViolation, ParseError
from .metrics import PredictionRecord, RecordSet

TOOL = "foolmetrics"
META_KEY = "_meta"
RECORD_KEYS = ("id", "pre_label", "post_ranking", "pre_label_rank")


def provenance(seed: Optional[int] = None, **extra) -> dict:
    return {"tool": TOOL, "version": __version__, "seed": seed, **extra}


def header_line(prov: dict) -> str:
    """One-line ``key=value`` summary of a provenance dict, for ``#`` comments."""
    parts = [f"{prov.get('tool', TOOL)} {prov.get('version', __version__)}"]
    parts += [f"{k}={prov[k]}" for k in sorted(prov) if k not in ("tool", "version")]
    return " ".join(parts)


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: Optional[int] = 2) -> str:
    return json.dumps(obj, indent=indent, sort_keys=True, default=_jsonable) + "\n"


# -- records -----------------------------------------------------------------

def record_to_dict(r: PredictionRecord) -> dict:
    d = {
        "id": r.record_id,
        "pre_label": r.pre_label,
        "post_ranking": list(r.post_ranking),
        "pre_label_rank": r.pre_label_rank,
    }
    if r.target_label is not None:
        d["target_label"] = r.target_label
    return d


def format_records(rs: RecordSet, with_meta: bool = True) -> str:
    lines = []
    if with_meta:
        meta = {"attack": rs.attack, "model": rs.model, "class_count": rs.class_count, "meta": rs.meta}
        lines.append(json.dumps({META_KEY: meta}, sort_keys=True, default=_jsonable))
    for r in rs.records:
        lines.append(json.dumps(record_to_dict(r)))
    return "\n".join(lines) + "\n"


def write_records(rs: RecordSet, path: str | PathLike, with_meta: bool = True) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_records(rs, with_meta))


def _int_field(obj, key, path, lineno):
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{key!r} must be an integer, got {v!r}", path, lineno)
    return v


def _record_from_obj(obj, path, lineno) -> PredictionRecord:
    missing = [k for k in RECORD_KEYS if k not in obj]
    if missing:
        raise ParseError(f"missing keys {missing}", path, lineno)
    unknown = sorted(set(obj) - set(RECORD_KEYS) - {"target_label"})
    if unknown:
        raise ParseError(f"unknown keys {unknown}", path, lineno)
    rid = obj["id"]
    if not isinstance(rid, (str, int)) or isinstance(rid, bool):
        raise ParseError(f"'id' must be a string or integer, got {rid!r}", path, lineno)
    ranking = obj["post_ranking"]
    if not isinstance(ranking, list) or any(isinstance(c, bool) or not isinstance(c, int) for c in ranking):
        raise ParseError("'post_ranking' must be a list of integers", path, lineno)
    target = obj.get("target_label")
    if target is not None:
        target = _int_field(obj, "target_label", path, lineno)
    try:
        return PredictionRecord(str(rid), _int_field(obj, "pre_label", path, lineno), tuple(ranking),
                                _int_field(obj, "pre_label_rank", path, lineno), target)
    except InvariantViolation as exc:
        raise InvariantViolation(exc.message, exc.record_id, path, lineno) from None


def parse_records(text: str, path: Optional[str] = None, class_count: Optional[int] = None) -> RecordSet:
    """Parse a JSON Lines record file.

    Syntax problems raise :class:`ParseError` with the line number; records
    that parse but break a record invariant raise
    :class:`InvariantViolation` naming the record id.  The class count comes
    from ``class_count``, else the meta line, else the first ranking.
    """
    meta = {}
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path, lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("each line must be a JSON object", path, lineno)
        if META_KEY in obj:
            if records or meta:
                raise ParseError(f"{META_KEY!r} line must come first", path, lineno)
            meta = obj[META_KEY]
            if not isinstance(meta, dict):
                raise ParseError(f"{META_KEY!r} must be an object", path, lineno)
            continue
        records.append(_record_from_obj(obj, path, lineno))
    c = class_count or meta.get("class_count")
    if c is None:
        if not records:
            raise ParseError("no records and no class count", path)
        c = len(records[0].post_ranking)
    try:
        return RecordSet(records, int(c), attack=meta.get("attack", ""), model=meta.get("model", ""),
                         meta=meta.get("meta", {}))
    except InvariantViolation as exc:
        raise InvariantViolation(exc.message, exc.record_id, path) from None


def read_records(path: str | PathLike, class_count: Optional[int] = None) -> RecordSet:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh.read(), str(path), class_count)


# -- subsets -----------------------------------------------------------------

def parse_subsets(text: str, path: Optional[str] = None) -> list[CategorySubset]:
    """``{name: [class ids]}`` -> subsets, in name order.  An optional
    ``_meta`` key holds provenance and is skipped."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("subset file must hold a JSON object", path)
    out = []
    for name in sorted(obj):
        if name == META_KEY:
            continue
        ids = obj[name]
        if not isinstance(ids, list) or any(isinstance(c, bool) or not isinstance(c, int) for c in ids):
            raise ParseError(f"subset {name!r} must be a list of integers", path)
        out.append(CategorySubset(name, frozenset(ids)))
    return out


def read_subsets(path: str | PathLike) -> list[CategorySubset]:
    with open(path, encoding="utf-8") as fh:
        return parse_subsets(fh.read(), str(path))


def format_subsets(subsets: Iterable[CategorySubset], prov: Optional[dict] = None) -> str:
    doc = {s.name: sorted(s.members) for s in subsets}
    if prov is not None:
        doc[META_KEY] = prov
    return dumps(doc)


# -- reports and curves ------------------------------------------------------

def report_document(report: ComparisonReport, prov: Optional[dict] = None) -> dict:
    doc = report.as_dict()
    if prov is not None:
        doc["provenance"] = prov
    return doc


def format_report(report: ComparisonReport, prov: Optional[dict] = None) -> str:
    return dumps(report_document(report, prov))


def _csv(header: Sequence[str], rows, prov: Optional[dict]) -> str:
    buf = _io.StringIO()
    if prov is not None:
        buf.write(f"# {header_line(prov)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def format_fr_curve(curve, prov: Optional[dict] = None) -> str:
    return _csv(["K", "fr_at_k"], [(int(k), repr(float(v))) for k, v in curve], prov)


def format_sweep(sweep, prov: Optional[dict] = None) -> str:
    return _csv(["threshold", "mean_qi"], [(repr(float(t)), repr(float(v))) for t, v in sweep], prov)


def format_percentiles(curve, prov: Optional[dict] = None) -> str:
    return _csv(["percentile", "value"], [(int(p), repr(float(v))) for p, v in curve], prov)


def format_report_csv(report: ComparisonReport, prov: Optional[dict] = None) -> str:
    body = report.to_csv()
    return (f"# {header_line(prov)}\n" if prov is not None else "") + body


def write_text(path: str | PathLike, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)

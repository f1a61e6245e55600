"""Trace, manifest and iterate files.

Trace CSV columns, in order::

    k, lambda, residual, error, inner_iters, cum_linear_solves

``error`` is empty when the problem has no ground truth. JSON traces hold the
same fields per record plus the run header (method, stop reason, ``k_star``,
``delta``, ``tau``, initial residual and error). CSV numbers carry 17
significant digits; JSON floats use Python's shortest round-trip repr. Both
read back bit-identically.

The manifest (``<trace>.manifest.json``) snapshots the solver config and the
problem descriptor, which is enough to rebuild the problem exactly. Iterates
``x_0 .. x_k`` go to ``<trace>.iterates.npz`` under the key ``iterates``.
"""

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .iteration import STOP_REASONS, IterationRecord, RunTrace

__all__ = [
    "TRACE_COLUMNS",
    "TraceFormatError",
    "write_trace",
    "read_trace",
    "write_manifest",
    "read_manifest",
    "manifest_path",
    "iterates_path",
    "write_iterates",
    "read_iterates",
]

TRACE_COLUMNS = ("k", "lambda", "residual", "error", "inner_iters", "cum_linear_solves")
HEADER_FIELDS = ("method", "stop_reason", "k_star", "delta", "tau",
                 "initial_residual", "initial_error")


class TraceFormatError(ValueError):
    """A trace or manifest file is missing fields or holds unparsable values."""


def manifest_path(trace_path):
    p = Path(trace_path)
    return p.with_name(p.stem + ".manifest.json")


def iterates_path(trace_path):
    p = Path(trace_path)
    return p.with_name(p.stem + ".iterates.npz")


def _fmt(x):
    return "" if x is None else format(float(x), ".17g")


def _row(rec):
    return (rec.k, rec.lam, rec.residual, rec.error, rec.inner_iterations,
            rec.cumulative_linear_solves)


def trace_header(trace):
    return dict(method=trace.method, stop_reason=trace.stop_reason, k_star=trace.k_star,
                delta=trace.delta, tau=trace.tau, initial_residual=trace.initial_residual,
                initial_error=trace.initial_error)


def write_trace(trace, path, fmt=None):
    """Write ``trace`` as CSV or JSON (chosen by ``fmt`` or the file suffix)."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for rec in trace.records:
                k, lam, res, err, inner, cum = _row(rec)
                w.writerow([k, _fmt(lam), _fmt(res), _fmt(err), inner, cum])
    elif fmt == "json":
        doc = dict(trace_header(trace))
        doc["message"] = trace.message
        doc["records"] = [dict(zip(TRACE_COLUMNS, _row(rec))) for rec in trace.records]
        path.write_text(json.dumps(doc, indent=1) + "\n")
    else:
        raise ValueError("unknown trace format {!r}".format(fmt))
    return path


def _records_from_rows(rows):
    records, prev_cum = [], 0
    for i, row in enumerate(rows):
        try:
            k = int(row["k"])
            err = row["error"]
            cum = int(row["cum_linear_solves"])
            rec = IterationRecord(
                k=k, lam=float(row["lambda"]), residual=float(row["residual"]),
                error=None if err in ("", None) else float(err),
                inner_iterations=int(row["inner_iters"]), cumulative_linear_solves=cum,
                linear_solves=cum - prev_cum)
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError("bad trace row {}: {}".format(i + 1, exc)) from None
        if k != i + 1:
            raise TraceFormatError("row {} has k={}, expected {}".format(i + 1, k, i + 1))
        prev_cum = cum
        records.append(rec)
    return records


def read_trace(path, header=None):
    """Read a trace file back into a :class:`RunTrace`.

    CSV files carry no header; pass ``header`` (the manifest's ``trace``
    entry) to restore method, stop reason and initial values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TraceFormatError(str(exc)) from None
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
            rows = doc["records"]
        except (ValueError, KeyError, TypeError) as exc:
            raise TraceFormatError("malformed JSON trace: {}".format(exc)) from None
        head = {k: doc.get(k) for k in HEADER_FIELDS}
        message = doc.get("message", "")
    else:
        reader = csv.DictReader(text.splitlines())
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise TraceFormatError("CSV columns {} != {}".format(reader.fieldnames,
                                                                TRACE_COLUMNS))
        rows = list(reader)
        head = dict(header or {})
        message = head.pop("message", "")
    missing = [k for k in HEADER_FIELDS if k not in head]
    if missing:
        raise TraceFormatError("trace header lacks {}".format(missing))
    if head["stop_reason"] not in STOP_REASONS:
        raise TraceFormatError("unknown stop_reason {!r}".format(head["stop_reason"]))
    try:
        trace = RunTrace(
            method=head["method"], delta=float(head["delta"]), tau=float(head["tau"]),
            initial_residual=float(head["initial_residual"]),
            initial_error=None if head["initial_error"] is None else float(head["initial_error"]),
            records=_records_from_rows(rows), stop_reason=head["stop_reason"],
            k_star=None if head["k_star"] is None else int(head["k_star"]), message=message)
    except (TypeError, ValueError) as exc:
        raise TraceFormatError("bad trace header: {}".format(exc)) from None
    return trace


def write_iterates(trace, path):
    np.savez_compressed(path, iterates=np.array(trace.iterates))
    return Path(path)


def read_iterates(path):
    with np.load(path) as data:
        return list(data["iterates"])


def now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, trace, problem, config, trace_file, started, version,
                   iterates_file=None):
    doc = dict(
        format="rrnit-manifest",
        library_version=version,
        started=started,
        finished=now(),
        seed=problem.seed,
        problem=problem.descriptor,
        config=config.to_dict(),
        trace_file=Path(trace_file).name,
        iterates_file=None if iterates_file is None else Path(iterates_file).name,
        trace=dict(trace_header(trace), message=trace.message),
        summary=dict(iterations=trace.iterations,
                     total_linear_solves=trace.total_linear_solves,
                     final_residual=float(trace.residuals[-1]),
                     final_error=None if trace.errors is None else float(trace.errors[-1])),
    )
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
    return Path(path)


def read_manifest(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise TraceFormatError("cannot read manifest {}: {}".format(path, exc)) from None
    for key in ("problem", "config", "trace"):
        if key not in doc:
            raise TraceFormatError("manifest lacks {!r}".format(key))
    return doc

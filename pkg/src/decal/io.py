"""Reading and writing datasets, models and reports."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .core import CalibrationDataset, InvalidInputError, SIMPLEX_ATOL, softmax


class DatasetFormatError(InvalidInputError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _parse_header(header):
    cols = [h.strip() for h in header]
    if "label" not in cols:
        raise DatasetFormatError("header needs a 'label' column", 1)
    feats = cols[:cols.index("label")]
    rest = cols[cols.index("label") + 1:]
    if not feats or rest not in ([], ["weight"]):
        raise DatasetFormatError("expected p0..p{C-1} or l0..l{C-1}, then label[,weight]", 1)
    prefix = feats[0][:1]
    if prefix not in ("p", "l") or feats != [f"{prefix}{i}" for i in range(len(feats))]:
        raise DatasetFormatError("expected p0..p{C-1} or l0..l{C-1}, then label[,weight]", 1)
    return prefix, len(feats), bool(rest)


def read_csv_table(path):
    """Parse a prediction CSV into ``(kind, values, labels, weights, lines)``.

    ``kind`` is ``"p"`` for probability columns and ``"l"`` for logits;
    ``lines`` holds the file line number of each data row.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("file is empty", 1) from None
        kind, C, has_weight = _parse_header(header)
        width = C + 1 + has_weight
        values, labels, weights, lines = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise DatasetFormatError(f"expected {width} fields, got {len(row)}", line)
            try:
                vals = [float(v) for v in row[:C]]
                lab = float(row[C])
                wt = float(row[C + 1]) if has_weight else 1.0
            except ValueError as exc:
                raise DatasetFormatError(str(exc), line) from None
            if not np.all(np.isfinite(vals)) or lab != int(lab) or not 0 <= lab < C:
                raise DatasetFormatError("non-finite value or invalid label", line)
            if not wt > 0:
                raise DatasetFormatError("weight must be positive", line)
            values.append(vals)
            labels.append(int(lab))
            weights.append(wt)
            lines.append(line)
    if not values:
        raise DatasetFormatError("no data rows")
    return kind, np.array(values), np.array(labels), np.array(weights), lines


def _to_probabilities(kind, values, renormalize, lines=None):
    if kind == "l":
        return softmax(values, axis=1)
    s = values.sum(axis=1)
    bad = (np.abs(s - 1) > SIMPLEX_ATOL) | np.any(values < -SIMPLEX_ATOL, axis=1)
    if np.any(bad) and not renormalize:
        i = int(np.flatnonzero(bad)[0])
        raise DatasetFormatError(f"probabilities sum to {s[i]:.8g}; pass renormalize to fix",
                                 lines[i] if lines else None)
    if renormalize:
        values = np.clip(values, 0, None)
        s = values.sum(axis=1, keepdims=True)
        if np.any(s <= 0):
            raise DatasetFormatError("row has no positive probability")
        values = values / s
    return values


def load_dataset(path, format=None, renormalize=False):
    """Load a :class:`CalibrationDataset` from CSV or JSON.

    CSV: header ``p0,...,p{C-1},label[,weight]`` (or ``l0,...`` for logits,
    converted by softmax). JSON: ``{"predictions": [[...]], "labels": [...],
    "weights": [...]}`` with ``"logits"`` accepted in place of predictions.
    """
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "csv":
        kind, values, labels, weights, lines = read_csv_table(path)
    elif fmt == "json":
        d = json.loads(path.read_text())
        if "logits" in d:
            kind, values = "l", np.asarray(d["logits"], dtype=float)
            lines = None
        else:
            kind, values = "p", np.asarray(d["predictions"], dtype=float)
            lines = None
        labels = np.asarray(d["labels"])
        weights = np.asarray(d["weights"], dtype=float) if "weights" in d else None
        if values.ndim != 2:
            raise DatasetFormatError("predictions must be a list of rows")
    else:
        raise InvalidInputError(f"unknown format {fmt!r}")
    return CalibrationDataset(_to_probabilities(kind, values, renormalize, lines), labels, weights)


def load_logits(path):
    """Read a logits CSV (``l0,...`` header) as ``(logits, labels, weights)``."""
    kind, values, labels, weights, _ = read_csv_table(path)
    if kind != "l":
        raise DatasetFormatError("file does not contain logits (expected l0.. columns)", 1)
    return values, labels, weights


def dataset_to_csv(dataset):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"p{i}" for i in range(dataset.num_classes)] + ["label", "weight"])
    for p, y, wt in zip(dataset.predictions, dataset.labels, dataset.weights):
        w.writerow([repr(float(v)) for v in p] + [int(y), repr(float(wt))])
    return buf.getvalue()


def dataset_to_json(dataset):
    return json.dumps({"predictions": dataset.predictions.tolist(),
                       "labels": dataset.labels.tolist(),
                       "weights": dataset.weights.tolist()})


def save_dataset(dataset, path, format=None):
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    path.write_text(dataset_to_json(dataset) if fmt == "json" else dataset_to_csv(dataset))


def dumps(obj):
    """Deterministic JSON; floats use shortest round-trip repr."""
    return json.dumps(obj, sort_keys=True, indent=1)

"""Dataset ingestion and CSV writers."""
from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .errors import InvalidDatasetError
from .measure import LabeledDataset, ParticleEnsemble, SupportInterval

log = logging.getLogger(__name__)


def _fail(path, line, msg):
    raise InvalidDatasetError(f"{path}:{line}: {msg}", "io")


def _finish(path, labels, rows):
    if not rows:
        raise InvalidDatasetError(f"{path}: no data rows", "io")
    y = np.asarray(labels, dtype=float)
    uniq = set(np.unique(y).tolist())
    if uniq <= {0.0, 1.0} and 0.0 in uniq:
        log.warning("%s: labels in {0, 1} remapped to {-1, +1}", path)
        y = 2.0 * y - 1.0
    elif not uniq <= {-1.0, 1.0}:
        bad = sorted(uniq - {-1.0, 1.0})[0]
        raise InvalidDatasetError(f"{path}: label {bad:g} is not -1/+1 (or 0/1)", "io")
    return LabeledDataset(np.array(rows, dtype=float), y)


def read_csv_dataset(path) -> LabeledDataset:
    """First column is the label, the rest are features. A non-numeric first row is a header."""
    labels, rows, width = [], [], None
    with open(path, newline="") as fh:
        for line, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                if line == 1:
                    continue
                _fail(path, line, "non-numeric field")
            if len(vals) < 2:
                _fail(path, line, "need a label and at least one feature")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                _fail(path, line, f"expected {width} fields, found {len(vals)}")
            if not all(np.isfinite(vals)):
                _fail(path, line, "non-finite value")
            labels.append(vals[0])
            rows.append(vals[1:])
    return _finish(path, labels, rows)


def read_libsvm_dataset(path, n_features: int | None = None) -> LabeledDataset:
    """Sparse ``label idx:value ...`` rows with 1-based indices, expanded to dense."""
    labels, entries, top = [], [], 0
    with open(path) as fh:
        for line, text in enumerate(fh, start=1):
            text = text.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            try:
                labels.append(float(parts[0]))
                pairs = []
                for tok in parts[1:]:
                    i, v = tok.split(":", 1)
                    i = int(i)
                    if i < 1:
                        _fail(path, line, f"feature index {i} below 1")
                    pairs.append((i - 1, float(v)))
            except ValueError:
                _fail(path, line, "malformed field")
            if pairs:
                top = max(top, max(i for i, _ in pairs) + 1)
            entries.append(pairs)
    dim = n_features or top
    if n_features is not None and top > n_features:
        raise InvalidDatasetError(f"{path}: index {top} exceeds n_features={n_features}", "io")
    rows = np.zeros((len(entries), max(dim, 1)))
    for r, pairs in enumerate(entries):
        for i, v in pairs:
            rows[r, i] = v
    return _finish(path, labels, rows.tolist())


def ingest(path, fmt: str = "csv") -> LabeledDataset:
    if not Path(path).is_file():
        raise InvalidDatasetError(f"{path}: no such file", "io")
    if fmt == "csv":
        return read_csv_dataset(path)
    if fmt == "libsvm":
        return read_libsvm_dataset(path)
    raise InvalidDatasetError(f"unknown format {fmt!r}", "io")


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_dataset(path, data: LabeledDataset) -> None:
    header = ["label"] + [f"x{j}" for j in range(data.dimension)]
    write_rows(path, header, ([int(y)] + list(x) for y, x in zip(data.labels, data.features)))


def write_particles(path, ensemble: ParticleEnsemble) -> None:
    write_rows(path, ["index", "value"], enumerate(ensemble.particles.tolist()))


def read_particles(path, support: SupportInterval) -> ParticleEnsemble:
    vals = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r, None)
        for line, rec in enumerate(r, start=2):
            if not rec:
                continue
            try:
                vals.append(float(rec[1]))
            except (ValueError, IndexError):
                _fail(path, line, "expected index,value")
    try:
        return ParticleEnsemble(np.array(vals), support)
    except ValueError as exc:
        raise InvalidDatasetError(f"{path}: {exc}", "io") from exc


def write_histogram(path, grid) -> None:
    e = grid.edges
    write_rows(path, ["binLeft", "binRight", "density"],
               zip(e[:-1].tolist(), e[1:].tolist(), grid.density.tolist()))

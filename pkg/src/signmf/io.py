"""CSV/JSON readers and writers for catalogs, factors and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import CountMatrix, DispersionVector, ValidationError
from .simulation import SignatureSet

_MUTATION_TYPE = re.compile(r"^[ACGT]\[[ACGT]>[ACGT]\][ACGT]$")


def _fmt(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _read_table(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise ValidationError(f"{path}: expected a header row and at least one data row")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValidationError(f"{path}: line {i + 1} has {len(r)} fields, expected {width}")
    header = [c.strip() for c in rows[0][1:]]
    labels = [r[0].strip() for r in rows[1:]]
    values = np.empty((len(labels), len(header)))
    for i, r in enumerate(rows[1:]):
        for j, cell in enumerate(r[1:]):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: cannot parse {cell!r} at row {labels[i]!r}, column {header[j]!r}"
                ) from None
    return header, labels, values


def _looks_like_types(labels) -> bool:
    return bool(labels) and all(_MUTATION_TYPE.match(s) for s in labels)


def load_counts(path) -> CountMatrix:
    """Read a patients x mutation-types count table (either orientation)."""
    header, labels, values = _read_table(path)
    transposed = False
    if not _looks_like_types(header):
        if _looks_like_types(labels) or (len(labels) == 96 and len(header) != 96):
            transposed = True
    if transposed:
        header, labels, values = labels, header, values.T
    where = lambda i, j: f"patient {labels[i]!r}, mutation type {header[j]!r}"  # noqa: E731
    bad = np.argwhere(values < 0)
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{path}: negative count {values[i, j]:g} at {where(i, j)}")
    bad = np.argwhere(values != np.round(values))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{path}: non-integer count {values[i, j]:g} at {where(i, j)}")
    try:
        return CountMatrix(values, labels, header)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_counts(path, V: CountMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient", *V.mutation_types])
        for pid, row in zip(V.patient_ids, V.data):
            w.writerow([pid, *(str(int(x)) for x in row)])


def write_matrix(path, A, row_labels: Sequence[str], col_labels: Sequence[str],
                 corner: str = "") -> None:
    A = np.asarray(A, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner, *col_labels])
        for lab, row in zip(row_labels, A):
            w.writerow([lab, *(_fmt(x) for x in row)])


def read_matrix(path):
    """Returns ``(values, row_labels, col_labels)``."""
    header, labels, values = _read_table(path)
    return values, labels, header


def write_alphas(path, alphas: DispersionVector, patient_ids: Sequence[str]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient", "alpha"])
        for pid, a in zip(patient_ids, alphas.alphas):
            w.writerow([pid, _fmt(a)])


def read_alphas(path) -> DispersionVector:
    values, _, _ = read_matrix(path)
    return DispersionVector(values[:, 0])


def load_signatures(path) -> SignatureSet:
    """Reference signatures; orientation is whichever axis sums to one."""
    header, labels, values = _read_table(path)
    col_ok = np.all(np.abs(values.sum(axis=0) - 1.0) <= 1e-6)
    row_ok = np.all(np.abs(values.sum(axis=1) - 1.0) <= 1e-6)
    if col_ok and not (row_ok and _looks_like_types(header)):
        # rows are mutation types, columns are signatures
        return SignatureSet(tuple(header), tuple(labels), values.T)
    if row_ok:
        return SignatureSet(tuple(labels), tuple(header), values)
    raise ValidationError(f"{path}: no axis of the signature table sums to 1")


def write_signatures(path, sigs: SignatureSet) -> None:
    write_matrix(path, sigs.matrix.T, sigs.mutation_types, sigs.names, corner="Type")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_residuals(path, report, patient_ids, mutation_types) -> None:
    """Cell-level residual table for external plotting."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient", "mutation_type", "fitted_mean", "raw", "sigma", "normalized"])
        N, M = report.raw.shape
        for n in range(N):
            for m in range(M):
                w.writerow([patient_ids[n], mutation_types[m], _fmt(report.fitted_mean[n, m]),
                            _fmt(report.raw[n, m]), _fmt(report.sigma[n, m]),
                            _fmt(report.normalized[n, m])])

"""CSV ingestion, canonical emission, atomic writes, and report serialization.

The data schema is `id, p, x1[, x2, ...]` with a header row. Canonical files
are sorted by id and use %.17g floats, so ingest followed by emit is
byte-identical on them. All writes go through a temp file plus rename, so an
interrupted run never leaves a truncated artifact.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .engine import RejectionReport


class IngestError(ValueError):
    """Malformed or out-of-contract input data."""


@dataclass(frozen=True)
class Dataset:
    ids: tuple[str, ...]
    p: np.ndarray
    x: np.ndarray | None
    covariate_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.ids)


def ingest_csv(path) -> Dataset:
    """Parse and validate a `id, p, x1[, x2, ...]` file."""
    try:
        with open(path, "r", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    expected = ["id", "p"] + [f"x{i}" for i in range(1, len(header) - 1)]
    if len(header) < 2 or header != expected:
        raise IngestError(
            f"{path}: expected header id, p, x1, x2, ... but found {', '.join(header)}"
        )
    if len(rows) == 1:
        raise IngestError(f"{path}: no data rows")
    n_cov = len(header) - 2
    ids: list[str] = []
    p: list[float] = []
    x: list[list[float]] = []
    bad_p: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise IngestError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        rid = row[0].strip()
        try:
            pv = float(row[1])
            cov = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise IngestError(f"{path}: row {lineno} ({rid}): {exc}") from exc
        if not 0.0 <= pv <= 1.0:
            bad_p.append(rid)
        ids.append(rid)
        p.append(pv)
        x.append(cov)
    if bad_p:
        raise IngestError(f"{path}: p outside [0, 1] for ids: {', '.join(bad_p)}")
    xs = np.array(x, dtype=float) if n_cov else None
    return Dataset(
        ids=tuple(ids),
        p=np.array(p, dtype=float),
        x=xs,
        covariate_names=tuple(header[2:]),
    )


def _fmt(v: float) -> str:
    return "%.17g" % v


def emit_csv(dataset: Dataset, path) -> None:
    """Write the dataset in canonical form: ids sorted, %.17g floats."""
    order = sorted(range(dataset.n), key=lambda i: dataset.ids[i])
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "p", *dataset.covariate_names])
    for i in order:
        row = [dataset.ids[i], _fmt(dataset.p[i])]
        if dataset.x is not None:
            row.extend(_fmt(v) for v in dataset.x[i])
        writer.writerow(row)
    write_text_atomic(path, buf.getvalue())


def write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_json(report: RejectionReport, seed, extra: dict | None = None) -> str:
    """Serialize the run outcome: rejected ids, trajectory, seed, config echo."""
    payload = {
        "rejected": list(report.rejected),
        "n_rejected": len(report.rejected),
        "trajectory": [
            {"t": t, "a": a, "r": r, "fdr_hat": f} for (t, a, r, f) in report.trajectory
        ],
        "stop_t": report.stop_t,
        "seed": seed,
        "config": report.config,
        "model": report.model,
    }
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_rejections_csv(path, rows) -> None:
    """Rows of (id, noisy_p, threshold) for the rejected hypotheses."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "noisy_p", "threshold"])
    for rid, noisy_p, threshold in rows:
        writer.writerow([rid, _fmt(noisy_p), _fmt(threshold)])
    write_text_atomic(path, buf.getvalue())

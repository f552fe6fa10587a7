"""Paired input/output time series and their CSV form.

CSV layout: ``timestamp,P_1,Q_1,...,P_p,Q_p,<output columns>`` (RFC-4180,
UTF-8, ``.`` decimal separator).  Input columns are recognised by their
``P_``/``Q_`` prefix; everything after them is an output column.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, ConfigError


@dataclass
class Dataset:
    timestamps: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    input_names: list[str] = field(default_factory=list)
    output_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        self.Y = Y.reshape(len(Y), -1) if Y.ndim < 2 else Y
        n = len(self.timestamps)
        if self.X.shape[0] != n or self.Y.shape[0] != n:
            raise ConfigError(f"row counts disagree: timestamps {n}, X {self.X.shape[0]}, Y {self.Y.shape[0]}")
        if not self.input_names:
            self.input_names = [f"x{i + 1}" for i in range(self.X.shape[1])]
        if not self.output_names:
            self.output_names = [f"y{i + 1}" for i in range(self.Y.shape[1])]

    def __len__(self):
        return len(self.timestamps)

    def y(self, name: str) -> np.ndarray:
        try:
            return self.Y[:, self.output_names.index(name)]
        except ValueError:
            raise ConfigError(f"output column {name!r} not in dataset (have {self.output_names})") from None

    def copy(self) -> "Dataset":
        return Dataset(self.timestamps.copy(), self.X.copy(), self.Y.copy(),
                       list(self.input_names), list(self.output_names))

    def subset(self, rows) -> "Dataset":
        return Dataset(self.timestamps[rows], self.X[rows], self.Y[rows],
                       list(self.input_names), list(self.output_names))

    def to_csv(self, path) -> None:
        header = ["timestamp", *self.input_names, *self.output_names]
        rows = ([_fmt(t), *map(_fmt, x), *map(_fmt, y)]
                for t, x, y in zip(self.timestamps, self.X, self.Y))
        write_csv_atomic(path, header, rows)

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        header, rows = read_csv(path)
        if not header or header[0] != "timestamp":
            raise ArtifactIOError(f"{path}: first column must be 'timestamp'")
        n_in = 0
        for name in header[1:]:
            if name.startswith(("P_", "Q_")):
                n_in += 1
            else:
                break
        try:
            data = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float).reshape(len(rows), -1)
            ts = np.array([_parse_ts(r[0]) for r in rows])
        except ValueError as exc:
            raise ArtifactIOError(f"{path}: non-numeric value ({exc})") from None
        if data.shape[1] != len(header) - 1:
            raise ArtifactIOError(f"{path}: ragged rows")
        return cls(ts, data[:, :n_in], data[:, n_in:], header[1:1 + n_in], header[1 + n_in:])


def _parse_ts(v: str):
    try:
        return int(v)
    except ValueError:
        return float(v)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, [])
            rows = [r for r in reader if r]
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from None
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ArtifactIOError(f"{path}: row {i + 2} has {len(r)} fields, header has {len(header)}")
    return header, rows


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from None


def write_csv_atomic(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    write_text_atomic(path, buf.getvalue())

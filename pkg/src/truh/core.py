"""Shared data model, deterministic random streams and file I/O.

Everything downstream works on :class:`SampleMatrix` (rows are cells,
columns are markers) and draws randomness from :class:`RngStream`, a
counter-based generator addressed by ``(master_seed, path)``.  A worker
that needs randomness derives its own child stream, so results never
depend on how work is scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TruhError", "ParseError", "EmptyInput", "IoError", "DimensionMismatch",
    "InsufficientBaseline", "InvalidTau", "InvalidAlpha",
    "SampleMatrix", "RngStream", "TestDecision", "DrawSummary", "TruhResult",
    "derive_stream", "label", "load_csv", "save_result_json",
    "load_result_json", "result_to_json",
]

_MASK64 = (1 << 64) - 1


class TruhError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TruhError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyInput(TruhError, ValueError):
    pass


class IoError(TruhError, OSError):
    pass


class DimensionMismatch(TruhError, ValueError):
    pass


class InsufficientBaseline(TruhError, ValueError):
    pass


class InvalidTau(TruhError, ValueError):
    pass


class InvalidAlpha(TruhError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Sample matrices
# ---------------------------------------------------------------------------

class SampleMatrix:
    """Immutable ``n_rows x d`` matrix of finite observations.

    Parameters
    ----------
    data : array_like
        Two-dimensional (or one-dimensional, read as a single column) array.
    column_names : sequence of str, optional
        One name per column.
    """

    __slots__ = ("_data", "_names")

    def __init__(self, data, column_names: Optional[Sequence[str]] = None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError("sample matrix must be two-dimensional")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise EmptyInput("sample matrix needs at least one row and one column")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample matrix contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        if column_names is not None:
            column_names = tuple(str(c) for c in column_names)
            if len(column_names) != arr.shape[1]:
                raise DimensionMismatch(
                    f"{len(column_names)} column names for {arr.shape[1]} columns")
        object.__setattr__(self, "_data", arr)
        object.__setattr__(self, "_names", column_names)

    def __setattr__(self, name, value):
        raise AttributeError("SampleMatrix is immutable")

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def column_names(self):
        return self._names

    @property
    def n_rows(self) -> int:
        return self._data.shape[0]

    @property
    def d(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self):
        return self._data.shape

    def __len__(self):
        return self.n_rows

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def take(self, rows) -> "SampleMatrix":
        return SampleMatrix(self._data[np.asarray(rows)], self._names)

    def select_columns(self, columns) -> "SampleMatrix":
        """Keep the given columns (indices or names), in the order given."""
        idx = []
        for c in columns:
            if isinstance(c, str):
                if self._names is None or c not in self._names:
                    raise KeyError(c)
                idx.append(self._names.index(c))
            else:
                idx.append(int(c))
        names = None if self._names is None else [self._names[i] for i in idx]
        return SampleMatrix(self._data[:, idx], names)

    def __eq__(self, other):
        if not isinstance(other, SampleMatrix):
            return NotImplemented
        return (self._names == other._names
                and self._data.shape == other._data.shape
                and bool(np.array_equal(self._data, other._data)))

    def __repr__(self):
        return f"SampleMatrix(n_rows={self.n_rows}, d={self.d})"


def as_matrix(x) -> SampleMatrix:
    if isinstance(x, SampleMatrix):
        return x
    return SampleMatrix(x)


def check_same_dimension(a: SampleMatrix, b: SampleMatrix):
    if a.d != b.d:
        raise DimensionMismatch(f"dimension mismatch: {a.d} vs {b.d} columns")
    if (a.column_names is not None and b.column_names is not None
            and a.column_names != b.column_names):
        raise DimensionMismatch("column names differ between samples")


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def label(name) -> int:
    """Map a string (or int) to a stable 64-bit path label."""
    if isinstance(name, (int, np.integer)):
        return int(name) & _MASK64
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Deterministic random stream keyed by ``(master_seed, path)``.

    Backed by numpy's Philox counter-based bit generator.  The key is a
    :class:`numpy.random.SeedSequence` whose spawn key is the path, so
    distinct paths give independent streams and equal keys give equal
    sequences on every platform numpy supports.
    """

    def __init__(self, master_seed: int, path: Sequence[int] = ()):
        self.master_seed = int(master_seed) & _MASK64
        self.path = tuple(label(p) for p in path)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *labels) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(labels))

    def uniform(self, size=None, low=0.0, high=1.0):
        return self.generator.uniform(low, high, size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def gamma(self, shape, size=None):
        return self.generator.standard_gamma(shape, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice_without_replacement(self, n, k):
        """``k`` distinct indices from ``range(n)`` in random order."""
        return self.generator.choice(n, size=k, replace=False)

    def seed64(self) -> int:
        """A fresh 64-bit seed drawn from this stream."""
        return int(self.generator.integers(0, 2 ** 64, dtype=np.uint64))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, path={list(self.path)})"


def derive_stream(master_seed: int, labels: Sequence = ()) -> RngStream:
    return RngStream(master_seed, labels)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class TestDecision:
    statistic: float
    cutoff: float
    p_value: float
    reject: bool
    alpha: float

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidAlpha(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass
class DrawSummary:
    """Null-distribution summary for one mixing-proportion draw."""

    lam: list
    q025: float
    q50: float
    q975: float
    cutoff: float
    p_value: float
    null_values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass
class TruhResult:
    statistic: float
    cutoff: float
    p_value: float
    reject: bool
    alpha: float
    tau_fc: float
    k_hat: int
    per_draw: list
    m: int
    n: int
    d: int
    seed: int

    @property
    def decision(self) -> TestDecision:
        return TestDecision(self.statistic, self.cutoff, self.p_value,
                            self.reject, self.alpha)

    def to_dict(self) -> dict:
        return {
            "statistic": float(self.statistic),
            "cutoff": float(self.cutoff),
            "p_value": float(self.p_value),
            "reject": bool(self.reject),
            "alpha": float(self.alpha),
            "tau_fc": float(self.tau_fc),
            "k_hat": int(self.k_hat),
            "per_draw": [
                {"lambda": [float(v) for v in dr.lam],
                 "q025": float(dr.q025), "q50": float(dr.q50),
                 "q975": float(dr.q975), "cutoff": float(dr.cutoff),
                 "p_value": float(dr.p_value)}
                for dr in self.per_draw
            ],
            "m": int(self.m),
            "n": int(self.n),
            "d": int(self.d),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TruhResult":
        draws = [DrawSummary(list(r["lambda"]), r["q025"], r["q50"], r["q975"],
                             r["cutoff"], r["p_value"]) for r in obj["per_draw"]]
        return cls(statistic=obj["statistic"], cutoff=obj["cutoff"],
                   p_value=obj["p_value"], reject=bool(obj["reject"]),
                   alpha=obj["alpha"], tau_fc=obj["tau_fc"],
                   k_hat=int(obj["k_hat"]), per_draw=draws, m=int(obj["m"]),
                   n=int(obj["n"]), d=int(obj["d"]), seed=int(obj["seed"]))


def result_to_json(result: TruhResult) -> str:
    # repr() of a float is the shortest string that round-trips exactly
    return json.dumps(result.to_dict(), indent=2, allow_nan=False) + "\n"


def save_result_json(result: TruhResult, path) -> None:
    text = result_to_json(result)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_result_json(path) -> TruhResult:
    try:
        with open(path, encoding="utf-8") as fh:
            return TruhResult.from_dict(json.load(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

_NUMERAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


def _parse_cell(text, row, col):
    s = text.strip()
    if not _NUMERAL.fullmatch(s):
        raise ParseError(f"row {row} column {col}: not a number: {text!r}", row, col)
    value = float(s)
    if not math.isfinite(value):
        raise ParseError(f"row {row} column {col}: value overflows: {text!r}", row, col)
    return value


def load_csv(path, has_header: bool = False) -> SampleMatrix:
    """Read a comma-separated numeric table.

    Rows and columns in error messages are 1-based and count the header
    line, so they match what an editor shows.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_csv_bytes(raw, has_header)


def parse_csv_bytes(raw: bytes, has_header: bool = False) -> SampleMatrix:
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"input is not valid UTF-8: {exc}") from exc
    try:
        lines = list(csv.reader(io.StringIO(text, newline="")))
    except csv.Error as exc:
        raise ParseError(f"malformed CSV: {exc}") from exc

    # trailing blank lines are tolerated, interior ones are not
    while lines and (len(lines[-1]) == 0 or lines[-1] == [""]):
        lines.pop()
    names = None
    first_row = 1
    if has_header:
        if not lines:
            raise EmptyInput("no header row")
        names = [c.strip() for c in lines[0]]
        lines = lines[1:]
        first_row = 2
    if not lines:
        raise EmptyInput("no data rows")

    width = len(names) if names is not None else len(lines[0])
    if width == 0:
        raise ParseError(f"row {first_row}: empty line", first_row, None)
    values = np.empty((len(lines), width))
    for i, cells in enumerate(lines):
        row = first_row + i
        if len(cells) != width:
            raise ParseError(
                f"row {row}: expected {width} columns, found {len(cells)}", row, None)
        for j, cell in enumerate(cells):
            values[i, j] = _parse_cell(cell, row, j + 1)
    return SampleMatrix(values, names)


def save_csv(matrix: SampleMatrix, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            if matrix.column_names is not None:
                w.writerow(matrix.column_names)
            for row in matrix.data:
                w.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def parallel_map(fn, items, threads: int = 1):
    """``[fn(x) for x in items]``, optionally on a thread pool; order is kept."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))

"""Balanced panel container, CSV reader/writer, and time partitions.

CSV layout is one observation per row with header ``unit,time,y,x1,...,xp``.
Rows may come in any order; they are sorted by (unit, time) on load.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateObservation,
    InvalidLength,
    NonContiguousTime,
    NonNumericCell,
    UnbalancedPanel,
    ValidationError,
)

__all__ = [
    "PanelDataset",
    "PartitionScheme",
    "load_csv",
    "write_csv",
    "make_partition",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced N x T panel with p regressors.

    Attributes
    ----------
    unit_ids : tuple of str
        Unit labels, in row order of ``y``.
    times : ndarray of int, shape (N, T)
        Time labels per unit; contiguous and increasing within each unit.
    y : ndarray, shape (N, T)
    x : ndarray, shape (N, T, p)
    """

    unit_ids: tuple
    times: np.ndarray
    y: np.ndarray
    x: np.ndarray
    xnames: tuple = field(default=())

    def __post_init__(self):
        y = _frozen(self.y)
        x = _frozen(self.x)
        times = np.array(self.times, dtype=np.int64, copy=True)
        times.setflags(write=False)
        if y.ndim != 2:
            raise DimensionMismatch("y must be an N x T matrix")
        if x.ndim != 3 or x.shape[:2] != y.shape:
            raise DimensionMismatch("x must be an N x T x p array matching y")
        n, t = y.shape
        if n < 1:
            raise ValidationError("panel needs at least one unit")
        if t < 2:
            raise ValidationError("panel needs at least two periods")
        if x.shape[2] < 1:
            raise ValidationError("panel needs at least one regressor")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValidationError("panel contains non-finite values")
        if times.shape != (n, t):
            raise DimensionMismatch("times must be N x T")
        if np.any(np.diff(times, axis=1) != 1):
            bad = int(np.nonzero(np.any(np.diff(times, axis=1) != 1, axis=1))[0][0])
            raise NonContiguousTime(f"unit {self.unit_ids[bad]!r}: time labels not contiguous")
        if len(self.unit_ids) != n:
            raise DimensionMismatch("unit_ids length must equal N")
        xnames = tuple(self.xnames) or tuple(f"x{j + 1}" for j in range(x.shape[2]))
        if len(xnames) != x.shape[2]:
            raise DimensionMismatch("xnames length must equal p")
        object.__setattr__(self, "unit_ids", tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xnames", xnames)

    @classmethod
    def from_arrays(cls, y, x, unit_ids: Sequence | None = None, times=None, xnames=()):
        """Build a dataset from arrays; ``x`` may be N x T for a single regressor."""
        y = np.asarray(y, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        n, t = y.shape
        if unit_ids is None:
            unit_ids = [str(i + 1) for i in range(n)]
        if times is None:
            times = np.tile(np.arange(1, t + 1), (n, 1))
        return cls(tuple(unit_ids), np.asarray(times), y, x, tuple(xnames))

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[2]

    def replace_y(self, y) -> "PanelDataset":
        return PanelDataset(self.unit_ids, self.times, y, self.x, self.xnames)

    def equals(self, other: "PanelDataset") -> bool:
        return (
            self.unit_ids == other.unit_ids
            and self.xnames == other.xnames
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.x, other.x)
        )


def _unit_sort_key(labels: Iterable[str]):
    labels = list(labels)
    try:
        [int(u) for u in labels]
    except ValueError:
        return lambda u: (0, u)
    return lambda u: (int(u), u)


def load_csv(source) -> PanelDataset:
    """Read a panel from a path, a text stream, a byte stream, or raw bytes."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", newline="") as fh:
            return _read(fh)
    if isinstance(source, (bytes, bytearray)):
        return _read(io.StringIO(bytes(source).decode("utf-8")))
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return _read(io.StringIO(data))


def _read(fh: IO[str]) -> PanelDataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError("empty CSV input") from None
    if len(header) < 4 or header[:3] != ["unit", "time", "y"]:
        raise ValidationError("header must be unit,time,y,x1,...,xp")
    xnames = tuple(header[3:])
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        unit = row[0].strip()
        try:
            tval = float(row[1])
            if not tval.is_integer():
                raise ValueError
            tlab = int(tval)
        except ValueError:
            raise NonNumericCell(f"row {lineno}: time {row[1]!r} is not an integer") from None
        vals = []
        for col, cell in zip(header[2:], row[2:]):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(f"row {lineno}: column {col} value {cell!r} is not numeric") from None
            if not math.isfinite(v):
                raise NonNumericCell(f"row {lineno}: column {col} value {cell!r} is not finite")
            vals.append(v)
        rows.append((unit, tlab, vals, lineno))
    if not rows:
        raise ValidationError("CSV has no observations")

    by_unit: dict[str, list] = {}
    for r in rows:
        by_unit.setdefault(r[0], []).append(r)
    units = sorted(by_unit, key=_unit_sort_key(by_unit))
    counts = {u: len(by_unit[u]) for u in units}
    t = counts[units[0]]
    for u in units:
        obs = sorted(by_unit[u], key=lambda r: r[1])
        labels = [r[1] for r in obs]
        for a, b in zip(obs, obs[1:]):
            if a[1] == b[1]:
                raise DuplicateObservation(f"row {b[3]}: unit {u!r} has duplicate time {b[1]}")
        if counts[u] != t:
            raise UnbalancedPanel(
                f"unit {u!r} has {counts[u]} observations but unit {units[0]!r} has {t}"
            )
        for a, b in zip(labels, labels[1:]):
            if b != a + 1:
                raise NonContiguousTime(f"unit {u!r}: gap between time {a} and {b}")
        by_unit[u] = obs

    n, p = len(units), len(xnames)
    y = np.empty((n, t))
    x = np.empty((n, t, p))
    times = np.empty((n, t), dtype=np.int64)
    for i, u in enumerate(units):
        for s, (_, tl, vals, _) in enumerate(by_unit[u]):
            times[i, s] = tl
            y[i, s] = vals[0]
            x[i, s, :] = vals[1:]
    return PanelDataset(tuple(units), times, y, x, xnames)


def write_csv(data: PanelDataset, dest=None) -> str | None:
    """Write ``data`` in the CSV layout; returns the text when ``dest`` is None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit", "time", "y", *data.xnames])
    for i, u in enumerate(data.unit_ids):
        for s in range(data.T):
            w.writerow(
                [u, int(data.times[i, s]), format(data.y[i, s], ".17g")]
                + [format(v, ".17g") for v in data.x[i, s]]
            )
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return None


@dataclass(frozen=True)
class PartitionScheme:
    """Split of 1..T into ``b`` cells of length ``l`` plus an optional short tail.

    A nonzero tail is treated as cell ``b + 1`` everywhere it matters.
    """

    T: int
    l: int
    b: int
    tail_len: int

    @property
    def n_cells(self) -> int:
        return self.b + (1 if self.tail_len else 0)

    @property
    def cell_lengths(self) -> list[int]:
        return [self.l] * self.b + ([self.tail_len] if self.tail_len else [])

    @property
    def cell_of(self) -> np.ndarray:
        """0-based cell index of each 0-based period."""
        return np.arange(self.T) // self.l

    def index_map(self, t: int) -> tuple[int, int]:
        """1-based period ``t`` to 1-based (cell j, within-cell s)."""
        if not 1 <= t <= self.T:
            raise IndexError(t)
        j = -(-t // self.l)
        return j, t - (j - 1) * self.l

    def cells(self) -> list[range]:
        return [range(j * self.l + 1, min((j + 1) * self.l, self.T) + 1) for j in range(self.n_cells)]


def make_partition(T: int, l: int) -> PartitionScheme:
    if T < 1 or l < 1 or l > T:
        raise InvalidLength(f"cell length must satisfy 1 <= l <= T (got l={l}, T={T})")
    return PartitionScheme(T=int(T), l=int(l), b=T // l, tail_len=T % l)

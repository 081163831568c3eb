"""Binary datasets, family views and the counting primitive.

A :class:`Dataset` is an immutable table of complete 0/1 assignments with
integer multiplicities.  A :class:`FamilyView` designates one column as the
child and an ordered subset of the others as its parents; every learner in
the package consumes family views.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

WEIGHT_COLUMN = "#weight"


class DataError(ValueError):
    """Raised for malformed datasets or CSV files."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Weighted table of complete binary assignments.

    ``records`` has shape ``(n_records, n_variables)`` and dtype ``uint8``;
    ``weights`` holds a positive integer multiplicity per record.
    """

    variables: tuple[str, ...]
    records: np.ndarray
    weights: np.ndarray

    def __init__(self, variables: Sequence[str], records, weights=None):
        variables = tuple(str(v) for v in variables)
        if len(set(variables)) != len(variables):
            seen = set()
            dup = next(v for v in variables if v in seen or seen.add(v))
            raise DataError(f"duplicate variable name {dup!r}")
        records = np.asarray(records)
        if records.size == 0:
            records = records.reshape(0, len(variables))
        if records.ndim != 2 or records.shape[1] != len(variables):
            raise DataError(
                f"records must have shape (n, {len(variables)}), got {records.shape}"
            )
        if records.size and not np.isin(records, (0, 1)).all():
            raise DataError("records must contain only 0/1 values")
        records = records.astype(np.uint8)
        if weights is None:
            weights = np.ones(records.shape[0], dtype=np.int64)
        else:
            weights = np.asarray(weights)
            if weights.shape != (records.shape[0],):
                raise DataError("one weight per record is required")
            if not np.all(weights == np.round(weights)) or np.any(weights < 1):
                raise DataError("weights must be positive integers")
            weights = weights.astype(np.int64)
        records.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.records.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.variables == other.variables
            and np.array_equal(self.records, other.records)
            and np.array_equal(self.weights, other.weights)
        )

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise DataError(f"unknown variable {name!r}") from None

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.variables, self.records[rows], self.weights[rows])

    def family(self, child: str | int, parents: Sequence[str | int] | None = None) -> "FamilyView":
        """Family view with ``child`` and ``parents`` (default: all other columns)."""
        c = child if isinstance(child, (int, np.integer)) else self.index(child)
        if parents is None:
            ps = tuple(i for i in range(len(self.variables)) if i != c)
        else:
            ps = tuple(p if isinstance(p, (int, np.integer)) else self.index(p) for p in parents)
        return FamilyView(int(c), tuple(int(p) for p in ps), self)


@dataclass(frozen=True)
class FamilyView:
    """A child column ``X`` and ordered parent columns ``U`` of a dataset."""

    child: int
    parents: tuple[int, ...]
    dataset: Dataset

    def __post_init__(self):
        nvar = len(self.dataset.variables)
        for i in (self.child, *self.parents):
            if not 0 <= i < nvar:
                raise DataError(f"variable index {i} out of range")
        if self.child in self.parents:
            raise DataError("child cannot be one of its own parents")
        if len(set(self.parents)) != len(self.parents):
            raise DataError("parents must be distinct")

    @property
    def X(self) -> np.ndarray:
        """Parent instantiations, shape ``(n_records, n_parents)``."""
        return self.dataset.records[:, list(self.parents)]

    @property
    def y(self) -> np.ndarray:
        return self.dataset.records[:, self.child]

    @property
    def w(self) -> np.ndarray:
        return self.dataset.weights

    @property
    def child_name(self) -> str:
        return self.dataset.variables[self.child]

    @property
    def parent_names(self) -> tuple[str, ...]:
        return tuple(self.dataset.variables[p] for p in self.parents)

    @property
    def total_weight(self) -> int:
        return self.dataset.total_weight

    def take(self, rows) -> "FamilyView":
        return FamilyView(self.child, self.parents, self.dataset.take(rows))


def count(view: FamilyView, q: Mapping[int, int]) -> int:
    """Total weight of records consistent with the partial instantiation ``q``.

    Keys of ``q`` are dataset variable indices belonging to the family.
    """
    family = {view.child, *view.parents}
    mask = np.ones(len(view.dataset), dtype=bool)
    for var, val in q.items():
        if var not in family:
            raise DataError(f"variable {var} is not in the family")
        if val not in (0, 1):
            raise DataError(f"query value for {var} must be 0 or 1")
        mask &= view.dataset.records[:, var] == val
    return int(view.dataset.weights[mask].sum())


def load_csv(path, child: str | None = None) -> FamilyView | Dataset:
    """Read a 0/1 CSV file.

    With ``child`` given, returns the family view whose parents are all other
    columns in header order; otherwise the bare :class:`Dataset`.  An optional
    ``#weight`` column carries record multiplicities.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        seen = set()
        for h in header:
            if h in seen:
                raise DataError(f"{path}: duplicate header {h!r}")
            seen.add(h)
        wcol = header.index(WEIGHT_COLUMN) if WEIGHT_COLUMN in header else None
        names = [h for i, h in enumerate(header) if i != wcol]
        rows, weights = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for i, cell in enumerate(row):
                cell = cell.strip()
                if i == wcol:
                    if not cell.isdigit() or int(cell) < 1:
                        raise DataError(
                            f"{path}: row {lineno}, column {header[i]!r}: bad weight {cell!r}"
                        )
                    weights.append(int(cell))
                elif cell in ("0", "1"):
                    vals.append(int(cell))
                else:
                    raise DataError(
                        f"{path}: row {lineno}, column {header[i]!r}: non-binary value {cell!r}"
                    )
            rows.append(vals)
    records = np.array(rows, dtype=np.uint8).reshape(len(rows), len(names))
    data = Dataset(names, records, weights if wcol is not None else None)
    if child is None:
        return data
    if child not in names:
        raise DataError(f"{path}: unknown child variable {child!r}")
    return data.family(child)


def save_csv(data: Dataset | FamilyView, path) -> None:
    """Write ``data`` as CSV; the weight column is emitted only when needed."""
    if isinstance(data, FamilyView):
        data = data.dataset
    with_weights = bool(np.any(data.weights != 1))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(data.variables)
        if with_weights:
            header.append(WEIGHT_COLUMN)
        writer.writerow(header)
        for rec, wt in zip(data.records.tolist(), data.weights.tolist()):
            writer.writerow(rec + [wt] if with_weights else rec)


def cardinality_contexts(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Parent cardinalities falling in the low (fraction <= 1/k) and high contexts."""
    c = np.arange(n + 1)
    low = c * k <= n
    return c[low], c[~low]


def gen_cardinality(n: int, k: int, count: int, seed: int,
                    p_low: float = 0.05, p_high: float = 0.95) -> FamilyView:
    """Sample the cardinality benchmark.

    The child depends only on the fraction of parents set to 1: it is 1 with
    probability ``p_low`` when that fraction is at most ``1/k`` and ``p_high``
    otherwise.  Both contexts are drawn with probability 1/2 and parent vectors
    are uniform within a context.
    """
    if n < 1 or k < 1 or count < 1:
        raise DataError("n, k and count must be positive")
    low, high = cardinality_contexts(n, k)
    if len(low) == 0 or len(high) == 0:
        raise DataError(f"k={k} leaves one context empty for n={n}")
    rng = np.random.default_rng(seed)
    in_high = rng.random(count) < 0.5
    card = np.empty(count, dtype=np.intp)
    for mask, support in ((~in_high, low), (in_high, high)):
        # uniform over vectors: pick the cardinality in proportion to C(n, c)
        mass = np.array([math.comb(n, int(c)) for c in support], dtype=float)
        card[mask] = rng.choice(support, size=int(mask.sum()), p=mass / mass.sum())
    ranks = np.argsort(rng.random((count, n)), axis=1)
    parents = (ranks < card[:, None]).astype(np.uint8)
    px = np.where(in_high, p_high, p_low)
    x = (rng.random(count) < px).astype(np.uint8)
    names = [f"U{i}" for i in range(n)] + ["X"]
    data = Dataset(names, np.column_stack([parents, x]))
    return data.family("X")


def train_test_split(view: FamilyView, test_frac: float, seed: int) -> tuple[FamilyView, FamilyView]:
    """Seeded shuffle, then a contiguous tail of ``test_frac`` of the records."""
    if not 0.0 <= test_frac < 1.0:
        raise DataError("test fraction must lie in [0, 1)")
    n = len(view.dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_frac * n))
    return view.take(perm[: n - n_test]), view.take(perm[n - n_test:])

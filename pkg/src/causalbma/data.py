"""Observational data: schema, CSV ingestion, standardization, sufficient statistics."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DegenerateColumnError, InvalidInputError

CONTINUOUS = "continuous"
DISCRETE = "discrete"
ROLES = ("quality", "intervention", "other")


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str = CONTINUOUS
    cardinality: int | None = None
    role: str = "other"

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == DISCRETE and (self.cardinality is None or self.cardinality < 2):
            raise ConfigError(f"column {self.name!r}: discrete cardinality must be >= 2")
        if self.role not in ROLES:
            raise ConfigError(f"column {self.name!r}: unknown role {self.role!r}")

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    @classmethod
    def from_dict(cls, obj: dict) -> "ColumnMeta":
        try:
            card = obj.get("cardinality")
            return cls(
                name=str(obj["name"]),
                kind=obj.get("kind", CONTINUOUS),
                cardinality=int(card) if card is not None else None,
                role=obj.get("role", "other"),
            )
        except KeyError as exc:
            raise ConfigError(f"schema entry missing field {exc}") from None

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.cardinality is not None:
            out["cardinality"] = self.cardinality
        return out


def _check_schema(schema: Sequence[ColumnMeta]):
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise ConfigError("column names must be unique")
    if not names:
        raise ConfigError("schema is empty")


@dataclass(frozen=True)
class ContinuousStats:
    """Cross-products of ``[1, parent design columns, target]`` over all rows."""

    n: int
    xtx: np.ndarray
    parent_widths: tuple[int, ...]

    @property
    def mean(self) -> np.ndarray:
        return self.xtx[0, 1:] / self.n

    @property
    def scatter(self) -> np.ndarray:
        """Centered scatter matrix of the design block (parents then target)."""
        m = self.mean
        return self.xtx[1:, 1:] - self.n * np.outer(m, m)


@dataclass(frozen=True)
class DiscreteStats:
    """Counts ``N[j, k]``: parent configuration j (mixed radix, first parent most
    significant) by target value k."""

    counts: np.ndarray
    parent_cards: tuple[int, ...]

    @property
    def n(self) -> int:
        return int(self.counts.sum())


class Dataset:
    """Immutable N x d table plus schema.

    Discrete cells are stored as floats holding integer codes ``0..k-1``.
    ``scaling`` maps a standardized column name to its original (mean, sd).
    """

    def __init__(self, schema: Sequence[ColumnMeta], rows, standardized: bool = False,
                 scaling: dict | None = None, n_bins: int = 3):
        schema = tuple(schema)
        _check_schema(schema)
        x = np.array(rows, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(schema):
            raise InvalidInputError(f"rows must be N x {len(schema)}, got {x.shape}")
        if x.shape[0] < 1:
            raise DataError("dataset needs N >= 1 rows")
        if not np.isfinite(x).all():
            raise DataError("dataset contains missing or non-finite cells")
        for j, c in enumerate(schema):
            if c.is_discrete:
                col = x[:, j]
                bad = np.flatnonzero((col != np.round(col)) | (col < 0) | (col >= c.cardinality))
                if bad.size:
                    raise DataError(
                        f"row {bad[0] + 1}, column {c.name!r}: value {col[bad[0]]:g} "
                        f"outside [0, {c.cardinality})")
        if n_bins < 2:
            raise ConfigError("n_bins must be >= 2")
        x.setflags(write=False)
        self.schema = schema
        self.rows = x
        self.standardized = standardized
        self.scaling = dict(scaling or {})
        self.n_bins = n_bins
        self._codes: dict[int, tuple[np.ndarray, int, np.ndarray | None]] = {}
        self._design: dict[int, np.ndarray] = {}
        self._fingerprint = None

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return len(self.schema)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown column {name!r}") from None

    def column(self, i: int) -> np.ndarray:
        return self.rows[:, i]

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            h = hashlib.sha256()
            for c in self.schema:
                # roles do not change any statistic, so they stay out of the key
                h.update(f"{c.name}|{c.kind}|{c.cardinality}".encode())
            h.update(str(self.n_bins).encode())
            h.update(np.ascontiguousarray(self.rows).tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    @property
    def gaussian_dim(self) -> int:
        """Width of the joint Gaussian design: continuous columns count once,
        discrete columns contribute ``k - 1`` indicator columns."""
        return sum(1 if not c.is_discrete else c.cardinality - 1 for c in self.schema)

    def codes(self, i: int) -> tuple[np.ndarray, int, np.ndarray | None]:
        """Integer codes, cardinality and bin edges for node ``i``.

        Continuous columns are cut into ``n_bins`` equal-frequency bins; the
        interior edges are returned so new values can be binned the same way.
        """
        if i not in self._codes:
            c = self.schema[i]
            col = self.rows[:, i]
            if c.is_discrete:
                self._codes[i] = (col.astype(np.int64), c.cardinality, None)
            else:
                edges = np.quantile(col, np.arange(1, self.n_bins) / self.n_bins)
                self._codes[i] = (np.searchsorted(edges, col, side="right").astype(np.int64),
                                  self.n_bins, edges)
        return self._codes[i]

    def design(self, i: int) -> np.ndarray:
        """Gaussian design columns for node ``i`` (one-hot, level 0 dropped, if discrete)."""
        if i not in self._design:
            c = self.schema[i]
            col = self.rows[:, i]
            if c.is_discrete:
                block = (col[:, None] == np.arange(1, c.cardinality)[None, :]).astype(float)
            else:
                block = col[:, None].copy()
            block.setflags(write=False)
            self._design[i] = block
        return self._design[i]

    def with_roles(self, roles: Sequence[str]) -> "Dataset":
        """Same payload, new role tags (shares the derived-column caches)."""
        schema = [ColumnMeta(c.name, c.kind, c.cardinality, r) for c, r in zip(self.schema, roles)]
        out = Dataset.__new__(Dataset)
        out.__dict__.update(self.__dict__)
        out.schema = tuple(schema)
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        for r in self.rows:
            w.writerow([str(int(v)) if c.is_discrete else repr(float(v)) for v, c in zip(r, self.schema)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def load_csv(path, schema: Sequence[ColumnMeta], n_bins: int = 3) -> Dataset:
    """Read a comma-separated file with a header row; columns are reordered to ``schema``."""
    schema = tuple(schema)
    _check_schema(schema)
    p = Path(path)
    if not p.is_file():
        raise DataError(f"data file not found: {p}")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{p}: file is empty") from None
        expected = [c.name for c in schema]
        if sorted(header) != sorted(expected) or len(set(header)) != len(header):
            raise DataError(f"{p}: header {header} does not match schema columns {expected}")
        pos = [header.index(name) for name in expected]
        rows = []
        for rno, rec in enumerate(reader, 1):
            if not rec or all(not s.strip() for s in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"row {rno}: expected {len(header)} cells, got {len(rec)}")
            vals = []
            for c, k in zip(schema, pos):
                cell = rec[k].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {rno}, column {c.name!r}: cannot parse {cell!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"row {rno}, column {c.name!r}: missing or non-finite value")
                if c.is_discrete and (v != int(v) or not 0 <= v < c.cardinality):
                    raise DataError(
                        f"row {rno}, column {c.name!r}: value {cell} outside [0, {c.cardinality})")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{p}: no data rows, N must be >= 1")
    return Dataset(schema, np.array(rows, dtype=float), n_bins=n_bins)


def standardize(ds: Dataset) -> Dataset:
    """Z-score every continuous column (sample SD, ddof=1); discrete columns untouched."""
    if ds.standardized:
        raise DataError("dataset is already standardized")
    x = np.array(ds.rows, dtype=float)
    scaling = {}
    for j, c in enumerate(ds.schema):
        if c.is_discrete:
            continue
        col = x[:, j]
        sd = col.std(ddof=1) if len(col) > 1 else 0.0
        if not sd > 0:
            raise DegenerateColumnError(c.name)
        mu = col.mean()
        z = (col - mu) / sd
        # second pass removes the rounding residue of the first
        z = z - z.mean()
        z = z / z.std(ddof=1)
        x[:, j] = z
        scaling[c.name] = (float(mu), float(sd))
    return Dataset(ds.schema, x, standardized=True, scaling=scaling, n_bins=ds.n_bins)


def sufficient_stats(ds: Dataset, target: int, parents: Iterable[int]):
    """Sufficient statistics of one family.

    Continuous targets get a ``ContinuousStats`` over the Gaussian design of the
    parents (discrete parents one-hot coded). Discrete targets get a
    ``DiscreteStats`` contingency table (continuous parents binned).
    """
    pa = sorted(set(int(p) for p in parents))
    for k in [target, *pa]:
        if not 0 <= k < ds.d:
            raise InvalidInputError(f"node {k} out of range for d={ds.d}")
    if target in pa:
        raise InvalidInputError("target cannot be its own parent")
    if ds.schema[target].is_discrete:
        y, r, _ = ds.codes(target)
        cards = []
        cfg = np.zeros(ds.n, dtype=np.int64)
        for p in pa:
            c, k, _ = ds.codes(p)
            cfg = cfg * k + c
            cards.append(k)
        q = int(np.prod(cards)) if cards else 1
        counts = np.bincount(cfg * r + y, minlength=q * r).reshape(q, r)
        return DiscreteStats(counts=counts, parent_cards=tuple(cards))
    blocks = [np.ones((ds.n, 1))] + [ds.design(p) for p in pa] + [ds.design(target)]
    z = np.hstack(blocks)
    xtx = z.T @ z
    xtx = (xtx + xtx.T) / 2
    return ContinuousStats(n=ds.n, xtx=xtx, parent_widths=tuple(ds.design(p).shape[1] for p in pa))

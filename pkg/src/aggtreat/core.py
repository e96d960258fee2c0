"""Data model: grid quantization, datasets, support indexing and cell statistics.

Sub-treatment vectors are plain tuples of non-negative ints in grid units.
Within a level they are kept in descending lexicographic order, so that
``(1, 0, 0)`` comes before ``(0, 1, 0)``; every "first"/"canonical" choice
elsewhere in the package refers to this order.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

Vector = tuple[int, ...]
Number = Union[float, Fraction]


def canonical_order(vectors: Iterable[Vector]) -> tuple[Vector, ...]:
    return tuple(sorted(set(vectors), reverse=True))


def zeros(K: int) -> Vector:
    return (0,) * K


def unit(K: int, k: int) -> Vector:
    return tuple(1 if i == k else 0 for i in range(K))


def add(a: Vector, b: Vector) -> Vector:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Vector, b: Vector) -> Vector:
    return tuple(x - y for x, y in zip(a, b))


def l1(a: Vector, b: Vector) -> int:
    return sum(abs(x - y) for x, y in zip(a, b))


def fmt_vector(s: Vector) -> str:
    return ",".join(str(x) for x in s)


def parse_vector(text: str) -> Vector:
    try:
        out = tuple(int(p) for p in text.replace("(", "").replace(")", "").split(","))
    except ValueError as exc:
        raise ParseError(f"cannot parse sub-treatment vector {text!r}") from exc
    if any(x < 0 for x in out):
        raise ValidationError(f"negative entry in vector {text!r}")
    return out


@dataclass(frozen=True)
class GridSpec:
    """Quantization grid shared by all sub-treatments.

    ``resolution`` is the size of one grid unit in original units
    (e.g. 0.5 hours).
    """

    resolution: float
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.resolution > 0:
            raise ValidationError(f"resolution must be positive, got {self.resolution}")
        if len(self.names) < 1:
            raise ValidationError("at least one sub-treatment is required")
        if len(set(self.names)) != len(self.names):
            raise ValidationError(f"sub-treatment names must be unique: {self.names}")

    @property
    def K(self) -> int:
        return len(self.names)

    @property
    def step(self) -> Fraction:
        """Exact size of one grid unit."""
        return Fraction(str(self.resolution))

    def quantize(self, raw) -> int:
        """Nearest grid unit, ties away from zero."""
        try:
            value = Decimal(str(raw)) / Decimal(str(self.resolution))
        except InvalidOperation as exc:
            raise ParseError(f"non-numeric sub-treatment value {raw!r}") from exc
        return int(value.to_integral_value(rounding=ROUND_HALF_UP))

    def to_original(self, units) -> Number:
        if isinstance(units, Fraction):
            return units * self.step
        return units * self.resolution


@dataclass(frozen=True)
class AggregationRule:
    kind: str = "sum"

    def __post_init__(self):
        if self.kind != "sum":
            raise ValidationError(f"unsupported aggregation rule {self.kind!r}; only 'sum' is implemented")

    def __call__(self, s: Sequence[int]) -> int:
        return int(sum(s))


SUM = AggregationRule("sum")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Unit records: outcome ``y`` (n,) and sub-treatments ``s`` (n, K) in grid units."""

    y: np.ndarray
    s: np.ndarray
    grid: GridSpec
    rule: AggregationRule = SUM
    unit_ids: tuple | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        s = np.array(self.s, dtype=np.int64).reshape(len(y), -1) if len(y) else np.zeros((0, self.grid.K), np.int64)
        if s.shape[1] != self.grid.K:
            raise ValidationError(f"expected {self.grid.K} sub-treatment columns, got {s.shape[1]}")
        if not np.all(np.isfinite(y)):
            raise ValidationError("outcomes must be finite")
        bad = np.nonzero((s < 0).any(axis=1))[0]
        if len(bad):
            raise ValidationError(f"negative sub-treatment in row {int(bad[0])}")
        y.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        if self.unit_ids is not None:
            ids = tuple(self.unit_ids)
            if len(ids) != len(y):
                raise ValidationError("unit_ids length does not match outcomes")
            object.__setattr__(self, "unit_ids", ids)

    @classmethod
    def from_records(cls, records: Iterable[tuple], grid: GridSpec, rule: AggregationRule = SUM) -> "Dataset":
        """Build from ``(unit_id, y, s)`` triples with ``s`` already in grid units."""
        records = list(records)
        ids = tuple(r[0] for r in records)
        y = [r[1] for r in records]
        s = [tuple(r[2]) for r in records]
        return cls(np.asarray(y, float), np.asarray(s, np.int64).reshape(len(records), grid.K), grid, rule, ids)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def d(self) -> np.ndarray:
        """Aggregate treatment in grid units."""
        return self.s.sum(axis=1)

    def records(self) -> list[tuple]:
        ids = self.unit_ids or tuple(range(self.n))
        return [(ids[i], float(self.y[i]), tuple(int(x) for x in self.s[i])) for i in range(self.n)]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        ids = None if self.unit_ids is None else tuple(self.unit_ids[i] for i in index)
        return Dataset(self.y[index], self.s[index], self.grid, self.rule, ids)

    def to_csv(self, path, outcome: str = "y") -> None:
        ids = self.unit_ids or tuple(range(self.n))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["unit_id", outcome, *self.grid.names])
            for i in range(self.n):
                raw = [_fmt_number(self.grid.to_original(int(x))) for x in self.s[i]]
                w.writerow([ids[i], repr(float(self.y[i])), *raw])


def _fmt_number(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


@dataclass(frozen=True)
class IngestConfig:
    grid: GridSpec
    rule: AggregationRule = SUM
    outcome: str = "y"
    id_column: str = "unit_id"


def read_config(path) -> IngestConfig:
    """Read a TOML config with keys ``resolution``, ``subtreatments``, ``outcome``, ``aggregation``."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"cannot parse config {path}: {exc}") from exc
    if "subtreatments" not in raw:
        raise SchemaError(f"config {path} must declare 'subtreatments'")
    grid = GridSpec(float(raw.get("resolution", 1.0)), tuple(raw["subtreatments"]))
    return IngestConfig(grid, AggregationRule(raw.get("aggregation", "sum")),
                        raw.get("outcome", "y"), raw.get("id_column", "unit_id"))


def ingest(path, config: IngestConfig) -> Dataset:
    """Read a CSV file and quantize sub-treatments onto the grid."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"input file not found: {path}")
    grid = config.grid
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (config.outcome, *grid.names) if c not in header]
        if missing:
            raise SchemaError(f"missing column(s) {missing} in {path}; header is {header}")
        has_ids = config.id_column in header
        ids, ys, ss = [], [], []
        for row_index, row in enumerate(reader):
            try:
                y = float(row[config.outcome])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"row {row_index}: non-numeric outcome {row[config.outcome]!r}") from exc
            if not math.isfinite(y):
                raise ParseError(f"row {row_index}: outcome is not finite")
            vec = []
            for name in grid.names:
                raw = row[name]
                try:
                    val = float(raw)
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"row {row_index}: non-numeric value {raw!r} in column {name!r}") from exc
                if val < 0:
                    raise ValidationError(f"row {row_index}: negative sub-treatment {name}={raw}")
                vec.append(grid.quantize(raw))
            ids.append(row[config.id_column] if has_ids else row_index)
            ys.append(y)
            ss.append(vec)
    return Dataset(np.asarray(ys, float), np.asarray(ss, np.int64).reshape(len(ys), grid.K),
                   grid, config.rule, tuple(ids))


@dataclass(frozen=True)
class SupportIndex:
    """Observed aggregation sets: level -> vectors (canonical order), with cell counts."""

    levels: Mapping[int, tuple[Vector, ...]]
    counts: Mapping[Vector, int]
    n: int

    @property
    def max_level(self) -> int:
        return max(self.levels)

    def level_sizes(self) -> dict[int, int]:
        return {d: len(v) for d, v in sorted(self.levels.items())}

    def __contains__(self, s) -> bool:
        return tuple(s) in self.counts


def build_support(data: Dataset) -> SupportIndex:
    if data.n == 0:
        raise ValidationError("cannot index an empty dataset")
    uniq, counts = np.unique(data.s, axis=0, return_counts=True)
    cnt = {tuple(int(x) for x in row): int(c) for row, c in zip(uniq, counts)}
    return SupportIndex(_levels_of(cnt, data.rule), cnt, data.n)


def _levels_of(vectors: Iterable[Vector], rule: AggregationRule = SUM) -> dict[int, tuple[Vector, ...]]:
    by_level = defaultdict(list)
    for s in vectors:
        by_level[rule(s)].append(s)
    return {d: canonical_order(v) for d, v in sorted(by_level.items())}


@dataclass(frozen=True)
class CellStats:
    """Per-cell means and per-level conditional frequencies.

    Works with float means (estimation) or Fraction means (exact population
    checks); frequencies are always exact Fractions. Empty cells are absent.
    """

    grid: GridSpec
    support: Mapping[int, tuple[Vector, ...]]
    means: Mapping[Vector, Number]
    cond_prob: Mapping[Vector, Fraction]
    level_prob: Mapping[int, Fraction]
    level_mean: Mapping[int, Number]
    counts: Mapping[Vector, int] | None = None
    n: int | None = None

    @classmethod
    def from_distribution(cls, prob: Mapping[Vector, Fraction], means: Mapping[Vector, Number],
                          grid: GridSpec, rule: AggregationRule = SUM) -> "CellStats":
        """Build from a joint law ``P(S=s)`` and cell means ``E[Y|S=s]``."""
        prob = {tuple(s): Fraction(p) for s, p in prob.items() if p != 0}
        if any(p < 0 for p in prob.values()):
            raise ValidationError("probabilities must be non-negative")
        total = sum(prob.values())
        if total != 1:
            raise ValidationError(f"cell probabilities sum to {total}, not 1")
        support = _levels_of(prob, rule)
        level_prob = {d: sum(prob[s] for s in vs) for d, vs in support.items()}
        cond = {s: prob[s] / level_prob[rule(s)] for s in prob}
        mean_map = {s: means[s] for s in prob}
        level_mean = {d: _weighted(cond, mean_map, vs) for d, vs in support.items()}
        return cls(grid, support, mean_map, cond, level_prob, level_mean)

    @property
    def levels(self) -> list[int]:
        return sorted(self.support)

    @property
    def K(self) -> int:
        return self.grid.K

    def has_level(self, d: int) -> bool:
        return d in self.support and len(self.support[d]) > 0

    def subtreatment_mean(self, d: int, k: int) -> Fraction:
        """E[S_k | D=d] in grid units (exact)."""
        return sum(self.cond_prob[s] * s[k] for s in self.support[d])

    def positive_levels(self) -> list[int]:
        return [d for d in self.levels if d > 0]


def _weighted(weights, values, keys):
    acc = 0
    for k in keys:
        acc = acc + weights[k] * values[k]
    return acc


def cell_stats(data: Dataset, index: SupportIndex | None = None) -> CellStats:
    index = index or build_support(data)
    uniq, inverse, counts = np.unique(data.s, axis=0, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse.reshape(-1), weights=data.y, minlength=len(uniq))
    means, cnt = {}, {}
    for row, c, tot in zip(uniq, counts, sums):
        key = tuple(int(x) for x in row)
        means[key] = float(tot / c)
        cnt[key] = int(c)
    n = data.n
    level_count = {d: sum(cnt[s] for s in vs) for d, vs in index.levels.items()}
    level_prob = {d: Fraction(c, n) for d, c in level_count.items()}
    cond = {s: Fraction(cnt[s], level_count[data.rule(s)]) for s in cnt}
    d_all = data.d
    level_mean = {d: float(np.mean(data.y[d_all == d])) for d in index.levels}
    return CellStats(data.grid, dict(index.levels), means, cond, level_prob, level_mean, cnt, n)


def lattice_support(K: int, cap: int | Sequence[int], budget: int = 10**7) -> dict[int, tuple[Vector, ...]]:
    """All vectors with 0 <= s_k <= cap_k, grouped by level."""
    caps = tuple(cap) if isinstance(cap, Sequence) else (cap,) * K
    if len(caps) != K:
        raise ValidationError("caps must have length K")
    size = math.prod(c + 1 for c in caps)
    if size > budget:
        raise ValidationError(f"lattice has {size} cells, above the budget of {budget}")
    grids = np.indices([c + 1 for c in caps]).reshape(K, -1).T
    return _levels_of((tuple(int(x) for x in row) for row in grids))

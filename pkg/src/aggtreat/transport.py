"""Weighting schemes over marginal comparisons and the minimal incongruent share.

A weighting scheme is a joint distribution over pairs (s_d, s_{d-1}) whose
row sums are P(S=s_d | D=d) and column sums are P(S=s_{d-1} | D=d-1). The
smallest mass any such scheme must put on incongruent pairs is a
transportation problem with 0/1 costs; it is solved here exactly over
rationals with the transportation simplex (u-v potentials, Bland's rule).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .core import CellStats, Number, Vector, canonical_order, fmt_vector
from .congruence import is_congruent
from .errors import AggTreatError, LevelError, ValidationError

BALANCE_TOL = 1e-9
SNAP_DENOMINATOR = 10**9


def snap(x) -> Fraction:
    """Exact rational for ``x``; floats are snapped at 1e-9."""
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    return Fraction(x).limit_denominator(SNAP_DENOMINATOR)


def _balanced(values: Sequence, label: str) -> tuple[Fraction, ...]:
    vals = [snap(v) for v in values]
    if any(v < 0 for v in vals):
        raise ValidationError(f"{label} marginal has negative entries")
    total = sum(vals)
    if abs(float(total) - 1.0) > BALANCE_TOL:
        raise ValidationError(f"{label} marginal sums to {float(total):.12g}, not 1")
    if total != 1:
        # within tolerance: absorb the rounding residue in the largest entry
        i = max(range(len(vals)), key=lambda t: vals[t])
        vals[i] += 1 - total
    return tuple(vals)


@dataclass(frozen=True)
class WeightScheme:
    d: int
    rows: tuple[Vector, ...]
    cols: tuple[Vector, ...]
    entries: Mapping[tuple[Vector, Vector], Fraction]
    provenance: str = "user"

    @property
    def incongruent_share(self) -> Fraction:
        return sum((w for (hi, lo), w in self.entries.items() if not is_congruent(hi, lo)), Fraction(0))

    def row_sums(self) -> dict[Vector, Fraction]:
        out = {r: Fraction(0) for r in self.rows}
        for (hi, _), w in self.entries.items():
            out[hi] += w
        return out

    def col_sums(self) -> dict[Vector, Fraction]:
        out = {c: Fraction(0) for c in self.cols}
        for (_, lo), w in self.entries.items():
            out[lo] += w
        return out

    def apply(self, means: CellStats | Mapping[Vector, Number]) -> Number:
        """Weighted sum of m(s_d) - m(s_{d-1})."""
        m = means.means if isinstance(means, CellStats) else means
        total = 0
        for (hi, lo), w in self.entries.items():
            if w:
                total = total + w * (m[hi] - m[lo])
        return total

    def as_dict(self) -> dict:
        return {
            "d": self.d, "provenance": self.provenance,
            "incongruent_share": float(self.incongruent_share),
            "entries": [
                {"hi": fmt_vector(hi), "lo": fmt_vector(lo), "weight": float(w),
                 "congruent": is_congruent(hi, lo)}
                for (hi, lo), w in self.entries.items()
            ],
        }


@dataclass(frozen=True)
class TransportProblem:
    d: int
    rows: tuple[Vector, ...]
    cols: tuple[Vector, ...]
    supplies: tuple[Fraction, ...]
    demands: tuple[Fraction, ...]
    cost: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if not self.rows or not self.cols:
            raise LevelError(f"empty marginal set at level {self.d}")
        if not self.cost:
            cost = tuple(tuple(0 if is_congruent(r, c) else 1 for c in self.cols) for r in self.rows)
            object.__setattr__(self, "cost", cost)

    @classmethod
    def from_marginals(cls, d: int, row_probs: Mapping[Vector, Number],
                       col_probs: Mapping[Vector, Number]) -> "TransportProblem":
        rows = canonical_order(row_probs)
        cols = canonical_order(col_probs)
        if not rows or not cols:
            raise LevelError(f"empty marginal set at level {d}")
        sup = _balanced([row_probs[r] for r in rows], "row")
        dem = _balanced([col_probs[c] for c in cols], "column")
        return cls(d, rows, cols, sup, dem)

    @classmethod
    def from_stats(cls, stats: CellStats, d: int) -> "TransportProblem":
        rows, cols = _level_pair(stats, d)
        return cls.from_marginals(d, {r: stats.cond_prob[r] for r in rows},
                                  {c: stats.cond_prob[c] for c in cols})


def _level_pair(stats: CellStats, d: int) -> tuple[tuple[Vector, ...], tuple[Vector, ...]]:
    if not stats.has_level(d) or not stats.has_level(d - 1):
        raise LevelError(f"levels {d} and {d - 1} must both be observed")
    return tuple(stats.support[d]), tuple(stats.support[d - 1])


def product_weights(stats: CellStats, d: int) -> WeightScheme:
    rows, cols = _level_pair(stats, d)
    entries = {(r, c): stats.cond_prob[r] * stats.cond_prob[c] for r in rows for c in cols}
    return WeightScheme(d, rows, cols, entries, "product")


class _Simplex:
    """Transportation simplex on a spanning-tree basis, exact arithmetic."""

    def __init__(self, supplies, demands, cost):
        self.m, self.n = len(supplies), len(demands)
        self.cost = cost
        self.x: dict[tuple[int, int], Fraction] = {}
        self._initial_basis(list(supplies), list(demands))

    def _initial_basis(self, supply, demand):
        # congruent (zero-cost) cells first, then every cell row-major;
        # each allocation closes exactly one line, so the basis is a spanning tree
        m, n = self.m, self.n
        order = [(i, j) for i in range(m) for j in range(n) if self.cost[i][j] == 0]
        order += [(i, j) for i in range(m) for j in range(n)]
        row_open, col_open = [True] * m, [True] * n
        open_rows, open_cols = m, n
        for i, j in order:
            if not (row_open[i] and col_open[j]):
                continue
            amt = min(supply[i], demand[j])
            self.x[(i, j)] = amt
            supply[i] -= amt
            demand[j] -= amt
            if open_rows == 1 and open_cols == 1:
                break
            if supply[i] == 0 and open_rows > 1:
                row_open[i] = False
                open_rows -= 1
            else:
                col_open[j] = False
                open_cols -= 1
        if len(self.x) != m + n - 1:
            raise AggTreatError("initial basis is not a spanning tree")

    def _adjacency(self):
        adj = {}
        for i, j in self.x:
            adj.setdefault(("r", i), []).append(("c", j))
            adj.setdefault(("c", j), []).append(("r", i))
        return adj

    def _potentials(self, adj):
        u, v = {0: 0}, {}
        queue = deque([("r", 0)])
        while queue:
            kind, a = queue.popleft()
            for nb in adj.get((kind, a), []):
                b = nb[1]
                if kind == "r" and b not in v:
                    v[b] = self.cost[a][b] - u[a]
                    queue.append(nb)
                elif kind == "c" and b not in u:
                    u[b] = self.cost[b][a] - v[a]
                    queue.append(nb)
        return u, v

    def _path(self, adj, i, j):
        """Tree path from row node i to column node j, as a list of cells."""
        start, goal = ("r", i), ("c", j)
        prev = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nb in adj.get(node, []):
                if nb not in prev:
                    prev[nb] = node
                    queue.append(nb)
        cells, node = [], goal
        while prev[node] is not None:
            p = prev[node]
            cells.append((p[1], node[1]) if p[0] == "r" else (node[1], p[1]))
            node = p
        cells.reverse()
        return cells

    def solve(self, max_iter: int = 100_000):
        for _ in range(max_iter):
            adj = self._adjacency()
            u, v = self._potentials(adj)
            entering = None
            for i in range(self.m):
                for j in range(self.n):
                    if (i, j) not in self.x and self.cost[i][j] - u[i] - v[j] < 0:
                        entering = (i, j)
                        break
                if entering:
                    break
            if entering is None:
                return self.x
            path = self._path(adj, *entering)
            minus = path[0::2]
            plus = path[1::2]
            theta = min(self.x[c] for c in minus)
            leaving = min(c for c in minus if self.x[c] == theta)
            for c in minus:
                self.x[c] -= theta
            for c in plus:
                self.x[c] += theta
            self.x[entering] = theta
            del self.x[leaving]
        raise AggTreatError("transportation simplex did not converge")


def solve_min_incongruent(problem: TransportProblem) -> tuple[Fraction, WeightScheme]:
    """Exact minimal weight on incongruent pairs and one optimal scheme.

    The optimal scheme is one basic solution among possibly many; only the
    share is unique.
    """
    x = _Simplex(problem.supplies, problem.demands, problem.cost).solve()
    entries = {}
    share = Fraction(0)
    for i, r in enumerate(problem.rows):
        for j, c in enumerate(problem.cols):
            w = x.get((i, j), Fraction(0))
            entries[(r, c)] = w
            share += problem.cost[i][j] * w
    return share, WeightScheme(problem.d, problem.rows, problem.cols, entries, "minimally_incongruent")


@dataclass(frozen=True)
class SchemeResiduals:
    row: dict[Vector, Fraction]
    col: dict[Vector, Fraction]
    negative: Fraction
    outside: tuple[tuple[Vector, Vector], ...]

    @property
    def max_residual(self) -> Fraction:
        vals = [abs(r) for r in self.row.values()] + [abs(c) for c in self.col.values()] + [self.negative]
        return max(vals, default=Fraction(0))

    def ok(self, tol: float = 1e-9) -> bool:
        return not self.outside and self.max_residual <= tol


def check_scheme(scheme: WeightScheme, stats: CellStats) -> SchemeResiduals:
    """Residuals of the row/column constraints and of non-negativity."""
    rows, cols = tuple(stats.support.get(scheme.d, ())), tuple(stats.support.get(scheme.d - 1, ()))
    rs, cs = {r: Fraction(0) for r in rows}, {c: Fraction(0) for c in cols}
    outside = []
    for (hi, lo), w in scheme.entries.items():
        w = snap(w)
        if hi not in rs or lo not in cs:
            outside.append((hi, lo))
            continue
        rs[hi] += w
        cs[lo] += w
    row = {r: rs[r] - stats.cond_prob[r] for r in rows}
    col = {c: cs[c] - stats.cond_prob[c] for c in cols}
    negative = max([Fraction(0)] + [-snap(w) for w in scheme.entries.values()])
    return SchemeResiduals(row, col, negative, tuple(outside))


@dataclass(frozen=True)
class MeanFlag:
    d: int
    k: int
    mean: Fraction       # E[S_k | D=d], grid units
    prev_mean: Fraction  # E[S_k | D=d-1], grid units

    @property
    def flagged(self) -> bool:
        return self.mean < self.prev_mean


@dataclass(frozen=True)
class Diagnostic:
    flags: tuple[MeanFlag, ...]
    means: dict[int, tuple[Fraction, ...]]  # d -> (E[S_k|D=d])_k

    def flagged(self) -> list[MeanFlag]:
        return [f for f in self.flags if f.flagged]

    def figure_rows(self, stats: CellStats) -> list[tuple]:
        """(d, sub-treatment, mean) in original units, for a stacked-means plot."""
        grid = stats.grid
        return [(grid.to_original(d), grid.names[k], grid.to_original(m))
                for d, ms in sorted(self.means.items()) for k, m in enumerate(ms)]


def decreasing_means_diagnostic(stats: CellStats) -> Diagnostic:
    """Flag (k, d) where E[S_k | D=d] < E[S_k | D=d-1].

    Any flag forces a strictly positive minimal incongruent share at d.
    """
    means = {d: tuple(stats.subtreatment_mean(d, k) for k in range(stats.K)) for d in stats.levels}
    flags = []
    for d in stats.levels:
        if d - 1 in means:
            for k in range(stats.K):
                flags.append(MeanFlag(d, k, means[d][k], means[d - 1][k]))
    return Diagnostic(tuple(flags), means)


@dataclass(frozen=True)
class LevelIncongruency:
    d: int
    share: Fraction
    scheme: WeightScheme
    flags: tuple[MeanFlag, ...]


@dataclass(frozen=True)
class IncongruencyReport:
    levels: tuple[LevelIncongruency, ...]
    diagnostic: Diagnostic

    def share(self, d: int) -> Fraction:
        for lv in self.levels:
            if lv.d == d:
                return lv.share
        raise LevelError(f"level {d} has no marginal set")

    def as_dict(self, stats: CellStats) -> dict:
        grid = stats.grid
        return {
            "note": "weights are one optimal scheme among possibly many; the share is unique",
            "levels": [
                {
                    "d": float(grid.to_original(lv.d)),
                    "minimal_share": float(lv.share),
                    "flags": [{"subtreatment": grid.names[f.k],
                               "mean": float(grid.to_original(f.mean)),
                               "prev_mean": float(grid.to_original(f.prev_mean))}
                              for f in lv.flags],
                    "entries": lv.scheme.as_dict()["entries"],
                }
                for lv in self.levels
            ],
        }


def incongruency_report(stats: CellStats, levels: Sequence[int] | None = None) -> IncongruencyReport:
    diag = decreasing_means_diagnostic(stats)
    todo = [d for d in stats.levels if stats.has_level(d - 1)] if levels is None else list(levels)
    out = []
    for d in todo:
        share, scheme = solve_min_incongruent(TransportProblem.from_stats(stats, d))
        flags = tuple(f for f in diag.flagged() if f.d == d)
        out.append(LevelIncongruency(d, share, scheme, flags))
    return IncongruencyReport(tuple(out), diag)

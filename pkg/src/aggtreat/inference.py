"""Bootstrap standard errors and within-level mean-equality tests."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.stats import norm
from statsmodels.stats.multitest import multipletests

from .core import Dataset, Vector, cell_stats
from .errors import AggTreatError, ValidationError
from .estimate import evaluate

DEFAULT_B = 1000


@dataclass(frozen=True)
class BootstrapResult:
    kind: str
    args: tuple
    point: float | None
    se: float | None
    replicates_used: int
    replicates_undefined: int
    seed: int

    @property
    def unreliable(self) -> bool:
        return self.replicates_undefined * 2 >= self.replicates_used + self.replicates_undefined

    def ci(self, z: float = 1.96) -> tuple[float, float] | None:
        if self.point is None or self.se is None:
            return None
        return self.point - z * self.se, self.point + z * self.se


def _value(stats, kind, args) -> float | None:
    try:
        e = evaluate(stats, kind, *args)
    except AggTreatError:
        return None
    return float(e.value) if e.defined else None


def bootstrap(data: Dataset, requests: Sequence[tuple], B: int = DEFAULT_B, seed: int = 0) -> list[BootstrapResult]:
    """Nonparametric bootstrap over units.

    ``requests`` are ``(kind, *args)`` tuples understood by ``estimate.evaluate``.
    Replicate ``b`` uses its own generator spawned from ``seed``, so results
    do not depend on evaluation order. Replicates where an estimand is
    undefined are dropped and counted.
    """
    if B < 2:
        raise ValidationError("B must be at least 2")
    if data.n == 0:
        raise ValidationError("cannot bootstrap an empty dataset")
    requests = [tuple(r) for r in requests]
    full = cell_stats(data)
    points = [_value(full, r[0], r[1:]) for r in requests]
    draws = [[] for _ in requests]
    for child in np.random.SeedSequence(seed).spawn(B):
        rng = np.random.default_rng(child)
        stats = cell_stats(data.subset(rng.integers(0, data.n, data.n)))
        for i, r in enumerate(requests):
            v = _value(stats, r[0], r[1:])
            if v is not None:
                draws[i].append(v)
    out = []
    for r, point, vals in zip(requests, points, draws):
        se = float(np.std(vals, ddof=1)) if len(vals) >= 2 else None
        out.append(BootstrapResult(r[0], r[1:], point, se, len(vals), B - len(vals), seed))
    return out


@dataclass(frozen=True)
class PairTest:
    group: object     # level d, or the coarse vector when testing a finer split
    a: Vector
    b: Vector
    n_a: int
    n_b: int
    diff: float
    stat: float
    p_raw: float
    p_adj: float = float("nan")


@dataclass(frozen=True)
class SutvaTestReport:
    alpha: float
    method: str
    tests: tuple[PairTest, ...]
    excluded: tuple[Vector, ...]   # cells with fewer than two units
    note: str = ""

    @property
    def reject(self) -> bool:
        return any(t.p_adj <= self.alpha for t in self.tests)


def welch_z(ya: np.ndarray, yb: np.ndarray) -> tuple[float, float, float]:
    """Difference in means, Welch statistic and two-sided normal p-value."""
    diff = float(ya.mean() - yb.mean())
    se = float(np.sqrt(ya.var(ddof=1) / len(ya) + yb.var(ddof=1) / len(yb)))
    if se == 0:
        return diff, (0.0 if diff == 0 else float(np.sign(diff) * np.inf)), (1.0 if diff == 0 else 0.0)
    z = diff / se
    return diff, z, float(2 * norm.sf(abs(z)))


def sutva_d_test(data: Dataset, alpha: float = 0.05, finer: Dataset | None = None,
                 method: str = "holm") -> SutvaTestReport:
    """Test equality of cell means among vectors sharing an aggregate level.

    With ``finer`` (same units, finer sub-treatment coding) the groups are
    the vectors of ``data`` and the cells are the finer vectors within each.
    """
    if method not in ("holm", "bonferroni"):
        raise ValidationError("method must be 'holm' or 'bonferroni'")
    if finer is None:
        groups_of = data.d
        cells = data.s
    else:
        if finer.n != data.n:
            raise ValidationError("finer dataset must describe the same units")
        groups_of = [tuple(int(x) for x in row) for row in data.s]
        cells = finer.s
    cell_keys = [tuple(int(x) for x in row) for row in cells]
    members: dict = {}
    for i, (g, c) in enumerate(zip(groups_of, cell_keys)):
        g = g if isinstance(g, tuple) else int(g)
        members.setdefault(g, {}).setdefault(c, []).append(i)

    tests, excluded = [], []
    for g in sorted(members):
        ok = []
        for c in sorted(members[g], reverse=True):
            if len(members[g][c]) >= 2:
                ok.append(c)
            else:
                excluded.append(c)
        for a, b in combinations(ok, 2):
            ya, yb = data.y[members[g][a]], data.y[members[g][b]]
            diff, z, p = welch_z(ya, yb)
            tests.append(PairTest(g, a, b, len(ya), len(yb), diff, z, p))
    if not tests:
        return SutvaTestReport(alpha, method, (), tuple(excluded), "no level has two cells with n >= 2")
    _, p_adj, _, _ = multipletests([t.p_raw for t in tests], alpha=alpha, method=method)
    tests = tuple(PairTest(t.group, t.a, t.b, t.n_a, t.n_b, t.diff, t.stat, t.p_raw, float(pa))
                  for t, pa in zip(tests, p_adj))
    return SutvaTestReport(alpha, method, tests, tuple(excluded))

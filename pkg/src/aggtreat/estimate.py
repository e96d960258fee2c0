"""Plug-in estimands computed from CellStats, and regression weight decompositions.

Every function here is a pure function of a CellStats, so the bootstrap can
re-derive statistics per replicate and call the same code. Undefined
quantities come back as ``Estimand(defined=False)`` with a note rather than
as zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

from .congruence import is_congruent
from .core import CellStats, Number, Vector, fmt_vector, zeros
from .errors import ContractError, DegenerateError, ValidationError


@dataclass(frozen=True)
class Estimand:
    kind: str
    args: tuple = ()
    value: Number | None = None
    defined: bool = True
    n_used: int = 0
    note: str = ""
    dropped_mass: Fraction = Fraction(0)

    def __post_init__(self):
        if not self.defined and self.value is not None:
            raise ValueError("an undefined estimand carries no value")

    def as_float(self) -> float | None:
        return None if self.value is None else float(self.value)

    def label(self) -> str:
        if not self.args:
            return self.kind
        parts = [fmt_vector(a) if isinstance(a, tuple) else str(a) for a in self.args]
        return f"{self.kind}({'; '.join(parts)})"


def _na(kind: str, args: tuple, note: str) -> Estimand:
    return Estimand(kind, args, None, False, 0, note)


def _n(stats: CellStats, cells) -> int:
    if stats.counts is None:
        return 0
    return sum(stats.counts.get(s, 0) for s in set(cells))


def _missing(stats: CellStats, *cells: Vector) -> list[Vector]:
    return [s for s in cells if s not in stats.means]


def _level_n(stats: CellStats, *levels: int) -> int:
    return _n(stats, [s for d in levels for s in stats.support.get(d, ())])


def cell_mean(stats: CellStats, s: Vector) -> Estimand:
    """E[Y|S=s]."""
    s = tuple(s)
    if s not in stats.means:
        return _na("mean", (s,), f"missing cell {fmt_vector(s)}")
    return Estimand("mean", (s,), stats.means[s], True, _n(stats, (s,)))


def matt(stats: CellStats, hi: Vector, lo: Vector) -> Estimand:
    """MATT(s_d, s_{d-1}) = E[Y|S=s_d] - E[Y|S=s_{d-1}]."""
    hi, lo = tuple(hi), tuple(lo)
    if sum(hi) != sum(lo) + 1:
        raise ContractError(f"{hi} is not one level above {lo}")
    kind = "MATT+" if is_congruent(hi, lo) else "MATT-"
    gone = _missing(stats, hi, lo)
    if gone:
        return _na(kind, (hi, lo), "missing cell " + ", ".join(fmt_vector(s) for s in gone))
    return Estimand(kind, (hi, lo), stats.means[hi] - stats.means[lo], True, _n(stats, (hi, lo)))


def satt(stats: CellStats, a: Vector, b: Vector) -> Estimand:
    """SATT(a, b) = E[Y|S=a] - E[Y|S=b] for a single unit exchange."""
    a, b = tuple(a), tuple(b)
    if sum(a) != sum(b) or sum(abs(x - y) for x, y in zip(a, b)) != 2:
        raise ContractError(f"{a} and {b} are not one unit exchange apart")
    gone = _missing(stats, a, b)
    if gone:
        return _na("SATT", (a, b), "missing cell " + ", ".join(fmt_vector(s) for s in gone))
    return Estimand("SATT", (a, b), stats.means[a] - stats.means[b], True, _n(stats, (a, b)))


def att(stats: CellStats, s: Vector) -> Estimand:
    s = tuple(s)
    base = zeros(len(s))
    if base not in stats.means:
        return _na("ATT", (s,), "baseline missing")
    if s not in stats.means:
        return _na("ATT", (s,), f"missing cell {fmt_vector(s)}")
    return Estimand("ATT", (s,), stats.means[s] - stats.means[base], True, _n(stats, (s, base)))


def aatt(stats: CellStats, d: int) -> Estimand:
    """AATT(d) = E[Y|D=d] - E[Y|D=0]."""
    if d <= 0:
        raise ContractError("AATT is defined for d > 0")
    if not stats.has_level(0):
        return _na("AATT", (d,), "baseline missing")
    if not stats.has_level(d):
        return _na("AATT", (d,), f"level {d} not observed")
    return Estimand("AATT", (d,), stats.level_mean[d] - stats.level_mean[0], True, _level_n(stats, 0, d))


def scaled_aatt(stats: CellStats, d: int) -> Estimand:
    """AATT(d) / d, with d in original units."""
    e = aatt(stats, d)
    if not e.defined:
        return _na("scaled_AATT", (d,), e.note)
    return Estimand("scaled_AATT", (d,), e.value / stats.grid.to_original(Fraction(d)), True, e.n_used)


def delta(stats: CellStats, d: int) -> Estimand:
    """delta(d) = E[Y|D=d] - E[Y|D=d-1], adjacent observed levels only."""
    if not (stats.has_level(d) and stats.has_level(d - 1)):
        return _na("delta", (d,), f"levels {d} and {d - 1} are not both observed")
    return Estimand("delta", (d,), stats.level_mean[d] - stats.level_mean[d - 1], True,
                    _level_n(stats, d, d - 1))


def _congruent_average(stats: CellStats, d: int, joint: Mapping[tuple[Vector, Vector], Number],
                       kind: str) -> Estimand:
    num, den = 0, 0
    cells = set()
    for (hi, lo), w in joint.items():
        if w and is_congruent(hi, lo):
            gone = _missing(stats, hi, lo)
            if gone:
                return _na(kind, (d,), "missing cell " + ", ".join(fmt_vector(s) for s in gone))
            num = num + w * (stats.means[hi] - stats.means[lo])
            den = den + w
            cells.update((hi, lo))
    if den == 0:
        return _na(kind, (d,), "no congruent mass")
    return Estimand(kind, (d,), num / den, True, _n(stats, cells))


def product_joint(stats: CellStats, d: int) -> dict[tuple[Vector, Vector], Fraction]:
    return {(hi, lo): stats.cond_prob[hi] * stats.cond_prob[lo]
            for hi in stats.support.get(d, ()) for lo in stats.support.get(d - 1, ())}


def amatt_plus(stats: CellStats, d: int) -> Estimand:
    """Average of congruent MATT+ at level d under normalized product weights."""
    if not (stats.has_level(d) and stats.has_level(d - 1)):
        return _na("AMATT_plus", (d,), f"levels {d} and {d - 1} are not both observed")
    return _congruent_average(stats, d, product_joint(stats, d), "AMATT_plus")


def amatt_tilde(stats: CellStats, d: int,
                latent_joint: Mapping[tuple[Vector, Vector], Number] | None = None) -> Estimand:
    """Average of congruent MATT+ under the latent-type joint law of (S_d, S_{d-1}).

    Without ``latent_joint`` the sub-treatment types are taken to be
    independent, so the joint is the product of the observed marginals.
    """
    if latent_joint is None:
        if not (stats.has_level(d) and stats.has_level(d - 1)):
            return _na("AMATT_tilde", (d,), f"levels {d} and {d - 1} are not both observed")
        latent_joint = product_joint(stats, d)
    return _congruent_average(stats, d, latent_joint, "AMATT_tilde")


PER_LEVEL: dict[str, Callable[[CellStats, int], Estimand]] = {
    "delta": delta,
    "AMATT_plus": amatt_plus,
    "AATT": aatt,
    "scaled_AATT": scaled_aatt,
}


def overall(stats: CellStats, kind: str) -> Estimand:
    """E[est(D) | D > 0], renormalized over levels where est(d) is defined."""
    if kind not in PER_LEVEL:
        raise ValidationError(f"unknown per-level estimand {kind!r}")
    name = f"overall_{kind}"
    levels = stats.positive_levels()
    mass = sum((stats.level_prob[d] for d in levels), Fraction(0))
    if mass == 0:
        return _na(name, (), "no treated mass")
    acc, used, n = 0, Fraction(0), 0
    dropped = []
    for d in levels:
        e = PER_LEVEL[kind](stats, d)
        w = stats.level_prob[d] / mass
        if e.defined:
            acc = acc + w * e.value
            used += w
            n = max(n, e.n_used)
        else:
            dropped.append(d)
    if used == 0:
        return _na(name, (), "no level defined")
    note = f"dropped levels {dropped}" if dropped else ""
    return Estimand(name, (), acc / used, True, _level_n(stats, *stats.levels) if stats.counts else 0,
                    note, 1 - used)


@dataclass(frozen=True)
class RegressionDecomposition:
    alpha0: Number
    alpha1: Number
    mean_d: Fraction      # original units
    var_d: Fraction       # original units
    marginal_weights: dict[int, Fraction] = field(default_factory=dict)
    marginal_blocks: dict[int, Number] = field(default_factory=dict)
    baseline_weights: dict[int, Fraction] = field(default_factory=dict)
    baseline_blocks: dict[int, Number] | None = None

    def marginal_reconstruction(self) -> Number:
        return sum(self.marginal_weights[d] * self.marginal_blocks[d] for d in self.marginal_weights)

    def baseline_reconstruction(self) -> Number | None:
        if self.baseline_blocks is None:
            return None
        return sum(self.baseline_weights[d] * self.baseline_blocks[d] for d in self.baseline_blocks)


def regression(stats: CellStats) -> RegressionDecomposition:
    """OLS of Y on D (original units) and its two weight decompositions.

    Marginal form: alpha1 = sum_j w_j * (E[Y|d_j] - E[Y|d_{j-1}]) / (d_j - d_{j-1})
    over consecutive observed levels, with
    w_j = (d_j - d_{j-1}) (E[D|D>=d_j] - E[D]) P(D>=d_j) / Var(D).
    With no gaps in the observed levels the blocks are delta(d) per grid step.

    Baseline form: alpha1 = sum_d w~(d) (E[Y|D=d] - E[Y|D=0]) / d with
    w~(d) = d (d - E[D]) P(D=d) / Var(D); requires D=0 to be observed.
    """
    step = stats.grid.step
    levels = stats.levels
    p = {d: stats.level_prob[d] for d in levels}
    mu = {d: stats.level_mean[d] for d in levels}
    x = {d: d * step for d in levels}
    ed = sum(p[d] * x[d] for d in levels)
    var = sum(p[d] * (x[d] - ed) ** 2 for d in levels)
    if var == 0:
        raise DegenerateError("D is constant; the regression slope is not identified")
    cov = 0
    for d in levels:
        cov = cov + p[d] * (x[d] - ed) * mu[d]
    alpha1 = cov / var
    ey = 0
    for d in levels:
        ey = ey + p[d] * mu[d]
    alpha0 = ey - alpha1 * ed

    w, blocks = {}, {}
    for prev, d in zip(levels[:-1], levels[1:]):
        tail = [t for t in levels if t >= d]
        p_tail = sum(p[t] for t in tail)
        e_tail = sum(p[t] * x[t] for t in tail) / p_tail
        span = x[d] - x[prev]
        w[d] = span * (e_tail - ed) * p_tail / var
        blocks[d] = (mu[d] - mu[prev]) / span

    bw = {d: x[d] * (x[d] - ed) * p[d] / var for d in levels if d > 0}
    bb = None
    if 0 in mu:
        bb = {d: (mu[d] - mu[0]) / x[d] for d in bw}
    return RegressionDecomposition(alpha0, alpha1, ed, var, w, blocks, bw, bb)


def alpha1(stats: CellStats) -> Estimand:
    try:
        reg = regression(stats)
    except DegenerateError as exc:
        return _na("alpha1", (), str(exc))
    return Estimand("alpha1", (), reg.alpha1, True, stats.n or 0)


ESTIMANDS: dict[str, Callable[..., Estimand]] = {
    "mean": cell_mean, "MATT": matt, "SATT": satt, "ATT": att, "AATT": aatt, "scaled_AATT": scaled_aatt,
    "delta": delta, "AMATT_plus": amatt_plus, "AMATT_tilde": amatt_tilde,
    "overall_delta": lambda st: overall(st, "delta"),
    "overall_AMATT_plus": lambda st: overall(st, "AMATT_plus"),
    "overall_AATT": lambda st: overall(st, "AATT"),
    "overall_scaled_AATT": lambda st: overall(st, "scaled_AATT"),
    "alpha1": alpha1,
}


def evaluate(stats: CellStats, kind: str, *args) -> Estimand:
    if kind not in ESTIMANDS:
        raise ValidationError(f"unknown estimand {kind!r}; choose from {sorted(ESTIMANDS)}")
    return ESTIMANDS[kind](stats, *args)


@dataclass(frozen=True)
class SummaryRow:
    panel: str
    parameter: str
    kind: str
    needs_s_data: bool
    incongruity: bool


SUMMARY_ROWS = (
    SummaryRow("I. Regression", "alpha1", "alpha1", False, True),
    SummaryRow("II. Marginal", "E[delta(D)|D>0]", "overall_delta", False, True),
    SummaryRow("II. Marginal", "E[AMATT+(D)|D>0]", "overall_AMATT_plus", True, False),
    SummaryRow("III. Non-marginal", "E[AATT(D)|D>0]", "overall_AATT", False, False),
    SummaryRow("III. Non-marginal", "E[AATT(D)/D|D>0]", "overall_scaled_AATT", False, False),
)


def summary(stats: CellStats) -> list[tuple[SummaryRow, Estimand]]:
    """The overall parameters, one row each, with their data and incongruity flags."""
    return [(row, evaluate(stats, row.kind)) for row in SUMMARY_ROWS]


def per_level(stats: CellStats) -> list[dict]:
    """delta, AMATT+, AATT and AATT/d at every positive level."""
    out = []
    for d in stats.positive_levels():
        row = {"d": stats.grid.to_original(d)}
        for kind, fn in PER_LEVEL.items():
            row[kind] = fn(stats, d)
        out.append(row)
    return out

"""Ground-truth populations with latent sub-treatment types.

A latent type fixes the sub-treatment vector a unit would take at every
aggregate level (its path). Units draw a type and an aggregate level D,
realize S = path(D), and Y = E[Y(S) | type] + noise. Every population
quantity (cell means, causal MATTs, selection-bias terms, latent joints)
is computed exactly with rationals, which makes the population a
brute-force oracle for the identities the estimators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import chains, estimate, transport
from .congruence import is_congruent, marginal_sets
from .core import CellStats, Dataset, GridSpec, Vector, add, canonical_order, fmt_vector, parse_vector, unit, zeros
from .errors import SpecError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass(frozen=True)
class LatentType:
    """Sub-treatment path for levels 1..N (level 0 is the zero vector).

    ``shift`` moves every potential outcome of the type; ``untreated_shift``
    moves only Y(0). Either one makes sorting on the type a source of
    selection bias.
    """

    path: tuple[Vector, ...]
    mass: Fraction | None = None
    shift: Fraction = Fraction(0)
    untreated_shift: Fraction = Fraction(0)
    name: str = ""

    def at(self, d: int) -> Vector:
        return zeros(len(self.path[0])) if d == 0 else self.path[d - 1]


@dataclass(frozen=True)
class OutcomeModel:
    """Mean potential outcome E[Y(s)] for a type with no shift.

    kinds: ``free`` (explicit table ``base``), ``homogeneous`` (baseline plus
    beta_1 + ... + beta_A(s)) and ``linear`` (baseline + theta * A(s) in
    original units).
    """

    kind: str = "free"
    base: Mapping[Vector, Fraction] = field(default_factory=dict)
    baseline: Fraction = Fraction(0)
    betas: tuple[Fraction, ...] = ()
    theta: Fraction = Fraction(0)
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("free", "homogeneous", "linear"):
            raise SpecError(f"unknown outcome kind {self.kind!r}")
        if self.noise_sd < 0:
            raise SpecError("noise_sd must be non-negative")

    def mean(self, s: Vector, step: Fraction) -> Fraction:
        a = sum(s)
        if self.kind == "free":
            if s not in self.base:
                if a == 0:
                    return self.baseline
                raise SpecError(f"outcome table has no entry for {fmt_vector(s)}")
            return self.base[s]
        if self.kind == "homogeneous":
            if a > len(self.betas):
                raise SpecError(f"no beta for level {a}")
            return self.baseline + sum(self.betas[:a], Fraction(0))
        return self.baseline + self.theta * a * step


@dataclass(frozen=True)
class SortingSpec:
    """How units are distributed over (type, D).

    ``independent``: D has law ``level_probs`` regardless of type.
    ``table``: ``table`` maps (type index, d) to joint mass.
    """

    kind: str = "independent"
    level_probs: tuple[Fraction, ...] = ()
    table: Mapping[tuple[int, int], Fraction] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    grid: GridSpec
    types: tuple[LatentType, ...]
    outcome: OutcomeModel
    sorting: SortingSpec
    congruent_only: bool = False
    name: str = "scenario"

    def __post_init__(self):
        validate(self)

    @property
    def max_level(self) -> int:
        return len(self.types[0].path)


def validate(sc: Scenario) -> None:
    if not sc.types:
        raise SpecError("at least one latent type is required")
    N = len(sc.types[0].path)
    for i, t in enumerate(sc.types):
        if len(t.path) != N:
            raise SpecError(f"type {i} path has {len(t.path)} levels, expected {N}")
        for d in range(1, N + 1):
            v = t.at(d)
            if len(v) != sc.grid.K or min(v) < 0:
                raise SpecError(f"type {i} level {d}: bad vector {v}")
            if sum(v) != d:
                raise SpecError(f"type {i}: path entry {fmt_vector(v)} is not at level {d}")
            if sc.congruent_only and not is_congruent(v, t.at(d - 1)):
                raise SpecError(f"type {i}: step to level {d} is incongruent")
    if sc.sorting.kind == "independent":
        if len(sc.sorting.level_probs) != N + 1:
            raise SpecError(f"level_probs needs {N + 1} entries")
        if sum(sc.sorting.level_probs) != 1 or min(sc.sorting.level_probs) < 0:
            raise SpecError("level_probs must be non-negative and sum to 1")
        masses = [t.mass for t in sc.types]
        if any(m is None for m in masses) or sum(masses) != 1 or min(masses) < 0:
            raise SpecError("type masses must be given, non-negative and sum to 1")
    elif sc.sorting.kind == "table":
        tab = sc.sorting.table
        if sum(tab.values()) != 1 or min(tab.values()) < 0:
            raise SpecError("sorting table must be non-negative and sum to 1")
        for (t, d) in tab:
            if not (0 <= t < len(sc.types) and 0 <= d <= N):
                raise SpecError(f"sorting table cell ({t}, {d}) out of range")
        for i, t in enumerate(sc.types):
            implied = sum((m for (j, _), m in tab.items() if j == i), Fraction(0))
            if t.mass is not None and t.mass != implied:
                raise SpecError(f"type {i} mass {t.mass} differs from the table marginal {implied}")
    else:
        raise SpecError(f"unknown sorting kind {sc.sorting.kind!r}")


class LatentPopulation:
    """Exact population quantities for a scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.grid = scenario.grid
        self.step = scenario.grid.step
        N = scenario.max_level
        srt = scenario.sorting
        if srt.kind == "independent":
            joint = {(i, d): t.mass * srt.level_probs[d]
                     for i, t in enumerate(scenario.types) for d in range(N + 1)}
        else:
            joint = dict(srt.table)
        self.joint = {k: v for k, v in joint.items() if v != 0}
        prob: dict[Vector, Fraction] = {}
        for (i, d), w in self.joint.items():
            s = scenario.types[i].at(d)
            prob[s] = prob.get(s, Fraction(0)) + w
        self.prob = prob
        self.means = {s: self.conditional_mean(s, s) for s in prob}

    def potential_mean(self, i: int, x: Vector) -> Fraction:
        t = self.scenario.types[i]
        val = self.scenario.outcome.mean(x, self.step) + t.shift
        if sum(x) == 0:
            val += t.untreated_shift
        return val

    def conditional_mean(self, x: Vector, s: Vector) -> Fraction:
        """E[Y(x) | S = s]."""
        num = Fraction(0)
        for (i, d), w in self.joint.items():
            if self.scenario.types[i].at(d) == s:
                num += w * self.potential_mean(i, x)
        return num / self.prob[s]

    def stats(self) -> CellStats:
        return CellStats.from_distribution(self.prob, self.means, self.grid)

    # causal parameters on the treated and their selection-bias companions
    def matt(self, hi: Vector, lo: Vector) -> Fraction:
        return self.conditional_mean(hi, hi) - self.conditional_mean(lo, hi)

    def bias(self, hi: Vector, lo: Vector) -> Fraction:
        """B(hi, lo) = E[Y(lo)|S=hi] - E[Y(lo)|S=lo]."""
        return self.conditional_mean(lo, hi) - self.conditional_mean(lo, lo)

    def satt(self, a: Vector, b: Vector) -> Fraction:
        return self.conditional_mean(a, a) - self.conditional_mean(b, a)

    def satt_bias(self, a: Vector, b: Vector) -> Fraction:
        return self.conditional_mean(b, a) - self.conditional_mean(b, b)

    def att(self, s: Vector) -> Fraction:
        z = zeros(len(s))
        return self.conditional_mean(s, s) - self.conditional_mean(z, s)

    def untreated_bias(self, s: Vector) -> Fraction:
        z = zeros(len(s))
        return self.conditional_mean(z, s) - self.conditional_mean(z, z)

    def latent_joint(self, d: int, conditional: bool = True) -> dict[tuple[Vector, Vector], Fraction]:
        """Law of (S(d), S(d-1)) across types.

        With ``conditional`` the types are weighted by their mass on
        D in {d, d-1}; otherwise by their unconditional mass.
        """
        weights: dict[int, Fraction] = {}
        for (i, e), w in self.joint.items():
            if not conditional or e in (d, d - 1):
                weights[i] = weights.get(i, Fraction(0)) + w
        total = sum(weights.values())
        out: dict[tuple[Vector, Vector], Fraction] = {}
        if total == 0:
            return out
        for i, w in weights.items():
            t = self.scenario.types[i]
            key = (t.at(d), t.at(d - 1))
            out[key] = out.get(key, Fraction(0)) + w / total
        return out

    def lattice_means(self) -> dict[Vector, Fraction]:
        """Cell means on the support, extended by the outcome model elsewhere."""
        K, N = self.grid.K, self.scenario.max_level + 1  # parents sit one level up
        out = {}
        for s in _box(K, N):
            try:
                out[s] = self.scenario.outcome.mean(s, self.step)
            except SpecError:
                out[s] = Fraction(0)
        out.update(self.means)
        return out

    def truth(self) -> dict:
        """Population quantities as plain floats, for the sidecar file."""
        st = self.stats()
        g = self.grid
        levels = []
        for d in st.levels:
            row = {"d": float(g.to_original(d)), "prob": float(st.level_prob[d]),
                   "mean": float(st.level_mean[d])}
            if d > 0:
                for kind, fn in estimate.PER_LEVEL.items():
                    e = fn(st, d)
                    row[kind] = e.as_float()
                if st.has_level(d - 1):
                    row["minimal_share"] = float(
                        transport.solve_min_incongruent(transport.TransportProblem.from_stats(st, d))[0])
                    tilde = estimate.amatt_tilde(st, d, self.latent_joint(d))
                    row["AMATT_tilde"] = tilde.as_float()
            levels.append(row)
        out = {
            "scenario": self.scenario.name,
            "cells": [{"s": fmt_vector(s), "prob": float(self.prob[s]), "mean": float(self.means[s]),
                       "ATT": float(self.att(s))} for s in canonical_order(self.prob)],
            "levels": levels,
        }
        for row, e in estimate.summary(st):
            out[row.kind] = e.as_float()
        return out


def _box(K: int, N: int):
    grids = np.indices([N + 1] * K).reshape(K, -1).T
    return [tuple(int(x) for x in r) for r in grids if r.sum() <= N]


def generate(scenario: Scenario, n: int, seed: int) -> tuple[Dataset, LatentPopulation]:
    """Draw ``n`` units. Same scenario and seed give identical data."""
    if n < 1:
        raise SpecError("n must be positive")
    pop = LatentPopulation(scenario)
    cells = sorted(pop.joint)
    p = np.array([float(pop.joint[c]) for c in cells])
    p /= p.sum()
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(cells), size=n, p=p)
    noise = rng.standard_normal(n) * scenario.outcome.noise_sd
    vecs = [scenario.types[i].at(d) for i, d in cells]
    means = np.array([float(pop.potential_mean(i, scenario.types[i].at(d))) for i, d in cells])
    s = np.array([vecs[k] for k in pick], dtype=np.int64).reshape(n, scenario.grid.K)
    y = means[pick] + noise
    return Dataset(y, s, scenario.grid, unit_ids=tuple(range(n))), pop


@dataclass(frozen=True)
class OracleReport:
    residuals: dict[str, Fraction]

    @property
    def max_residual(self) -> Fraction:
        return max((abs(v) for v in self.residuals.values()), default=Fraction(0))

    def ok(self, tol=0) -> bool:
        return self.max_residual <= tol


def oracle_check(pop: LatentPopulation) -> OracleReport:
    """Residuals of every exact identity on the population (all should be 0)."""
    st = pop.stats()
    m = st.means
    full = pop.lattice_means()
    res: dict[str, Fraction] = {}

    def track(name, value):
        res[name] = max(res.get(name, Fraction(0)), abs(value))

    for ms in marginal_sets(st.support):
        d = ms.d
        dl = estimate.delta(st, d).value
        track("level_identity_product", dl - transport.product_weights(st, d).apply(m))
        _, lp = transport.solve_min_incongruent(transport.TransportProblem.from_stats(st, d))
        track("level_identity_lp", dl - lp.apply(m))
        for pair in ms.pairs:
            diff = m[pair.hi] - m[pair.lo]
            track("bias_matt", diff - (pop.matt(pair.hi, pair.lo) + pop.bias(pair.hi, pair.lo)))
            if not pair.congruent:
                for mode in chains.MODES:
                    dec = chains.decompose_incongruent(pair.hi, pair.lo, mode)
                    track(f"chain_{mode}", dec.evaluate(full) - (full[pair.hi] - full[pair.lo]))
        plus = estimate.amatt_plus(st, d)
        tilde6 = estimate.amatt_tilde(st, d)
        if plus.defined:
            track("amatt_tilde_product", tilde6.value - plus.value)

    for d in st.positive_levels():
        a = estimate.aatt(st, d)
        if a.defined:
            route = sum(st.cond_prob[s] * estimate.att(st, s).value for s in st.support[d])
            track("aatt_routes", a.value - route)
    base = zeros(st.K)
    for s in m:
        if base in m and s != base:
            track("bias_att", (m[s] - m[base]) - (pop.att(s) + pop.untreated_bias(s)))
    for d in st.levels:
        vs = st.support[d]
        for a in vs:
            for b in vs:
                if sum(abs(x - y) for x, y in zip(a, b)) == 2:
                    track("bias_satt", (m[a] - m[b]) - (pop.satt(a, b) + pop.satt_bias(a, b)))
                    track("satt_parent", chains.decompose_satt(a, b).evaluate(full) - (full[a] - full[b]))
    if len(st.levels) > 1:
        reg = estimate.regression(st)
        track("regression_marginal", reg.marginal_reconstruction() - reg.alpha1)
        if reg.baseline_blocks is not None:
            track("regression_baseline", reg.baseline_reconstruction() - reg.alpha1)
    return OracleReport(res)


# ----------------------------------------------------------------- scenarios

def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return scenario_from_dict(raw)


def scenario_from_dict(raw: Mapping) -> Scenario:
    try:
        grid = GridSpec(float(raw.get("resolution", 1.0)), tuple(raw["names"]))
        types = tuple(
            LatentType(tuple(parse_vector(v) for v in t["path"]),
                       _frac(t["mass"]) if "mass" in t else None,
                       _frac(t.get("shift", 0)), _frac(t.get("untreated_shift", 0)), t.get("name", ""))
            for t in raw["types"]
        )
        o = raw.get("outcome", {})
        outcome = OutcomeModel(
            o.get("kind", "free"),
            {parse_vector(k): _frac(v) for k, v in o.get("base", {}).items()},
            _frac(o.get("baseline", 0)), tuple(_frac(b) for b in o.get("betas", ())),
            _frac(o.get("theta", 0)), float(o.get("noise_sd", 1.0)),
        )
        s = raw.get("sorting", {})
        sorting = SortingSpec(
            s.get("kind", "independent"), tuple(_frac(p) for p in s.get("level_probs", ())),
            {(int(t), int(d)): _frac(w) for t, d, w in s.get("table", ())},
        )
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed scenario: {exc}") from exc
    return Scenario(grid, types, outcome, sorting, bool(raw.get("congruent_only", False)),
                    raw.get("name", "scenario"))


F = Fraction
_G3 = GridSpec(1.0, ("s1", "s2", "s3"))


def types_scenario(noise_sd: float = 1.0) -> Scenario:
    """Two types whose paths are congruent but who sort to different levels."""
    types = (
        LatentType(((1, 0, 0), (1, 1, 0)), name="type1"),
        LatentType(((0, 0, 1), (0, 1, 1)), name="type2"),
    )
    outcome = OutcomeModel("homogeneous", baseline=F(0), betas=(F(1), F(1)), noise_sd=noise_sd)
    sorting = SortingSpec("table", table={(0, 0): F(1, 6), (1, 0): F(1, 6), (0, 1): F(1, 3), (1, 2): F(1, 3)})
    return Scenario(_G3, types, outcome, sorting, True, "types")


def sign_reversal_scenario(noise_sd: float = 1.0) -> Scenario:
    """Every congruent MATT+ at level 2 is positive yet delta(2) < 0."""
    types = (
        LatentType(((1, 0, 0), (1, 1, 0)), name="A"),
        LatentType(((0, 1, 0), (0, 1, 1)), name="B"),
        LatentType(((0, 0, 1), (1, 0, 1)), name="C"),
    )
    base = {(0, 0, 0): F(0), (1, 0, 0): F(10), (0, 1, 0): F(0), (0, 0, 1): F(0),
            (1, 1, 0): F(11), (1, 0, 1): F(11), (0, 1, 1): F(1)}
    outcome = OutcomeModel("free", base=base, noise_sd=noise_sd)
    p0, p1, p2 = F(1, 5), F(2, 5), F(2, 5)
    table = {(0, 0): p0 / 3, (1, 0): p0 / 3, (2, 0): p0 / 3,
             (0, 1): p1 * F(8, 10), (1, 1): p1 / 10, (2, 1): p1 / 10,
             (0, 2): p2 / 10, (1, 2): p2 * F(8, 10), (2, 2): p2 / 10}
    return Scenario(_G3, types, outcome, SortingSpec("table", table=table), True, "sign_reversal")


def congruent_scenario(K: int = 3, N: int = 3, n_types: int = 4, seed: int = 0,
                       noise_sd: float = 1.0) -> Scenario:
    """Random congruent paths, D independent of type, free random outcomes."""
    rng = np.random.default_rng(seed)
    types = []
    raw = rng.integers(1, 10, n_types)
    masses = [F(int(r), int(raw.sum())) for r in raw]
    for i in range(n_types):
        cur, path = zeros(K), []
        for _ in range(N):
            cur = add(cur, unit(K, int(rng.integers(K))))
            path.append(cur)
        types.append(LatentType(tuple(path), masses[i], name=f"t{i}"))
    cells = {v for t in types for v in t.path} | {zeros(K)}
    base = {s: F(int(rng.integers(-20, 21)), 4) for s in canonical_order(cells)}
    lp = rng.integers(1, 10, N + 1)
    level_probs = tuple(F(int(x), int(lp.sum())) for x in lp)
    grid = GridSpec(1.0, tuple(f"s{k + 1}" for k in range(K)))
    return Scenario(grid, tuple(types), OutcomeModel("free", base=base, noise_sd=noise_sd),
                    SortingSpec("independent", level_probs), True, "congruent")


def random_scenario(K: int = 3, N: int = 3, n_types: int = 4, seed: int = 0, selection: bool = False,
                    noise_sd: float = 1.0) -> Scenario:
    """Arbitrary (possibly incongruent) paths with table sorting; optional selection shifts."""
    rng = np.random.default_rng(seed)
    types = []
    for i in range(n_types):
        path = []
        for d in range(1, N + 1):
            cuts = np.sort(rng.integers(0, d + 1, K - 1))
            parts = np.diff(np.concatenate([[0], cuts, [d]]))
            path.append(tuple(int(x) for x in parts))
        shift = F(int(rng.integers(-8, 9)), 4) if selection else F(0)
        ushift = F(int(rng.integers(-8, 9)), 4) if selection else F(0)
        types.append(LatentType(tuple(path), None, shift, ushift, f"t{i}"))
    raw = rng.integers(0, 6, (n_types, N + 1))
    raw[:, 0] += 1  # keep the untreated level populated
    total = int(raw.sum())
    table = {(i, d): F(int(raw[i, d]), total) for i in range(n_types) for d in range(N + 1) if raw[i, d]}
    cells = {v for t in types for v in t.path} | {zeros(K)}
    base = {s: F(int(rng.integers(-20, 21)), 4) for s in canonical_order(cells)}
    grid = GridSpec(1.0, tuple(f"s{k + 1}" for k in range(K)))
    return Scenario(grid, tuple(types), OutcomeModel("free", base=base, noise_sd=noise_sd),
                    SortingSpec("table", table=table), False, "random")


def _example_scenario(marginals: Mapping[int, Mapping[Vector, Fraction]], name: str) -> Scenario:
    """Observed marginals realized by types that pair level-1 and level-2 cells freely."""
    types, table = [], {}
    lv1, lv2 = list(marginals[1].items()), list(marginals[2].items())
    for a, pa in lv1:
        for b, pb in lv2:
            types.append(LatentType((a, b), name=f"{fmt_vector(a)}>{fmt_vector(b)}"))
            i = len(types) - 1
            table[(i, 1)] = F(2, 5) * pa * pb
            table[(i, 2)] = F(2, 5) * pa * pb
            table[(i, 0)] = F(1, 5) / (len(lv1) * len(lv2))
    outcome = OutcomeModel("homogeneous", baseline=F(0), betas=(F(1), F(1)))
    return Scenario(_G3, tuple(types), outcome, SortingSpec("table", table=table), False, name)


def fixture(name: str) -> Scenario:
    from .fixtures import SKEWED_MARGINALS, UNIFORM_MARGINALS
    table = {
        "types": types_scenario,
        "sign_reversal": sign_reversal_scenario,
        "congruent": congruent_scenario,
        "uniform": lambda: _example_scenario(UNIFORM_MARGINALS, "uniform"),
        "skewed": lambda: _example_scenario(SKEWED_MARGINALS, "skewed"),
    }
    if name not in table:
        raise SpecError(f"unknown fixture {name!r}; choose from {sorted(table)}")
    return table[name]()


FIXTURES = ("types", "sign_reversal", "congruent", "uniform", "skewed")

"""Congruence relation, marginal sets and contrast counting."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Mapping, Sequence

from .core import SupportIndex, Vector, lattice_support
from .errors import ContractError, ValidationError


def step_coordinate(hi: Vector, lo: Vector) -> int | None:
    """Return ``k`` (0-based) if ``hi == lo + 1_k``, else ``None``.

    Raises ContractError when ``hi`` is not exactly one level above ``lo``.
    """
    if len(hi) != len(lo):
        raise ContractError(f"vectors of different length: {hi} vs {lo}")
    if sum(hi) != sum(lo) + 1:
        raise ContractError(f"{hi} is not one level above {lo}")
    diff = [a - b for a, b in zip(hi, lo)]
    if min(diff) < 0:
        return None
    # level difference is 1 and no coordinate decreased, so exactly one rose by 1
    return diff.index(1)


def is_congruent(hi: Vector, lo: Vector) -> bool:
    return step_coordinate(hi, lo) is not None


@dataclass(frozen=True)
class MarginalPair:
    hi: Vector
    lo: Vector
    step: int | None

    @property
    def congruent(self) -> bool:
        return self.step is not None

    @property
    def d(self) -> int:
        return sum(self.hi)


@dataclass(frozen=True)
class MarginalSet:
    d: int
    pairs: tuple[MarginalPair, ...]

    @property
    def congruent(self) -> tuple[MarginalPair, ...]:
        return tuple(p for p in self.pairs if p.congruent)

    @property
    def incongruent(self) -> tuple[MarginalPair, ...]:
        return tuple(p for p in self.pairs if not p.congruent)

    def __len__(self) -> int:
        return len(self.pairs)


def marginal_set(d: int, upper: Sequence[Vector], lower: Sequence[Vector]) -> MarginalSet:
    pairs = tuple(MarginalPair(hi, lo, step_coordinate(hi, lo)) for hi in upper for lo in lower)
    return MarginalSet(d, pairs)


def marginal_sets(levels: SupportIndex | Mapping[int, Sequence[Vector]]) -> list[MarginalSet]:
    """One MarginalSet per level ``d`` whose level ``d-1`` is also present."""
    if isinstance(levels, SupportIndex):
        levels = levels.levels
    out = []
    for d in sorted(levels):
        if d - 1 in levels and levels[d] and levels[d - 1]:
            out.append(marginal_set(d, levels[d], levels[d - 1]))
    return out


@dataclass(frozen=True)
class CountReport:
    K: int
    kind: str
    total: int
    congruent: int
    incongruent: int
    by_level: tuple[tuple[int, int, int], ...] = ()  # (d, total, congruent)

    @property
    def congruent_fraction(self) -> float:
        return self.congruent / self.total if self.total else float("nan")

    def as_dict(self) -> dict:
        return {
            "K": self.K, "kind": self.kind, "total": self.total,
            "congruent": self.congruent, "incongruent": self.incongruent,
            "congruent_fraction": self.congruent_fraction,
            "by_level": [{"d": d, "total": t, "congruent": c, "incongruent": t - c} for d, t, c in self.by_level],
        }


def count_sets(sets: Sequence[MarginalSet], K: int, kind: str = "empirical") -> CountReport:
    by_level = tuple((m.d, len(m), len(m.congruent)) for m in sets)
    total = sum(t for _, t, _ in by_level)
    cong = sum(c for _, _, c in by_level)
    return CountReport(K, kind, total, cong, total - cong, by_level)


def count_binary(K: int) -> CountReport:
    """Closed-form counts for K binary sub-treatments."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    by_level = tuple((d, comb(K, d) * comb(K, d - 1), K * comb(K - 1, d - 1)) for d in range(1, K + 1))
    total = comb(2 * K, K - 1)
    cong = K * 2 ** (K - 1)
    return CountReport(K, "binary", total, cong, total - cong, by_level)


def _level_sizes(K: int, cap: int) -> list[int]:
    """Number of vectors in {0..cap}^K at each level (coefficients of (1+x+..+x^cap)^K)."""
    poly = [1]
    for _ in range(K):
        nxt = [0] * (len(poly) + cap)
        for i, c in enumerate(poly):
            for j in range(cap + 1):
                nxt[i + j] += c
        poly = nxt
    return poly


def trinomial_level_size(K: int, d: int) -> int:
    """|S_d| for support {0,1,2}: sum_r C(K,r) C(K-r, d-2r)."""
    return sum(comb(K, r) * comb(K - r, d - 2 * r) for r in range(d // 2 + 1) if d - 2 * r <= K - r)


def count_capped(K: int, cap: int, kind: str | None = None) -> CountReport:
    """Exact counts on the full lattice {0..cap}^K.

    A pair (lo + 1_k, lo) is congruent iff lo_k < cap, so the congruent count
    at level d counts (lo, k) with lo in S_{d-1} and lo_k < cap; this is done
    level by level on the generating polynomial of the remaining K-1 coordinates.
    """
    if K < 1:
        raise ValidationError("K must be >= 1")
    sizes = _level_sizes(K, cap)
    rest = _level_sizes(K - 1, cap)
    by_level = []
    for d in range(1, K * cap + 1):
        total = sizes[d] * sizes[d - 1]
        cong = K * sum(rest[d - 1 - v] for v in range(cap) if 0 <= d - 1 - v < len(rest))
        by_level.append((d, total, cong))
    total = sum(t for _, t, _ in by_level)
    cong = sum(c for _, _, c in by_level)
    return CountReport(K, kind or f"cap{cap}", total, cong, total - cong, tuple(by_level))


def count_trinary(K: int) -> CountReport:
    if K < 1:
        raise ValidationError("K must be >= 1")
    capped = count_capped(K, 2, "trinary")
    by_level = tuple(
        (d, trinomial_level_size(K, d) * trinomial_level_size(K, d - 1), cong)
        for d, _, cong in capped.by_level
    )
    total = sum(t for _, t, _ in by_level)
    return CountReport(K, "trinary", total, capped.congruent, total - capped.congruent, by_level)


def count_lattice(K: int, cap: int) -> CountReport:
    """Brute-force enumeration of every pair on the lattice (small K only)."""
    levels = lattice_support(K, cap)
    kind = {1: "binary", 2: "trinary"}.get(cap, f"cap{cap}")
    return count_sets(marginal_sets(levels), K, kind)


def congruent_fraction_series(K_max: int, kind: str = "binary") -> list[tuple[int, Fraction]]:
    """Exact congruent fraction |M+|/|M| for K = 1..K_max."""
    if K_max > 20:
        raise ValidationError("K_max must be <= 20")
    counter = {"binary": count_binary, "trinary": count_trinary}[kind]
    out = []
    for K in range(1, K_max + 1):
        r = counter(K)
        out.append((K, Fraction(r.congruent, r.total)))
    return out

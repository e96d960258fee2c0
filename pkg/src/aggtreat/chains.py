"""Unit-exchange chains and decompositions of incongruent contrasts.

A same-level pair is linked by a chain of unit exchanges; every exchange
is a SATT, and every SATT is the difference of two congruent MATT+ terms
through the pair's common parent. Chaining these gives an expansion of any
incongruent MATT- into congruent pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import CellStats, Number, Vector, add, canonical_order, l1, sub, unit
from .errors import ContractError, LevelError, ValidationError

MATT_PLUS = "MATT+"
SATT = "SATT"
MODES = ("satt_form", "matt_form")


def _check_caps(v: Vector, caps: Sequence[int] | None) -> bool:
    return caps is None or all(x <= c for x, c in zip(v, caps))


def congruent_parent(lo: Vector, candidates: Iterable[Vector] | None = None,
                     caps: Sequence[int] | None = None) -> Vector | None:
    """A vector one level above ``lo`` that is congruent with it.

    With ``candidates=None`` the full lattice is used and the result is
    ``lo + 1_k`` for the smallest ``k`` with room under ``caps``. With an
    empirical candidate set the first congruent member in canonical order is
    returned, or ``None`` when no candidate is congruent.
    """
    lo = tuple(lo)
    if candidates is None:
        for k in range(len(lo)):
            hi = add(lo, unit(len(lo), k))
            if _check_caps(hi, caps):
                return hi
        return None
    cands = canonical_order(candidates)
    level = sum(lo) + 1
    for hi in cands:
        if sum(hi) != level:
            raise ContractError(f"candidate {hi} is not at level {level}")
        diff = sub(hi, lo)
        if min(diff) >= 0:
            return hi
    return None


@dataclass(frozen=True)
class Chain:
    d: int
    vectors: tuple[Vector, ...]
    steps: tuple[tuple[int, int], ...]  # (j, l): +1 at j, -1 at l

    @property
    def B(self) -> int:
        return len(self.steps)

    def links(self) -> list[tuple[Vector, Vector]]:
        return list(zip(self.vectors[:-1], self.vectors[1:]))


def _chain(start: Vector, end: Vector, pick) -> Chain:
    start, end = tuple(start), tuple(end)
    if len(start) != len(end):
        raise ContractError("vectors of different length")
    if sum(start) != sum(end):
        raise ContractError(f"{start} and {end} are at different levels")
    vectors, steps = [start], []
    cur = start
    while cur != end:
        deficit = [k for k in range(len(cur)) if cur[k] < end[k]]
        surplus = [k for k in range(len(cur)) if cur[k] > end[k]]
        j, l = pick(deficit), pick(surplus)
        cur = tuple(x + (k == j) - (k == l) for k, x in enumerate(cur))
        vectors.append(cur)
        steps.append((j, l))
    return Chain(sum(start), tuple(vectors), tuple(steps))


def build_chain(start: Vector, end: Vector) -> Chain:
    """Canonical chain: move a unit from the lowest surplus to the lowest deficit coordinate."""
    return _chain(start, end, lambda ks: ks[0])


def random_chain(start: Vector, end: Vector, rng: np.random.Generator) -> Chain:
    """A chain with randomly chosen exchanges (used to test path independence)."""
    return _chain(start, end, lambda ks: ks[int(rng.integers(len(ks)))])


@dataclass(frozen=True)
class Term:
    kind: str          # MATT+ : m(hi) - m(lo) with hi = lo + 1_k; SATT : m(hi) - m(lo) at one level
    hi: Vector
    lo: Vector
    sign: int

    def vectors(self) -> tuple[Vector, Vector]:
        return self.hi, self.lo


@dataclass(frozen=True)
class Decomposition:
    target_kind: str
    target: tuple[Vector, Vector]
    terms: tuple[Term, ...]
    missing: tuple[Vector, ...] = field(default=())

    @property
    def available(self) -> bool:
        return not self.missing

    def n_negative(self) -> int:
        return sum(1 for t in self.terms if t.sign < 0)

    def n_positive(self) -> int:
        return sum(1 for t in self.terms if t.sign > 0)

    def vectors(self) -> set[Vector]:
        return {v for t in self.terms for v in t.vectors()}

    def evaluate(self, means: CellStats | Mapping[Vector, Number]) -> Number:
        """Sum of signed terms given cell means ``m(s)``."""
        m = means.means if isinstance(means, CellStats) else means
        gone = sorted(v for v in self.vectors() if v not in m)
        if gone:
            raise LevelError(f"cells not observed: {', '.join(map(str, gone))}")
        total = 0
        for t in self.terms:
            total = total + t.sign * (m[t.hi] - m[t.lo])
        return total

    def as_dict(self) -> dict:
        return {
            "target": {"kind": self.target_kind, "hi": list(self.target[0]), "lo": list(self.target[1])},
            "terms": [{"kind": t.kind, "hi": list(t.hi), "lo": list(t.lo), "sign": t.sign} for t in self.terms],
            "missing": [list(v) for v in self.missing],
            "available": self.available,
        }


def _missing(vectors: Iterable[Vector], support) -> tuple[Vector, ...]:
    if support is None:
        return ()
    return tuple(canonical_order({v for v in vectors if v not in support}))


def _satt_terms(chain: Chain, expand: bool) -> list[Term]:
    """Terms for m(x_0) - m(x_B) along ``chain``."""
    terms = []
    for a, b in chain.links():
        if expand:
            p = tuple(max(x, y) for x, y in zip(a, b))
            terms.append(Term(MATT_PLUS, p, b, +1))
            terms.append(Term(MATT_PLUS, p, a, -1))
        else:
            terms.append(Term(SATT, a, b, +1))
    return terms


def decompose_satt(a: Vector, b: Vector, support=None) -> Decomposition:
    """SATT(a, b) = m(a) - m(b) for a single unit exchange, via the common parent.

    SATT(a, b) = MATT+(p, b) - MATT+(p, a) with p = max(a, b) elementwise,
    which equals ``a + 1_j = b + 1_l``.
    """
    a, b = tuple(a), tuple(b)
    if sum(a) != sum(b):
        raise ContractError(f"{a} and {b} are at different levels")
    if a == b:
        return Decomposition(SATT, (a, b), ())
    if l1(a, b) != 2:
        raise ContractError(f"{a} and {b} differ by more than one unit exchange")
    chain = Chain(sum(a), (a, b), ())
    terms = tuple(_satt_terms(chain, expand=True))
    dec = Decomposition(SATT, (a, b), terms)
    return Decomposition(SATT, (a, b), terms, _missing(dec.vectors(), support))


def _lower_candidates(hi: Vector) -> list[Vector]:
    """Congruent lower neighbours of ``hi`` in canonical order."""
    K = len(hi)
    return list(canonical_order(sub(hi, unit(K, k)) for k in range(K) if hi[k] > 0))


def _build(hi: Vector, lo: Vector, s_prime: Vector, chain: Chain, mode: str, support) -> Decomposition:
    expand = mode == "matt_form"
    terms = [Term(MATT_PLUS, hi, s_prime, +1)] + _satt_terms(chain, expand)
    vecs = {v for t in terms for v in t.vectors()}
    return Decomposition("MATT-", (hi, lo), tuple(terms), _missing(vecs, support))


def decompose_incongruent(hi: Vector, lo: Vector, mode: str = "satt_form", support=None,
                          rng: np.random.Generator | None = None) -> Decomposition:
    """Expand MATT-(hi, lo) = m(hi) - m(lo) into congruent pieces.

    ``satt_form``: MATT+(hi, s') plus the SATT links of the chain from s' to lo.
    ``matt_form``: every SATT link further split into two MATT+ terms.

    With ``support`` (a set-like of observed vectors) the first bridge s' in
    canonical order whose decomposition is fully observed is used; if none
    is, the canonical decomposition is returned with its missing vectors.
    ``rng`` picks a random bridge and chain instead (for testing).
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    hi, lo = tuple(hi), tuple(lo)
    if len(hi) != len(lo) or sum(hi) != sum(lo) + 1:
        raise ContractError(f"{hi} is not one level above {lo}")
    if min(sub(hi, lo)) >= 0:
        raise ContractError(f"({hi}, {lo}) is congruent")
    cands = _lower_candidates(hi)
    if rng is not None:
        s_prime = cands[int(rng.integers(len(cands)))]
        return _build(hi, lo, s_prime, random_chain(s_prime, lo, rng), mode, support)
    first = None
    for s_prime in cands:
        dec = _build(hi, lo, s_prime, build_chain(s_prime, lo), mode, support)
        if dec.available:
            return dec
        first = first or dec
    return first

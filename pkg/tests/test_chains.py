from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggtreat.chains import (
    MATT_PLUS, SATT, build_chain, congruent_parent, decompose_incongruent, decompose_satt, random_chain,
)
from aggtreat.core import l1, lattice_support
from aggtreat.errors import ContractError, LevelError
from aggtreat.fixtures import TABLE1_MARGINALS


def terms(dec):
    return [(t.kind, t.hi, t.lo, t.sign) for t in dec.terms]


def test_congruent_parent_lattice():
    assert congruent_parent((1, 0, 0)) == (2, 0, 0)
    assert congruent_parent((1, 0, 0), caps=(1, 1, 1)) == (1, 1, 0)
    assert congruent_parent((1, 1), caps=(1, 1)) is None


def test_congruent_parent_empirical():
    upper = [(1, 1, 0), (1, 0, 1), (0, 1, 1)]
    assert congruent_parent((0, 0, 1), upper) == (1, 0, 1)
    assert congruent_parent((0, 1, 0), [(1, 0, 1)]) is None


def test_congruent_parent_absent_in_table1():
    assert congruent_parent((2, 0, 3, 0), TABLE1_MARGINALS[6]) is None
    # the whole top level has no congruent parent for any vector below it
    assert all(congruent_parent(lo, TABLE1_MARGINALS[6]) is None for lo in TABLE1_MARGINALS[5])


def test_build_chain_examples():
    c = build_chain((1, 0, 0), (0, 0, 1))
    assert c.vectors == ((1, 0, 0), (0, 0, 1)) and c.B == 1
    c = build_chain((2, 0, 0), (0, 1, 1))
    assert c.vectors == ((2, 0, 0), (1, 1, 0), (0, 1, 1))
    assert build_chain((1, 1, 0), (1, 1, 0)).B == 0
    with pytest.raises(ContractError):
        build_chain((1, 0), (1, 1))


def test_decompose_satt_example():
    dec = decompose_satt((1, 0, 0), (0, 0, 1))
    assert terms(dec) == [(MATT_PLUS, (1, 0, 1), (0, 0, 1), 1), (MATT_PLUS, (1, 0, 1), (1, 0, 0), -1)]
    m = {(1, 0, 0): 3.0, (0, 0, 1): 1.25, (1, 0, 1): -7.0}
    assert dec.evaluate(m) == pytest.approx(1.75)
    assert decompose_satt((1, 1, 0), (1, 1, 0)).terms == ()
    with pytest.raises(ContractError):
        decompose_satt((2, 0, 0), (0, 1, 1))


def test_decompose_incongruent_examples():
    hi, lo = (1, 1, 0), (0, 0, 1)
    assert terms(decompose_incongruent(hi, lo, "satt_form")) == [
        (MATT_PLUS, (1, 1, 0), (1, 0, 0), 1), (SATT, (1, 0, 0), (0, 0, 1), 1)]
    assert terms(decompose_incongruent(hi, lo, "matt_form")) == [
        (MATT_PLUS, (1, 1, 0), (1, 0, 0), 1), (MATT_PLUS, (1, 0, 1), (0, 0, 1), 1),
        (MATT_PLUS, (1, 0, 1), (1, 0, 0), -1)]
    with pytest.raises(ContractError):
        decompose_incongruent((1, 1, 0), (1, 0, 0))


def test_empirical_support_reports_missing():
    support = {(1, 1, 0), (0, 0, 1), (1, 0, 0)}
    dec = decompose_incongruent((1, 1, 0), (0, 0, 1), "matt_form", support)
    assert not dec.available
    assert dec.missing == ((1, 0, 1),)
    with pytest.raises(LevelError, match="1, 0, 1"):
        dec.evaluate({v: 0.0 for v in support})


def test_empirical_support_picks_observed_bridge():
    support = {(1, 1, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)}
    dec = decompose_incongruent((1, 1, 0), (0, 0, 1), "matt_form", support)
    assert dec.available
    assert dec.terms[0].lo == (0, 1, 0)


def _random_pair(rng, K, cap):
    L = lattice_support(K, cap)
    while True:
        d = int(rng.integers(1, max(L) + 1))
        hi = L[d][int(rng.integers(len(L[d])))]
        lo = L[d - 1][int(rng.integers(len(L[d - 1])))]
        if min(a - b for a, b in zip(hi, lo)) < 0:
            return hi, lo


def test_path_independence_random_lattices():
    rng = np.random.default_rng(11)
    for _ in range(150):
        K = int(rng.integers(2, 5))
        hi, lo = _random_pair(rng, K, int(rng.integers(2, 4)))
        box = lattice_support(K, max(max(hi), max(lo)) + 1)
        m = {v: Fraction(int(rng.integers(-99, 100)), 13) for vs in box.values() for v in vs}
        target = m[hi] - m[lo]
        for mode in ("satt_form", "matt_form"):
            canon = decompose_incongruent(hi, lo, mode)
            assert canon.evaluate(m) == target
            alt = decompose_incongruent(hi, lo, mode, rng=rng)
            assert alt.evaluate(m) == target


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 4).flatmap(lambda K: st.tuples(
    st.lists(st.integers(0, 3), min_size=K, max_size=K),
    st.lists(st.integers(0, 3), min_size=K, max_size=K))), st.integers(0, 2**32 - 1))
def test_chain_invariants(pair, seed):
    a, b = (tuple(v) for v in pair)
    diff = sum(a) - sum(b)
    b = list(b)
    # shift b onto a's level
    for k in range(len(b)):
        move = min(diff, 3 - b[k]) if diff > 0 else max(diff, -b[k])
        b[k] += move
        diff -= move
    b = tuple(b)
    if sum(a) != sum(b):
        return
    for chain in (build_chain(a, b), random_chain(a, b, np.random.default_rng(seed))):
        assert chain.B == l1(a, b) // 2
        dists = [l1(v, b) for v in chain.vectors]
        assert all(x > y for x, y in zip(dists, dists[1:]))
        for (x, y), (j, l) in zip(chain.links(), chain.steps):
            assert tuple(v + (k == j) - (k == l) for k, v in enumerate(x)) == y


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matt_form_sign_counts(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 5))
    hi, lo = _random_pair(rng, K, 3)
    dec = decompose_incongruent(hi, lo, "matt_form")
    s_prime = dec.terms[0].lo
    B = build_chain(s_prime, lo).B
    assert dec.n_negative() == B
    assert dec.n_positive() == B + 1
    assert all(t.kind == MATT_PLUS for t in dec.terms)
    assert all(min(a - b for a, b in zip(t.hi, t.lo)) >= 0 for t in dec.terms)

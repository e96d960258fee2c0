from fractions import Fraction as F

import numpy as np
import pytest

from aggtreat.core import CellStats, GridSpec
from aggtreat.errors import LevelError, ValidationError
from aggtreat.fixtures import (
    SKEWED_MARGINALS, TABLE1_MARGINALS, TABLE1_SHARES, TABLE1_WSTAR, UNIFORM_MARGINALS, W_B, example_stats,
    table1_stats,
)
from aggtreat.transport import (
    TransportProblem, WeightScheme, check_scheme, decreasing_means_diagnostic, incongruency_report,
    product_weights, solve_min_incongruent,
)

from oracles import lp_share, max_congruent_flow, random_two_level


def share_of(stats, d):
    return solve_min_incongruent(TransportProblem.from_stats(stats, d))[0]


def test_product_weights_examples():
    uni = product_weights(example_stats(UNIFORM_MARGINALS), 2)
    assert set(uni.entries.values()) == {F(1, 9)}
    sk = product_weights(example_stats(SKEWED_MARGINALS), 2)
    assert sk.entries[((0, 1, 1), (1, 0, 0))] == F(16, 25)
    assert check_scheme(sk, example_stats(SKEWED_MARGINALS)).max_residual == 0


def test_product_weights_missing_level():
    st = example_stats(UNIFORM_MARGINALS)
    with pytest.raises(LevelError):
        product_weights(st, 3)


def test_worked_example_shares():
    assert share_of(example_stats(UNIFORM_MARGINALS), 2) == 0
    assert share_of(example_stats(SKEWED_MARGINALS), 2) == F(3, 5)


def test_w_b_is_feasible_and_fully_incongruent():
    st = example_stats(UNIFORM_MARGINALS)
    scheme = WeightScheme(2, st.support[2], st.support[1], W_B)
    assert check_scheme(scheme, st).max_residual == 0
    assert scheme.incongruent_share == 1


def test_perturbed_scheme_residual():
    st = example_stats(UNIFORM_MARGINALS)
    entries = dict(product_weights(st, 2).entries)
    entries[((1, 1, 0), (1, 0, 0))] += F(1, 100)
    res = check_scheme(WeightScheme(2, st.support[2], st.support[1], entries), st)
    assert res.row[(1, 1, 0)] == F(1, 100)
    assert res.col[(1, 0, 0)] == F(1, 100)
    assert res.max_residual == F(1, 100)
    assert not res.ok()


def test_negative_entry_reported():
    st = example_stats(UNIFORM_MARGINALS)
    entries = dict(product_weights(st, 2).entries)
    entries[((1, 1, 0), (1, 0, 0))] = F(-1, 9)
    assert check_scheme(WeightScheme(2, st.support[2], st.support[1], entries), st).negative == F(1, 9)


def test_table1_shares():
    st = table1_stats()
    rep = incongruency_report(st)
    got = {lv.d: float(lv.share) for lv in rep.levels}
    for d, expected in TABLE1_SHARES.items():
        assert got[d] == pytest.approx(expected, abs=0.002)
    assert rep.share(3) == F(3, 8)


def test_table1_tabulated_weights_match_marginals():
    # the tabulated (rounded) optimal weights reproduce the embedded marginals
    for d, marg in TABLE1_MARGINALS.items():
        if d == 0:
            continue
        rows = [r for r in TABLE1_WSTAR if r[0] == d]
        for s, p in marg.items():
            assert sum(r[5] for r in rows if r[1] == s) == pytest.approx(float(p), abs=0.0035)
        for s, p in TABLE1_MARGINALS[d - 1].items():
            assert sum(r[5] for r in rows if r[2] == s) == pytest.approx(float(p), abs=0.0035)


def test_table1_tabulated_incongruent_mass_matches_solver():
    st = table1_stats()
    for d in range(1, 7):
        tabulated = sum(r[5] for r in TABLE1_WSTAR if r[0] == d and r[3])
        assert tabulated == pytest.approx(float(share_of(st, d)), abs=0.002)


def test_table1_lessons_flag():
    st = table1_stats()
    diag = decreasing_means_diagnostic(st)
    flagged = {(f.d, st.grid.names[f.k]) for f in diag.flagged()}
    assert (3, "lessons") in flagged
    assert st.subtreatment_mean(2, 0) == F(25, 15)
    assert st.subtreatment_mean(3, 0) == F(20, 16)


def test_stacked_means_sum_to_level():
    st = table1_stats()
    diag = decreasing_means_diagnostic(st)
    for d, ms in diag.means.items():
        assert sum(ms) == d
    rows = diag.figure_rows(st)
    assert len(rows) == 7 * 4
    assert sum(m for d, _, m in rows if d == F(3, 2)) == F(3, 2)


def test_monotone_single_subtreatment_no_flags():
    g = GridSpec(1.0, ("a",))
    st = CellStats.from_distribution({(d,): F(1, 4) for d in range(4)}, {(d,): F(0) for d in range(4)}, g)
    assert decreasing_means_diagnostic(st).flagged() == []
    assert all(lv.share == 0 for lv in incongruency_report(st).levels)


def test_unbalanced_rejected():
    with pytest.raises(ValidationError):
        TransportProblem.from_marginals(1, {(1, 0): 0.6}, {(0, 0): 1.0})


def test_float_snapping_within_tolerance():
    p = TransportProblem.from_marginals(1, {(1, 0): 1 / 3, (0, 1): 2 / 3}, {(0, 0): 1.0})
    assert sum(p.supplies) == 1
    assert p.supplies[0] == F(1, 3)


def test_empty_level_rejected():
    with pytest.raises(LevelError):
        TransportProblem.from_marginals(1, {}, {(0, 0): 1})


def test_solver_matches_flow_and_lp_oracles():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        d, st = random_two_level(rng, K=int(rng.integers(2, 5)), cap=2, max_cells=6)
        prob = TransportProblem.from_stats(st, d)
        share, scheme = solve_min_incongruent(prob)
        flow = max_congruent_flow(prob.rows, prob.cols, prob.supplies, prob.demands)
        assert share == 1 - flow
        assert share == pytest.approx(lp_share(prob.rows, prob.cols, prob.supplies, prob.demands), abs=1e-9)
        assert check_scheme(scheme, st).max_residual == 0
        assert scheme.incongruent_share == share


def test_solver_is_deterministic():
    st = table1_stats()
    a = solve_min_incongruent(TransportProblem.from_stats(st, 4))[1].entries
    b = solve_min_incongruent(TransportProblem.from_stats(st, 4))[1].entries
    assert a == b


def test_decreasing_mean_implies_positive_share():
    rng = np.random.default_rng(7)
    flagged = 0
    for _ in range(1000):
        d, st = random_two_level(rng, K=3, cap=2, max_cells=4)
        flags = [f for f in decreasing_means_diagnostic(st).flagged() if f.d == d]
        if flags:
            flagged += 1
            assert share_of(st, d) > 0
    assert flagged > 100


def test_positive_share_without_flags():
    # every mean rises, yet (1,0,2) has no congruent parent among the upper cells
    g = GridSpec(1.0, ("a", "b", "c"))
    prob = {(2, 2, 0): F(1, 8), (1, 2, 1): F(3, 8),
            (1, 2, 0): F(1, 4), (1, 0, 2): F(1, 12), (0, 2, 1): F(1, 6)}
    st = CellStats.from_distribution(prob, dict.fromkeys(prob, F(0)), g)
    assert decreasing_means_diagnostic(st).flagged() == []
    assert share_of(st, 4) == F(1, 6)


def test_level_identity_and_homogeneity():
    rng = np.random.default_rng(5)
    for _ in range(200):
        d, st = random_two_level(rng, K=3, cap=2, max_cells=5)
        delta = st.level_mean[d] - st.level_mean[d - 1]
        _, lp = solve_min_incongruent(TransportProblem.from_stats(st, d))
        assert product_weights(st, d).apply(st) == delta
        assert lp.apply(st) == delta
        beta = F(int(rng.integers(-9, 10)), 3)
        homog = {s: beta * sum(s) for s in st.means}
        assert product_weights(st, d).apply(homog) == beta
        assert lp.apply(homog) == beta

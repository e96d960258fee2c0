from fractions import Fraction as F

import numpy as np
import pytest

from aggtreat.core import cell_stats
from aggtreat.errors import SpecError
from aggtreat.estimate import amatt_plus, delta, matt
from aggtreat.simulate import (
    FIXTURES, LatentType, OutcomeModel, Scenario, SortingSpec, congruent_scenario, fixture, generate,
    load_scenario, oracle_check, random_scenario, LatentPopulation,
)
from aggtreat.core import GridSpec
from aggtreat.transport import TransportProblem, decreasing_means_diagnostic, solve_min_incongruent


def share(pop, d):
    return solve_min_incongruent(TransportProblem.from_stats(pop.stats(), d))[0]


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_identities_exact(name):
    assert oracle_check(LatentPopulation(fixture(name))).ok()


def test_random_scenarios_identities_exact():
    rng = np.random.default_rng(0)
    for i in range(100):
        K, N = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        if i % 2:
            sc = random_scenario(K, N, int(rng.integers(1, 5)), seed=i, selection=True)
        else:
            sc = congruent_scenario(K, N, int(rng.integers(1, 5)), seed=i)
        rep = oracle_check(LatentPopulation(sc))
        assert rep.ok(), (i, rep.residuals)


def test_types_fixture_is_fully_incongruent():
    pop = LatentPopulation(fixture("types"))
    assert share(pop, 2) == 1
    assert not amatt_plus(pop.stats(), 2).defined
    # each type's own path is congruent
    assert all(sum(w for (hi, lo), w in pop.latent_joint(d).items()) == 1 for d in (1, 2))


def test_sign_reversal():
    pop = LatentPopulation(fixture("sign_reversal"))
    st = pop.stats()
    assert delta(st, 2).value < 0
    for hi in st.support[2]:
        for lo in st.support[1]:
            if all(a >= b for a, b in zip(hi, lo)):
                assert matt(st, hi, lo).value > 0
    assert share(pop, 2) == F(3, 5)


def test_homogeneous_delta_equals_beta():
    sc = congruent_scenario(3, 3, 4, seed=5)
    betas = (F(2), F(-1), F(1, 2))
    sc = Scenario(sc.grid, sc.types, OutcomeModel("homogeneous", betas=betas), sc.sorting, True)
    st = LatentPopulation(sc).stats()
    for d in (1, 2, 3):
        assert delta(st, d).value == betas[d - 1]


def test_congruent_independent_share_zero():
    for seed in range(20):
        pop = LatentPopulation(congruent_scenario(3, 3, 4, seed=seed))
        st = pop.stats()
        for d in (1, 2, 3):
            assert share(pop, d) == 0
        assert decreasing_means_diagnostic(st).flagged() == []
        for d in (1, 2, 3):
            lj = pop.latent_joint(d)
            assert sum(w for (hi, lo), w in lj.items() if all(a >= b for a, b in zip(hi, lo))) == 1


def test_untreated_shift_creates_bias():
    g = GridSpec(1.0, ("a",))
    types = (LatentType(((1,),), F(1, 2), untreated_shift=F(2)), LatentType(((1,),), F(1, 2)))
    table = {(0, 1): F(1, 2), (1, 0): F(1, 2)}
    pop = LatentPopulation(Scenario(g, types, OutcomeModel("linear", theta=F(1)), SortingSpec("table", table=table)))
    assert pop.att((1,)) == -1
    assert pop.untreated_bias((1,)) == 2
    assert pop.means[(1,)] - pop.means[(0,)] == pop.att((1,)) + pop.untreated_bias((1,))


def test_generate_deterministic_and_converges():
    sc = fixture("sign_reversal")
    a, pop = generate(sc, 100_000, seed=3)
    b, _ = generate(sc, 100_000, seed=3)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.s, b.s)
    st = cell_stats(a)
    for s, m in pop.means.items():
        n = st.counts[s]
        assert abs(st.means[s] - float(m)) < 5 / np.sqrt(n)
        assert abs(n / a.n - float(pop.prob[s])) < 5 * np.sqrt(float(pop.prob[s]) / a.n)


def test_spec_errors():
    g = GridSpec(1.0, ("a", "b"))
    out = OutcomeModel("linear", theta=F(1))
    with pytest.raises(SpecError, match="level"):
        Scenario(g, (LatentType(((2, 0),), F(1)),), out, SortingSpec("independent", (F(1, 2), F(1, 2))))
    with pytest.raises(SpecError, match="incongruent"):
        Scenario(g, (LatentType(((1, 0), (0, 2)), F(1)),), out,
                 SortingSpec("independent", (F(1, 3),) * 3), congruent_only=True)
    with pytest.raises(SpecError, match="sum to 1"):
        Scenario(g, (LatentType(((1, 0),), F(1, 2)),), out, SortingSpec("independent", (F(1, 2), F(1, 2))))
    with pytest.raises(SpecError):
        OutcomeModel("quadratic")
    with pytest.raises(SpecError):
        fixture("nope")
    with pytest.raises(SpecError):
        generate(fixture("types"), 0, seed=0)


def test_load_scenario(tmp_path):
    p = tmp_path / "sc.toml"
    p.write_text("""
name = "demo"
names = ["a", "b"]
congruent_only = true

[outcome]
kind = "free"
base = { "0,0" = 0, "1,0" = 1.5, "0,1" = 2 }
noise_sd = 0.5

[sorting]
kind = "independent"
level_probs = [0.5, 0.5]

[[types]]
path = ["1,0"]
mass = 0.25

[[types]]
path = ["0,1"]
mass = 0.75
""")
    sc = load_scenario(p)
    assert sc.name == "demo" and sc.outcome.noise_sd == 0.5
    pop = LatentPopulation(sc)
    assert pop.prob[(0, 1)] == F(3, 8)
    assert delta(pop.stats(), 1).value == F(1, 4) * F(3, 2) + F(3, 4) * 2
    p.write_text('names = ["a"]\n')
    with pytest.raises(SpecError):
        load_scenario(p)


def test_truth_sidecar_contents():
    t = LatentPopulation(fixture("skewed")).truth()
    lv2 = [r for r in t["levels"] if r["d"] == 2][0]
    assert lv2["minimal_share"] == pytest.approx(0.6)
    assert "alpha1" in t and t["scenario"] == "skewed"

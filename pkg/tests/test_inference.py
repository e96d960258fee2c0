import numpy as np
import pytest

from aggtreat.core import Dataset, GridSpec
from aggtreat.errors import ValidationError
from aggtreat.inference import bootstrap, sutva_d_test, welch_z

G2 = GridSpec(1.0, ("a", "b"))


def two_cell_data(rng, n=200, shift=0.0):
    s = np.array([[1, 0]] * n + [[0, 1]] * n + [[0, 0]] * n)
    y = rng.normal(size=3 * n)
    y[n:2 * n] += shift
    return Dataset(y, s, G2)


def test_degenerate_data_has_zero_se():
    data = Dataset(np.full(20, 3.0), np.array([[1, 0]] * 10 + [[0, 0]] * 10), G2)
    (r,) = bootstrap(data, [("AATT", 1)], B=50, seed=1)
    assert r.point == 0 and r.se == 0 and r.replicates_undefined == 0


def test_bootstrap_is_deterministic():
    data = two_cell_data(np.random.default_rng(0), n=30)
    req = [("mean", (1, 0)), ("delta", 1)]
    assert bootstrap(data, req, B=100, seed=9) == bootstrap(data, req, B=100, seed=9)
    assert bootstrap(data, req, B=100, seed=9) != bootstrap(data, req, B=100, seed=10)


def test_bootstrap_counts_undefined_replicates():
    # a single unit at (1,1): most replicates lose it
    s = np.array([[0, 0]] * 10 + [[1, 0]] * 10 + [[1, 1]])
    data = Dataset(np.arange(21.0), s, G2)
    (r,) = bootstrap(data, [("mean", (1, 1))], B=200, seed=2)
    assert r.replicates_used + r.replicates_undefined == 200
    assert 0 < r.replicates_undefined < 200
    assert r.unreliable == (r.replicates_undefined >= 100)


def test_bootstrap_rejects_bad_input():
    data = two_cell_data(np.random.default_rng(0), n=5)
    with pytest.raises(ValidationError):
        bootstrap(data, [("AATT", 1)], B=1)


def test_ci():
    data = two_cell_data(np.random.default_rng(0), n=50)
    (r,) = bootstrap(data, [("mean", (1, 0))], B=100, seed=0)
    lo, hi = r.ci()
    assert lo < r.point < hi


def test_welch_z():
    diff, z, p = welch_z(np.array([1.0, 3.0]), np.array([0.0, 2.0]))
    assert diff == 1 and z == pytest.approx(1 / np.sqrt(2 / 2 + 2 / 2)) and 0 < p < 1
    assert welch_z(np.ones(3), np.ones(3)) == (0.0, 0.0, 1.0)


def test_holm_adjusted_at_least_raw():
    rng = np.random.default_rng(4)
    s = rng.integers(0, 3, (600, 3))
    y = rng.normal(size=600)
    rep = sutva_d_test(Dataset(y, s, GridSpec(1.0, ("a", "b", "c"))))
    assert len(rep.tests) > 1
    assert all(t.p_adj >= t.p_raw for t in rep.tests)


def test_single_pair_not_adjusted():
    rep = sutva_d_test(two_cell_data(np.random.default_rng(1), n=20))
    (t,) = rep.tests
    assert t.p_adj == pytest.approx(t.p_raw)
    assert (t.a, t.b) == ((1, 0), (0, 1))


def test_detects_shift():
    rep = sutva_d_test(two_cell_data(np.random.default_rng(1), n=200, shift=1.0))
    assert rep.reject


def test_empty_report():
    data = Dataset(np.arange(4.0), np.array([[0, 0], [0, 0], [1, 0], [1, 0]]), G2)
    rep = sutva_d_test(data)
    assert rep.tests == () and not rep.reject and rep.note


def test_small_cells_excluded():
    s = np.array([[1, 0]] * 5 + [[0, 1]] * 5 + [[0, 0]])
    rep = sutva_d_test(Dataset(np.arange(11.0), s, G2))
    assert rep.excluded == ((0, 0),)


def test_finer_coding():
    rng = np.random.default_rng(3)
    coarse = Dataset(rng.normal(size=40), np.array([[1]] * 40), GridSpec(1.0, ("a",)))
    finer = Dataset(coarse.y, np.array([[1, 0]] * 20 + [[0, 1]] * 20), G2)
    rep = sutva_d_test(coarse, finer=finer)
    (t,) = rep.tests
    assert t.group == (1,) and t.n_a == 20
    with pytest.raises(ValidationError):
        sutva_d_test(coarse, finer=Dataset([0.0], [[1, 0]], G2))


def test_method_validated():
    with pytest.raises(ValidationError):
        sutva_d_test(two_cell_data(np.random.default_rng(0), n=5), method="bh")

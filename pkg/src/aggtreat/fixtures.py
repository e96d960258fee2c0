"""Reference data: the enrichment-hours application and small worked examples.

The enrichment marginals are exact rationals reconstructed from the row and
column sums of the tabulated minimally incongruent weights (rounded to three
decimals there). Vectors are in half-hour units, ordered (lessons, sports,
volunteering, before/after school).
"""

from __future__ import annotations

from fractions import Fraction as F

from .core import CellStats, GridSpec

ENRICHMENT_GRID = GridSpec(0.5, ("lessons", "sports", "volunteering", "before_after_school"))

TABLE1_MARGINALS: dict[int, dict[tuple[int, ...], F]] = {
    0: {(0, 0, 0, 0): F(1)},
    1: {(1, 0, 0, 0): F(1)},
    2: {(1, 0, 0, 1): F(1, 15), (1, 0, 1, 0): F(4, 15), (2, 0, 0, 0): F(10, 15)},
    3: {(0, 0, 0, 3): F(2, 16), (1, 0, 0, 2): F(1, 16), (1, 0, 2, 0): F(3, 16), (1, 1, 1, 0): F(1, 16),
        (0, 0, 3, 0): F(3, 16), (0, 3, 0, 0): F(1, 16), (3, 0, 0, 0): F(5, 16)},
    4: {(0, 0, 0, 4): F(2, 10), (0, 0, 4, 0): F(3, 10), (1, 0, 3, 0): F(3, 10), (0, 4, 0, 0): F(1, 10),
        (4, 0, 0, 0): F(1, 10)},
    5: {(1, 0, 0, 4): F(1, 5), (0, 0, 0, 5): F(1, 5), (1, 0, 4, 0): F(1, 5), (1, 1, 0, 3): F(1, 5),
        (2, 0, 3, 0): F(1, 5)},
    6: {(5, 0, 1, 0): F(2, 3), (3, 0, 0, 3): F(1, 3)},
}

# tabulated minimal incongruent share per level (grid units), to 4 decimals
TABLE1_SHARES = {1: 0.0, 2: 0.0, 3: 0.3751, 4: 0.3375, 5: 0.4000, 6: 1.0}
TABLE1_PAIR_COUNTS = {"total": 95, "congruent": 19, "incongruent": 76}

# tabulated optimal weights: (d, s_d, s_{d-1}, incongruent, delta, w*)
TABLE1_WSTAR = [
    (1, (1, 0, 0, 0), (0, 0, 0, 0), False, -0.219, 1.000),
    (2, (1, 0, 0, 1), (1, 0, 0, 0), False, 0.388, 0.067),
    (2, (1, 0, 1, 0), (1, 0, 0, 0), False, -0.227, 0.267),
    (2, (2, 0, 0, 0), (1, 0, 0, 0), False, -0.018, 0.667),
    (3, (0, 0, 0, 3), (1, 0, 0, 1), True, 0.085, 0.004),
    (3, (1, 0, 0, 2), (1, 0, 0, 1), False, 0.340, 0.063),
    (3, (0, 0, 0, 3), (1, 0, 1, 0), True, 0.701, 0.017),
    (3, (1, 0, 2, 0), (1, 0, 1, 0), False, -0.000, 0.188),
    (3, (1, 1, 1, 0), (1, 0, 1, 0), False, 0.752, 0.063),
    (3, (0, 0, 0, 3), (2, 0, 0, 0), True, 0.491, 0.104),
    (3, (0, 0, 3, 0), (2, 0, 0, 0), True, 0.236, 0.188),
    (3, (0, 3, 0, 0), (2, 0, 0, 0), True, 0.030, 0.063),
    (3, (3, 0, 0, 0), (2, 0, 0, 0), False, 0.061, 0.313),
    (4, (0, 0, 0, 4), (0, 0, 0, 3), False, -0.170, 0.125),
    (4, (0, 0, 4, 0), (0, 0, 3, 0), False, -0.022, 0.075),
    (4, (1, 0, 3, 0), (0, 0, 3, 0), False, -0.141, 0.113),
    (4, (0, 4, 0, 0), (0, 3, 0, 0), False, -0.104, 0.063),
    (4, (0, 0, 4, 0), (1, 0, 0, 2), True, -0.532, 0.025),
    (4, (0, 4, 0, 0), (1, 0, 0, 2), True, -0.820, 0.038),
    (4, (1, 0, 3, 0), (1, 0, 2, 0), False, 0.304, 0.188),
    (4, (0, 0, 4, 0), (1, 1, 1, 0), True, -0.329, 0.063),
    (4, (0, 0, 0, 4), (3, 0, 0, 0), True, 0.260, 0.075),
    (4, (0, 0, 4, 0), (3, 0, 0, 0), True, 0.154, 0.138),
    (4, (4, 0, 0, 0), (3, 0, 0, 0), False, -0.712, 0.100),
    (5, (1, 0, 0, 4), (0, 0, 0, 4), False, -0.417, 0.200),
    (5, (0, 0, 0, 5), (0, 0, 4, 0), True, 0.058, 0.200),
    (5, (1, 0, 4, 0), (0, 0, 4, 0), False, -0.762, 0.100),
    (5, (1, 1, 0, 3), (0, 4, 0, 0), True, 0.601, 0.100),
    (5, (1, 0, 4, 0), (1, 0, 3, 0), False, -0.642, 0.100),
    (5, (2, 0, 3, 0), (1, 0, 3, 0), False, 0.687, 0.200),
    (5, (1, 1, 0, 3), (4, 0, 0, 0), True, 0.601, 0.100),
    (6, (5, 0, 1, 0), (0, 0, 0, 5), True, 0.138, 0.200),
    (6, (5, 0, 1, 0), (1, 0, 0, 4), True, 0.507, 0.200),
    (6, (5, 0, 1, 0), (1, 0, 4, 0), True, 0.959, 0.200),
    (6, (3, 0, 0, 3), (1, 1, 0, 3), True, -0.747, 0.133),
    (6, (5, 0, 1, 0), (1, 1, 0, 3), True, -0.117, 0.067),
    (6, (3, 0, 0, 3), (2, 0, 3, 0), True, -1.001, 0.200),
]


def table1_stats(level_weights: dict[int, F] | None = None) -> CellStats:
    """CellStats carrying the reconstructed marginals and zero cell means.

    Only conditional frequencies are known, so the level probabilities are
    uniform unless ``level_weights`` is supplied and every cell mean is 0.
    """
    levels = sorted(TABLE1_MARGINALS)
    lw = level_weights or {d: F(1, len(levels)) for d in levels}
    prob = {s: lw[d] * p for d in levels for s, p in TABLE1_MARGINALS[d].items()}
    return CellStats.from_distribution(prob, {s: F(0) for s in prob}, ENRICHMENT_GRID)


# three binary sub-treatments at levels 1 and 2, as in the running example
EXAMPLE_GRID = GridSpec(1.0, ("s1", "s2", "s3"))
LEVEL1 = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
LEVEL2 = ((1, 1, 0), (1, 0, 1), (0, 1, 1))
UNIFORM_MARGINALS = {1: dict.fromkeys(LEVEL1, F(1, 3)), 2: dict.fromkeys(LEVEL2, F(1, 3))}
SKEWED_MARGINALS = {
    1: {(1, 0, 0): F(8, 10), (0, 1, 0): F(1, 10), (0, 0, 1): F(1, 10)},
    2: {(1, 1, 0): F(1, 10), (1, 0, 1): F(1, 10), (0, 1, 1): F(8, 10)},
}
# weights putting 1/3 on each incongruent pair (1,1,0)|(0,0,1) etc.
W_B = {(hi, lo): (F(1, 3) if min(a - b for a, b in zip(hi, lo)) < 0 else F(0))
       for hi in LEVEL2 for lo in LEVEL1}


def example_stats(marginals: dict, means: dict | None = None,
                  level_probs: tuple = (F(1, 5), F(2, 5), F(2, 5))) -> CellStats:
    """Three-sub-treatment example with levels 0, 1, 2."""
    prob = {(0, 0, 0): F(level_probs[0])}
    for d, p_d in ((1, level_probs[1]), (2, level_probs[2])):
        for s, p in marginals[d].items():
            prob[s] = F(p_d) * p
    means = means or {s: F(0) for s in prob}
    return CellStats.from_distribution(prob, means, EXAMPLE_GRID)

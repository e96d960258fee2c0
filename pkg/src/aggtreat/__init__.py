"""Diagnostics and estimands for treatments built by summing sub-treatments."""

__version__ = "0.1.0"

from .errors import AggTreatError, ContractError, DegenerateError, LevelError, ValidationError  # noqa: E402
from .core import CellStats, Dataset, GridSpec, cell_stats, build_support, ingest, read_config  # noqa: E402
from .congruence import count_binary, count_trinary, is_congruent, marginal_sets  # noqa: E402
from .chains import build_chain, congruent_parent, decompose_incongruent, decompose_satt  # noqa: E402
from .transport import (  # noqa: E402
    TransportProblem, WeightScheme, check_scheme, decreasing_means_diagnostic, incongruency_report,
    product_weights, solve_min_incongruent,
)
from .estimate import Estimand, evaluate, overall, regression  # noqa: E402
from .inference import bootstrap, sutva_d_test  # noqa: E402
from .simulate import LatentPopulation, Scenario, generate, oracle_check  # noqa: E402

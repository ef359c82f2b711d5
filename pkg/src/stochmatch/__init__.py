"""Online stochastic bipartite matching: LP relaxation, correlated-proposal
algorithms, exact oracles, tail bounds for E[min(1, X)] and grid certificates."""

from .instance import (ArrivalType, BernoulliInstance, GeneralInstance, InstanceError, Stochastic3SatFormula,
                       build_from_3sat, gen_random, gen_rescale_example, gen_uniform_star, read_json, validate,
                       write_json)
from .lp import LpSolution, GeneralLpSolution, check_feasibility, lp_statistics, solve_lp, solve_lp_general
from .pivotal import PivotalInput, SubsetDistribution, check_ncd, ps_exact_distribution, ps_sample
from .engine import (exact_evaluate, exact_evaluate_general, rescale, run_core, run_edge_weighted, run_general,
                     run_vertex_weighted, simulate)
from .oracle import opt_online, opt_online_general, opt_stochastic_3sat, prophet_value_mc

__version__ = "0.1.0"

"""Energy-efficient RSMA-ISAC precoder design."""

from .algorithms import (SolveReport, exact_violations, make_instance, solve_baseline,
                         solve_maxmin_ee, solve_sum_rate, solve_total_ee)
from .problem import (Instance, InnerProblem, SlackState, build_base, build_common_rate_constraints,
                      build_crb_lmi, build_power_constraint, build_private_rate_constraints,
                      build_qos, crb_lmi_matrix, exact_rates, interference_terms, penalty_expr,
                      slack_chain_bounds)
from .sca import (dinkelbach_update, extract_rank_one, init_precoders, penalty_terms,
                  sca_linearize_rate)

__all__ = [
    "Instance", "InnerProblem", "SlackState", "SolveReport", "build_base",
    "build_common_rate_constraints", "build_crb_lmi", "build_power_constraint",
    "build_private_rate_constraints", "build_qos", "crb_lmi_matrix", "dinkelbach_update",
    "exact_rates", "exact_violations", "extract_rank_one", "init_precoders", "interference_terms",
    "make_instance", "penalty_expr", "penalty_terms", "sca_linearize_rate", "slack_chain_bounds", "solve_baseline",
    "solve_maxmin_ee", "solve_sum_rate", "solve_total_ee",
]

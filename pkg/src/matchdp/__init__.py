"""Dynamic programming for optimal matching control on the N-graph."""
from .estimator import MatchingDPSolver, PolicyEvaluator
from .model import (ArrivalDistribution, CostFunction, ModelError, apply_matching, cost,
                    enumerate_matchings, validate_model)
from .policies import (CENSORED, BaselinePolicy, ThresholdPolicy, ThresholdRangeError,
                       baseline_action, threshold_action)
from .simulation import SimConfig, compare_policies, estimate_cost, simulate_trajectory
from .solver import (SolverConfig, ValueTable, bellman_apply, bellman_min, extract_policy,
                     extract_thresholds, value_iteration, verify_threshold_optimality)
from .structure import check_closure_under_L

__version__ = "0.1.0"

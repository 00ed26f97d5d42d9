"""scikit-learn style front-ends for the solver and the simulator."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_coefficients, check_probability_vector, check_states
from .model import validate_model, ModelError
from .policies import as_policy
from .simulation import SimConfig, compare_policies, estimate_cost, sim_horizon_for
from .solver import (SolverConfig, bellman_min, extract_thresholds, value_iteration,
                     verify_threshold_optimality)


class MatchingDPSolver(BaseEstimator):
    """Discounted-cost optimal matching on the N-graph.

    ``fit`` runs value iteration and reads off threshold decision rules;
    ``predict`` maps states to matchings ``(a, b, c)`` and ``transform``
    returns ``[value, tail_bound]`` per state.

    Parameters
    ----------
    gamma : float
        Discount factor in (0, 1).
    mu : array-like of shape (4,)
        Arrival probabilities per class.
    cost : array-like of shape (4,)
        Linear holding cost coefficients; must be admissible.
    window : int
        Policies are reported for states with ``|x| <= window``.
    horizon : int, optional
        Number of backward stages.  When omitted it is derived from ``target_eps``.
    target_eps : float, default=1e-3
        Largest tail bound allowed on the value table when ``horizon`` is None.
    mode : {"priority_reduced", "full"}
        Matching family searched by the Bellman minimum.
    tie_tol : float, default=1e-9
    space : {"simplex", "priority"}
        ``priority`` solves only on states reachable under l1/l3 priority,
        which allows much larger windows.
    i_max : int, optional
        Half-width of the threshold index window, defaults to ``window``.

    Examples
    --------
    >>> est = MatchingDPSolver(gamma=0.8, mu=[.25] * 4, cost=[2, 1, 1, 2], window=4).fit()
    >>> est.predict([[1, 4, 5, 2]]).tolist()
    [[1, 2, 2]]
    """

    def __init__(self, gamma=0.8, mu=(0.25, 0.25, 0.25, 0.25), cost=(2.0, 1.0, 1.0, 2.0),
                 window=8, horizon=None, target_eps=1e-3, mode="priority_reduced",
                 tie_tol=1e-9, space="simplex", i_max=None, mem_cap_mb=None):
        self.gamma = gamma
        self.mu = mu
        self.cost = cost
        self.window = window
        self.horizon = horizon
        self.target_eps = target_eps
        self.mode = mode
        self.tie_tol = tie_tol
        self.space = space
        self.i_max = i_max
        self.mem_cap_mb = mem_cap_mb

    def _config(self) -> SolverConfig:
        mu = check_probability_vector(self.mu)
        cost = check_coefficients(self.cost)
        problems = validate_model(mu, cost)
        if problems:
            raise ModelError("; ".join(problems))
        return SolverConfig(self.gamma, mu, cost, self.window,
                            horizon=self.horizon,
                            target_eps=None if self.horizon is not None else self.target_eps,
                            mode=self.mode, tie_tol=self.tie_tol, space=self.space,
                            mem_cap_mb=self.mem_cap_mb)

    def fit(self, X=None, y=None):
        """Solve the model.  ``X`` and ``y`` are ignored."""
        cfg = self._config()
        sol = value_iteration(cfg)
        ext = extract_thresholds(sol.table, cfg, self.i_max)
        self.config_ = cfg
        self.value_table_ = sol.table
        self.tail_bound_ = sol.eps
        self.stage_log_ = sol.sup_changes
        self.horizon_ = sol.horizon
        self.thresholds_ = ext.policy
        self.threshold_report_ = ext
        return self

    def predict(self, X) -> np.ndarray:
        """Threshold-rule matchings ``(a, b, c)`` for each state row."""
        check_is_fitted(self, "thresholds_")
        X = check_states(X)
        return self.thresholds_.actions(X)

    def transform(self, X) -> np.ndarray:
        """``[V_N(x), tail bound at x]`` for states inside the value table."""
        check_is_fitted(self, "value_table_")
        X = check_states(X, radius=self.value_table_.radius)
        values = self.value_table_.lookup(X)
        if np.isnan(values).any():
            raise ValueError("some states are not stored in the solved state space")
        pos = self.value_table_.space.locate(X)
        return np.column_stack([values, self.tail_bound_[pos]])

    def optimal_actions(self, x, mode=None):
        """Every matching attaining the Bellman minimum at ``x`` (within ``tie_tol``)."""
        check_is_fitted(self, "value_table_")
        return bellman_min(self.value_table_, tuple(int(v) for v in x), self.config_, mode)[1]

    def verify(self, radius=None, tol=None):
        check_is_fitted(self, "thresholds_")
        return verify_threshold_optimality(self.value_table_, self.thresholds_, self.config_,
                                           radius=radius, tol=tol)


class PolicyEvaluator(BaseEstimator):
    """Monte Carlo discounted cost of decision rules from a fixed start state.

    ``fit(policies)`` accepts a list of policies (baseline names, threshold
    policies or callables) and evaluates them on common arrival streams.
    ``predict`` returns the mean cost per fitted policy, in input order.
    """

    def __init__(self, gamma=0.8, mu=(0.25, 0.25, 0.25, 0.25), cost=(2.0, 1.0, 1.0, 2.0),
                 x0=(0, 0, 0, 0), horizon=None, target_eps=1e-3, replications=10_000,
                 seed=0, threads=1):
        self.gamma = gamma
        self.mu = mu
        self.cost = cost
        self.x0 = x0
        self.horizon = horizon
        self.target_eps = target_eps
        self.replications = replications
        self.seed = seed
        self.threads = threads

    def _base(self) -> SimConfig:
        mu = check_probability_vector(self.mu)
        cost = check_coefficients(self.cost)
        x0 = tuple(int(v) for v in check_states([self.x0])[0])
        proto = SimConfig(self.gamma, mu, cost, x0, 1, self.replications, self.seed)
        H = self.horizon if self.horizon is not None else \
            sim_horizon_for(proto.cost, self.gamma, x0, self.target_eps)
        return proto.replace(horizon=H)

    def fit(self, policies, y=None):
        base = self._base()
        cfgs = []
        for k, p in enumerate(policies):
            p = as_policy(p)
            name = getattr(p, "name", None) or f"policy{k}"
            cfgs.append(base.replace(policy=p, policy_name=name))
        self.names_ = [c.policy_name for c in cfgs]
        by_name = {e.policy: e for e in compare_policies(cfgs, threads=self.threads)}
        self.estimates_ = [by_name[n] for n in self.names_]
        self.horizon_ = base.horizon
        return self

    def predict(self, X=None) -> np.ndarray:
        check_is_fitted(self, "estimates_")
        return np.array([e.mean for e in self.estimates_])

    def score_single(self, policy) -> float:
        return estimate_cost(self._base().replace(policy=as_policy(policy))).mean

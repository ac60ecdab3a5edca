"""Replicator dynamics under output-feedback subsidies."""

import json

from ._core import (
    AssumptionViolation,
    DomainError,
    InapplicableError,
    Scenario,
    StepFailure,
    __version__,
    _recommend_d_json,
    aggregate_output,
    field,
    find_target_equilibria,
    interior_grid,
    lyapunov_terms,
    phase_portrait,
    region_bounds,
    run_agents,
    run_cli,
    simulate,
)


def recommend_d(scenario, y_star, **sampling):
    """Stability report for target output y_star, as a dict."""
    return json.loads(_recommend_d_json(scenario, y_star, **sampling))


def first_action_shares(values):
    """State with the given action-1 share per population (two actions)."""
    return [[v, 1.0 - v] for v in values]


__all__ = [
    "AssumptionViolation",
    "DomainError",
    "InapplicableError",
    "Scenario",
    "StepFailure",
    "__version__",
    "aggregate_output",
    "field",
    "find_target_equilibria",
    "first_action_shares",
    "interior_grid",
    "lyapunov_terms",
    "phase_portrait",
    "recommend_d",
    "region_bounds",
    "run_agents",
    "run_cli",
    "simulate",
]

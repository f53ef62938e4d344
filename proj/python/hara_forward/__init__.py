"""HARA forward utilities on discrete market trees."""

from ._hara_forward import (
    DomainError,
    MarketTree,
    SolverError,
    ValidationError,
    binomial_log_closed_form,
    binomial_power_closed_form,
    f_q,
    hellinger_increments,
    k_p,
    run_scenario_text,
    synthesize_log,
    synthesize_power,
    verify_power,
)

__all__ = [
    "DomainError",
    "MarketTree",
    "SolverError",
    "ValidationError",
    "binomial_log_closed_form",
    "binomial_power_closed_form",
    "f_q",
    "hellinger_increments",
    "k_p",
    "run_scenario_text",
    "synthesize_log",
    "synthesize_power",
    "verify_power",
]

"""feebench: a network-effect participation game simulator with a
fulfilled-expectation equilibrium benchmark, an FSM experiment protocol,
pluggable agents, and a deviation/RMSE/regression analysis pipeline.
"""

from .game import (
    Action,
    EquilibriumSolution,
    GameSpec,
    NoEquilibriumError,
    PriceSequence,
    TrajectoryKind,
    best_response,
    build_trajectory,
    demand,
    equilibrium_price_interval,
    make_price,
    solve_fee,
    utility,
)

__all__ = [
    "Action",
    "EquilibriumSolution",
    "GameSpec",
    "NoEquilibriumError",
    "PriceSequence",
    "TrajectoryKind",
    "best_response",
    "build_trajectory",
    "demand",
    "equilibrium_price_interval",
    "make_price",
    "solve_fee",
    "utility",
]

__version__ = "0.1.0"

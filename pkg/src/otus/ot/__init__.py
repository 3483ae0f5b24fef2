"""Exact small-instance optimal transport."""

from .measures import DiscreteMeasure, pushforward, read_measure, write_measure
from .simplex import linprog_eq
from .wasserstein import (
    MAX_ATOMS,
    TransportPlan,
    cost_matrix,
    joint_cost_lower_bound,
    joint_transport_cost,
    w1_1d,
    w1_dual,
    w1_exact,
)

__all__ = [
    "DiscreteMeasure", "MAX_ATOMS", "TransportPlan", "cost_matrix", "joint_cost_lower_bound",
    "joint_transport_cost", "linprog_eq", "pushforward", "read_measure", "w1_1d", "w1_dual",
    "w1_exact", "write_measure",
]

"""Optimal allocation of a sampling budget over individual and pairwise-difference measurements."""
from .campaign import CampaignState, kl_divergence, run_campaign, simulate_measurements
from .convexopt import SolveReport, kkt_residual, optimize, round_to_integers
from .designs import (
    SparseDesignSpec,
    const_rel_error_a_optimal,
    const_rel_error_d_optimal,
    naive_allocation,
    sparse_design,
)
from .errors import DesignError, NotConverged
from .etree import e_optimal, shortest_path_tree, tree_covariance
from .inference import covariance, estimate, evaluate, fisher_matrix, gradient, information_state
from .netcore import (
    Allocation,
    DifferenceNetwork,
    MeasurementSet,
    build_network,
    complete_network,
    connectivity_deficit,
    contract_references,
    cost_transform,
    from_cost_units,
    heavy_atom_network,
    minimum_spanning_tree,
)

__version__ = "0.1.0"

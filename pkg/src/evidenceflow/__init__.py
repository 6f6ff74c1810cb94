"""Evidence flows, random walks and proportion contributions for network meta-analysis."""

from .errors import *  # noqa: F401,F403
from .fixtures import HatRow, load_fixture, parse_hatrow
from .flow import (
    ConservationReport,
    EvidenceFlowNetwork,
    evidence_flow,
    flow_from_row,
    flow_rows,
    to_dot,
    topological_order,
    verify_conservation,
)
from .hat import HatMatrix, hat_matrix, laplacian, network_estimates
from .model import (
    AggregateNetwork,
    ContrastObservation,
    Study,
    adjust_multiarm,
    aggregate_from_studies,
    apply_heterogeneity,
    format_aggregate,
    order_treatments,
    parse_aggregate,
    parse_contrasts,
    pool_edges,
)
from .numerics import laplacian_pinv, pinv_symmetric, resistance_distances, solve_linear
from .randomwalk import (
    CrossingEstimate,
    TransitionMatrix,
    analytic_currents,
    dirichlet_potentials,
    make_absorbing,
    simulate_crossings,
    transition_matrix,
)
from .streams import (
    ContributionRow,
    EvidenceStream,
    Strategy,
    analytic_streams,
    enumerate_paths,
    legacy_average,
    legacy_streams,
    proportion_contributions,
    stream_estimate,
    stream_flows,
    stream_transition_matrix,
)

__version__ = "0.1.0"

"""uowlab: directed-sector optical sensor network simulation laboratory.

Subpackages:
  - channel: underwater optical attenuation, link budget, range inversion
  - netgraph: random directed sector graphs and path queries
  - connectivity: closed-form and Monte Carlo connectivity probabilities
  - localization: matrix-completion localization and baselines
  - simcli: seeded experiment sweeps with CSV persistence (CLI: uowlab)
"""

__version__ = "0.1.0"

from .channel import (
    OpticalLink,
    WaterModel,
    absorption_coefficient,
    estimate_range,
    lambert_w0,
    received_power,
    scattering_coefficient,
)
from .connectivity import (
    ConnectivityParams,
    MonteCarloEstimate,
    monte_carlo_p_connected,
    p_backward_given_forward,
    p_backward_given_forward_2,
    p_connected,
    p_connected_k,
    p_connected_refined,
    p_forward,
    p_forward_k,
)
from .localization import (
    AnchorSet,
    CompletionResult,
    LocalizationResult,
    ObservedDistanceMatrix,
    SimilarityTransform,
    complete_matrix,
    localize,
    mds_embed,
    observe_distances,
    positions_from_text,
    positions_to_text,
    procrustes_align,
)
from .netgraph import (
    DirectedSectorGraph,
    NodeSector,
    deploy,
    graph_from_text,
    graph_to_text,
    in_sector,
    is_k_connected,
    sector_adjacency,
    shortest_path_distances,
)

__all__ = [
    "__version__",
    "OpticalLink", "WaterModel", "absorption_coefficient", "estimate_range",
    "lambert_w0", "received_power", "scattering_coefficient",
    "ConnectivityParams", "MonteCarloEstimate", "monte_carlo_p_connected",
    "p_backward_given_forward", "p_backward_given_forward_2", "p_connected",
    "p_connected_k", "p_connected_refined", "p_forward", "p_forward_k",
    "AnchorSet", "CompletionResult", "LocalizationResult",
    "ObservedDistanceMatrix", "SimilarityTransform", "complete_matrix",
    "localize", "mds_embed", "observe_distances", "positions_from_text",
    "positions_to_text", "procrustes_align",
    "DirectedSectorGraph", "NodeSector", "deploy", "graph_from_text",
    "graph_to_text", "in_sector", "is_k_connected", "sector_adjacency",
    "shortest_path_distances",
]

"""Connection-probability estimation for multi-layer networks by iterative
node- and layer-level neighborhood smoothing (MICE), with graphon simulation
and link-prediction evaluation."""

__version__ = "0.1.0"

from .estimators import (
    Mode,
    NeighborhoodConfig,
    NeighborSets,
    IterationTrace,
    build_neighbor_sets,
    compute_delta,
    default_sizes,
    mice_estimate,
    select_layer_neighbors,
    select_node_neighbors,
    smoothing_update,
    warm_start,
)
from .evaluation import (
    ScenarioSpec,
    auc,
    generate_mask,
    mae,
    rmse,
    roc_curve,
    run_scenario,
    temporal_precision,
)
from .graphon import (
    GraphonModel,
    LatentPositions,
    build_probability_tensor,
    builtin_graphon,
    sample_adjacency,
    sample_latents,
    simulate,
)
from .tensors import (
    AdjacencyTensor,
    MaskTensor,
    MaskedAdjacency,
    ProbabilityTensor,
    apply_mask,
    layer_distance,
    row_distance,
    validate,
)

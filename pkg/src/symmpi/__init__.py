"""Finite-sample prediction sets for data with group symmetries."""

from .groups import (
    BlockPermutation,
    BlockPermutationGroup,
    CosetDecomposition,
    GraphAutomorphismGroup,
    GroupAction,
    NotEnumerableError,
    OrthogonalGroup,
    Permutation,
    SymmetricGroup,
    TrivialGroup,
    coset_representatives,
    default_probes,
    enumerate_automorphisms,
    orbit_of_index,
    sample_block_permutation,
    sample_haar_orthogonal,
    sample_uniform_permutation,
)
from .transforms import (
    EquivarianceReport,
    LinearModel,
    RegressorBundle,
    TreeGraph,
    check_distributional_equivariance,
    coordinatewise_score,
    energy_permutation_test,
    fit_regressors,
    five_step_supervised_scores,
    hierarchical_sup_transform,
    hierarchical_unsup_transform,
    interpolation_unsup_scores,
    mpgnn_forward,
    optimize_c,
    simple_unsup_scores,
)
from .calibrate import (
    PredictionSet,
    Threshold,
    WeightSpec,
    adaptive_center_scores_ragged,
    candidate_grid,
    estimate_shift_gap,
    finite_quantile,
    hcp_first_obs_set,
    nonsym_set,
    overcoverage_bound,
    randomized_set,
    randomsize_threshold,
    supervised_hierarchical_set,
    symmpi_set,
    symmpi_set_randomsize,
    threshold,
    threshold_from_scores,
)
from .baselines import single_tree_set, split_conformal_set, subsampling_set
from .network import (
    CoarsenedGraph,
    cluster_sum_set,
    coarsen_graph,
    graph_vertex_set,
    tree_leaf_set,
)

__version__ = "0.1.0"

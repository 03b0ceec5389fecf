"""Matrix completion with hierarchical graph side information."""

from .model import (
    DegenerateModelError,
    DeltaPair,
    DimensionError,
    HierarchyConfig,
    Observation,
    ParseError,
    Partition,
    RatingModel,
    SideGraph,
    TooLargeError,
    UnsupportedFieldError,
    ValidationError,
    compute_deltas,
    hamming,
    map_y_to_z,
    materialize_matrix,
)
from .gen import (
    ColumnSectionProfile,
    GaussianInstance,
    GraphParams,
    ObservationParams,
    RealObservation,
    gen_gaussian_instance,
    gen_hierarchical_group_means,
    gen_hsbm_graph,
    gen_partition,
    gen_rating_model,
    sample_observations,
)
from .theory import (
    InfoMeasures,
    PStar,
    Regime,
    RegimeKind,
    classify_regime,
    coupon_coefficient,
    info_measures,
    p_star_232,
    p_star_general,
    prefactor,
    regime_map,
)
from .recovery import (
    EstimatedParams,
    GaussianRecoveryResult,
    RecoveryResult,
    estimate_params,
    phase1_cluster,
    phase2_group,
    phase3_vectors,
    phase4_refine,
    recover,
    recover_gaussian,
)
from .oracle import (
    Candidate,
    MleResult,
    PairCounts,
    TruthParams,
    brute_force_log_prob,
    count_disagreements,
    count_pairs_and_edges,
    exhaustive_mle,
    log_offset,
    neg_log_likelihood,
)
from .harness import (
    GaussianSpec,
    PointResult,
    SweepSpec,
    TrialOutcome,
    compare_flags,
    rmse_eval,
    run_trial,
    sweep,
    wilson_interval,
)

__version__ = "0.1.0"

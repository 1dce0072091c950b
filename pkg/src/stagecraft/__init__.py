"""Simple staged trees and chain event graphs for categorical data."""
from .model import (
    CEG,
    EventTree,
    PositionPartition,
    StagedTree,
    VariableSpec,
    atom_probabilities,
    build_event_tree,
    compute_positions,
    full_staging,
    is_simple,
    relevel,
    simplify,
    subtree_equal,
    to_ceg,
)
from .scoring import (
    CountTree,
    Dataset,
    bic,
    count_paths,
    delta_bic_merge,
    log_likelihood,
    mle_parameters,
    n_free_params,
)
from .learn import (
    LearnConfig,
    LearnResult,
    closure_propagate,
    learn,
    learn_bhc,
    learn_exhaustive,
    learn_greedy_order_marginal,
    learn_marginal,
    learn_simplified_bhc,
    learn_total,
)
from .bn import (
    DAG,
    bn_to_staged_tree,
    is_decomposable,
    is_simple_dag,
    learn_bn_hc,
    simplify_dag,
    topological_orders,
)
from .simulate import (
    SimConfig,
    hamming_stage_distance,
    random_parameters,
    random_simple_tree,
    run_consistency_study,
    sample,
)

__version__ = "0.1.0"

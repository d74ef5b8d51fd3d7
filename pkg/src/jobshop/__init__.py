"""Job-shop scheduling: N5 local search with a learned move-picking policy,
message-passing schedule evaluation, and classical improvement baselines."""

from .instances import (
    Instance,
    OpId,
    SINK,
    SOURCE,
    generate_taillard,
    parse_standard,
    parse_taillard,
    serialize_standard,
    serialize_taillard,
)
from .graph import (
    GraphView,
    Move,
    Solution,
    apply_move,
    build_graph,
    context_subgraphs,
    is_acyclic,
)
from .dispatch import initial_solution_fdd_mwkr, random_dispatch_solution
from .evaluate import (
    CriticalBlocks,
    Schedule,
    backward_pass,
    batch_evaluate,
    cpm_oracle,
    evaluate_schedule,
    extract_critical,
    forward_pass,
)
from .neighborhood import MoveSet, analyze_solution, build_mask, enumerate_moves
from .policy import PolicyConfig, PolicyNetwork, build_features, sample_action
from .training import Environment, TrainConfig, compute_returns, train

__all__ = [name for name in dir() if not name.startswith("_")]

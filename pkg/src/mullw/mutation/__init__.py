from .consumers import FunctionFlow, analyze, stack_consumers
from .engine import (
    MutationPoint, apply_mutation, enumerate_points, function_points, is_excluded,
    make_mp_id, match_and_rewrite,
)
from .operators import ALL_OPERATORS, OperatorId

__all__ = [
    "ALL_OPERATORS", "FunctionFlow", "MutationPoint", "OperatorId", "analyze",
    "apply_mutation", "enumerate_points", "function_points", "is_excluded",
    "make_mp_id", "match_and_rewrite", "stack_consumers",
]

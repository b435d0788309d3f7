# Model module
from .logistic import (
    AgentShard,
    LogisticShardProblem,
    ModelConfig,
    Sample,
    local_gradient,
    local_objective,
    sensitivity,
    softmax_probs,
)

__all__ = [
    "AgentShard",
    "LogisticShardProblem",
    "ModelConfig",
    "Sample",
    "local_gradient",
    "local_objective",
    "sensitivity",
    "softmax_probs",
]

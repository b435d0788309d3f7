# src/model/logistic.py - Multiclass logistic regression local objective
#
# f_p(w) = -(1/I) sum_i sum_k y_pik ln h_k(w; x_pi) + (beta/P) ||w||_F^2
# where h is the softmax of the logits x_pi @ w.

from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from errors import UsageError

# Smallest value fed to the log in the cross-entropy.
LOG_FLOOR = 1e-300
_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class Sample:
    """One labeled example: pixel features and a one-hot label."""

    features: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        label = np.asarray(self.label, dtype=np.float64)
        if features.ndim != 1 or label.ndim != 1:
            raise UsageError("Sample features and label must be vectors")
        if not np.all(np.isfinite(features)):
            raise UsageError("Sample features must be finite")
        _check_one_hot(label[None, :])
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'label', label)


@dataclass
class AgentShard:
    """Training data held by agent p, stored as dense (I_p, J) and (I_p, K) arrays."""

    agent_id: int
    features: np.ndarray
    labels: np.ndarray
    # Row indices into the dataset the shard was cut from (partition bookkeeping).
    source_index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise UsageError("Shard features and labels must be 2-D arrays")
        if self.features.shape[0] != self.labels.shape[0]:
            raise UsageError(
                f"Shard {self.agent_id}: {self.features.shape[0]} feature rows but "
                f"{self.labels.shape[0]} label rows")
        if self.features.shape[0] < 1:
            raise UsageError(f"Shard {self.agent_id} is empty")
        if not np.all(np.isfinite(self.features)):
            raise UsageError(f"Shard {self.agent_id} has non-finite features")
        _check_one_hot(self.labels)
        if self.source_index is None:
            self.source_index = np.arange(self.features.shape[0])

    @classmethod
    def from_samples(cls, agent_id: int, samples: Sequence[Sample]) -> 'AgentShard':
        if not samples:
            raise UsageError(f"Shard {agent_id} is empty")
        features = np.stack([s.features for s in samples])
        labels = np.stack([s.label for s in samples])
        return cls(agent_id=agent_id, features=features, labels=labels)

    @property
    def shard_size(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def samples(self) -> List[Sample]:
        return list(self.iter_samples())

    def iter_samples(self) -> Iterator[Sample]:
        for x, y in zip(self.features, self.labels):
            yield Sample(features=x, label=y)


@dataclass(frozen=True)
class ModelConfig:
    """beta, I = sum_p I_p and P from the distributed ERM objective."""

    beta: float
    total_samples: int
    num_agents: int

    def __post_init__(self):
        if self.beta < 0:
            raise UsageError(f"beta must be >= 0, got {self.beta}")
        if self.num_agents < 1:
            raise UsageError(f"num_agents must be >= 1, got {self.num_agents}")
        if self.total_samples < 1:
            raise UsageError(f"total_samples must be >= 1, got {self.total_samples}")

    @classmethod
    def for_shards(cls, shards: Sequence[AgentShard], beta: float) -> 'ModelConfig':
        return cls(beta=beta,
                   total_samples=sum(s.shard_size for s in shards),
                   num_agents=len(shards))


def _check_one_hot(labels: np.ndarray):
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise UsageError("Labels must be one-hot with entries in {0, 1}")
    if not np.all(labels.sum(axis=1) == 1.0):
        raise UsageError("Each label must have exactly one entry equal to 1")


def _check_dims(w: np.ndarray, num_features: int, num_classes: int | None = None):
    if w.ndim != 2 or w.shape[0] != num_features:
        raise UsageError(f"Parameter matrix of shape {w.shape} does not match J={num_features}")
    if num_classes is not None and w.shape[1] != num_classes:
        raise UsageError(f"Parameter matrix of shape {w.shape} does not match K={num_classes}")


def softmax_probs(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probabilities h(w; x) for one feature vector or a batch of rows.

    Logits are shifted by their maximum before exponentiation, so arbitrarily
    large logits do not overflow. Entries are floored at the smallest normal
    float to stay strictly positive.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise UsageError(f"Features must be a vector or a matrix, got {x.ndim} dimensions")
    _check_dims(w, x.shape[-1])
    probs = softmax(x @ w, axis=-1)
    return np.maximum(probs, _TINY)


def local_objective(w: np.ndarray, shard: AgentShard, cfg: ModelConfig) -> float:
    _check_dims(w, shard.num_features, shard.num_classes)
    probs = softmax_probs(w, shard.features)
    log_probs = np.log(np.maximum(probs, LOG_FLOOR))
    data_term = -np.sum(shard.labels * log_probs) / cfg.total_samples
    return float(data_term + (cfg.beta / cfg.num_agents) * np.sum(w * w))


def local_gradient(w: np.ndarray, shard: AgentShard, cfg: ModelConfig) -> np.ndarray:
    """Gradient of f_p: (1/I) X^T (H - Y) + (2 beta / P) w."""
    _check_dims(w, shard.num_features, shard.num_classes)
    residual = softmax_probs(w, shard.features) - shard.labels
    return shard.features.T @ residual / cfg.total_samples + (2.0 * cfg.beta / cfg.num_agents) * w


def sensitivity(z: np.ndarray, shard: AgentShard, cfg: ModelConfig) -> float:
    """l1 sensitivity of the local gradient at z.

    max over samples i of sum_jk |x_ij (h_k(z; x_i) - y_ik)| / I. The regularizer
    is identical on adjacent datasets and drops out.
    """
    if shard.shard_size < 1:
        raise UsageError("Sensitivity is undefined for an empty shard")
    _check_dims(z, shard.num_features, shard.num_classes)
    residual = softmax_probs(z, shard.features) - shard.labels
    return _max_contribution(np.abs(shard.features).sum(axis=1), residual) / cfg.total_samples


def _max_contribution(feature_l1: np.ndarray, residual: np.ndarray) -> float:
    # |x_j d_k| factorizes, so the per-sample l1 norm of the outer product is a product of l1 norms.
    return float(np.max(feature_l1 * np.abs(residual).sum(axis=1)))


class LogisticShardProblem:
    """Agent p's logistic objective bound to its shard, as seen by the optimizer."""

    def __init__(self, shard: AgentShard, cfg: ModelConfig):
        self.shard = shard
        self.cfg = cfg
        self.shape = (shard.num_features, shard.num_classes)
        self._feature_l1 = np.abs(shard.features).sum(axis=1)
        self._reg = 2.0 * cfg.beta / cfg.num_agents

    @property
    def agent_id(self) -> int:
        return self.shard.agent_id

    def objective(self, z: np.ndarray) -> float:
        return local_objective(z, self.shard, self.cfg)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return local_gradient(z, self.shard, self.cfg)

    def sensitivity(self, z: np.ndarray) -> float:
        return sensitivity(z, self.shard, self.cfg)

    def sample_contributions(self, z: np.ndarray) -> np.ndarray:
        """Per-sample data terms x_i (h_i - y_i)^T / I, shape (I_p, J, K); meant for small shards."""
        _check_dims(z, *self.shape)
        residual = softmax_probs(z, self.shard.features) - self.shard.labels
        return self.shard.features[:, :, None] * residual[:, None, :] / self.cfg.total_samples

    def gradient_and_sensitivity(self, z: np.ndarray) -> Tuple[np.ndarray, float]:
        """Both quantities from a single softmax evaluation."""
        _check_dims(z, *self.shape)
        residual = softmax_probs(z, self.shard.features) - self.shard.labels
        grad = self.shard.features.T @ residual / self.cfg.total_samples + self._reg * z
        delta = _max_contribution(self._feature_l1, residual) / self.cfg.total_samples
        return grad, delta

# src/data/datasets.py - Raw and federated datasets, partitioning, synthetic data

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from errors import UsageError
from mechanisms import RngStream, TAG_PARTITION, TAG_SYNTHETIC
from model import AgentShard

logger = logging.getLogger(__name__)


@dataclass
class RawDataset:
    """N x J feature matrix with integer class labels in [0, K)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise UsageError(f"features must be an N x J matrix, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise UsageError(
                f"{self.features.shape[0]} feature rows but labels of shape {self.labels.shape}")
        if self.features.shape[0] < 1:
            raise UsageError("dataset must hold at least one sample")
        if not np.issubdtype(self.labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(self.labels, 1), 0)):
                raise UsageError("labels must be integer class indices")
        self.labels = self.labels.astype(np.int64)
        if np.any(self.labels < 0):
            raise UsageError("labels must be non-negative")
        inferred = int(self.labels.max()) + 1
        if not self.num_classes:
            self.num_classes = inferred
        elif inferred > self.num_classes:
            raise UsageError(f"label {inferred - 1} out of range for K={self.num_classes}")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def one_hot(self) -> np.ndarray:
        out = np.zeros((self.num_samples, self.num_classes))
        out[np.arange(self.num_samples), self.labels] = 1.0
        return out

    def take(self, indices: Sequence[int]) -> 'RawDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return RawDataset(self.features[indices], self.labels[indices], self.num_classes)

    def with_bias(self) -> 'RawDataset':
        """Append a constant-1 feature column."""
        ones = np.ones((self.num_samples, 1))
        return RawDataset(np.hstack([self.features, ones]), self.labels, self.num_classes)

    def with_num_classes(self, num_classes: int) -> 'RawDataset':
        return RawDataset(self.features, self.labels, num_classes)


@dataclass
class FederatedDataset:
    """P agent shards plus the shared test set."""

    shards: List[AgentShard]
    test_set: Optional[RawDataset]
    num_features: int
    num_classes: int
    provenance: str
    writer_ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.shards:
            raise UsageError("a federation needs at least one shard")
        for shard in self.shards:
            if shard.num_features != self.num_features or shard.num_classes != self.num_classes:
                raise UsageError(f"shard {shard.agent_id} does not match dims ({self.num_features}, {self.num_classes})")
        if self.test_set is not None and self.test_set.num_features != self.num_features:
            raise UsageError("test set feature count differs from the training shards")

    @property
    def num_agents(self) -> int:
        return len(self.shards)

    @property
    def dims(self) -> Tuple[int, int]:
        return self.num_features, self.num_classes

    @property
    def total_samples(self) -> int:
        return sum(s.shard_size for s in self.shards)

    def shard_sizes(self) -> List[int]:
        return [s.shard_size for s in self.shards]


def train_subset(raw: RawDataset, n: int, seed: int) -> RawDataset:
    """First n samples after a seeded shuffle; n <= 0 or n >= N keeps everything."""
    if n <= 0 or n >= raw.num_samples:
        return raw
    perm = RngStream(seed, (TAG_PARTITION, 1)).generator().permutation(raw.num_samples)
    return raw.take(np.sort(perm[:n]))


def merge_datasets(datasets: Sequence[RawDataset], num_classes: int = 0) -> RawDataset:
    if not datasets:
        raise UsageError("nothing to merge")
    k = max([num_classes] + [d.num_classes for d in datasets])
    return RawDataset(np.vstack([d.features for d in datasets]),
                      np.concatenate([d.labels for d in datasets]), k)


def partition_iid(raw: RawDataset, num_agents: int, seed: int,
                  test_set: Optional[RawDataset] = None) -> FederatedDataset:
    """Seeded permutation, then a contiguous split whose sizes differ by at most one."""
    if num_agents < 1:
        raise UsageError(f"need at least one agent, got {num_agents}")
    if num_agents > raw.num_samples:
        raise UsageError(f"cannot split {raw.num_samples} samples over {num_agents} agents")
    if test_set is not None and test_set.num_classes != raw.num_classes:
        k = max(raw.num_classes, test_set.num_classes)
        raw, test_set = raw.with_num_classes(k), test_set.with_num_classes(k)
    perm = RngStream(seed, (TAG_PARTITION, 0)).generator().permutation(raw.num_samples)
    one_hot = raw.one_hot()
    shards = []
    for p, idx in enumerate(np.array_split(perm, num_agents)):
        shards.append(AgentShard(agent_id=p, features=raw.features[idx], labels=one_hot[idx], source_index=idx))
    logger.info("partitioned %d samples over %d agents (iid, seed=%d)", raw.num_samples, num_agents, seed)
    return FederatedDataset(shards=shards, test_set=test_set, num_features=raw.num_features,
                            num_classes=raw.num_classes, provenance="iid")


def partition_by_writer(per_writer: Mapping[str, RawDataset],
                        test_set: Optional[RawDataset] = None) -> FederatedDataset:
    """One agent per writer, in the mapping's order."""
    if not per_writer:
        raise UsageError("writer partition needs at least one writer")
    writers = list(per_writer)
    num_features = {per_writer[w].num_features for w in writers}
    if len(num_features) != 1:
        raise UsageError(f"writers disagree on the feature count: {sorted(num_features)}")
    k = max(d.num_classes for d in per_writer.values())
    if test_set is not None:
        k = max(k, test_set.num_classes)
        test_set = test_set.with_num_classes(k)
    shards = []
    for p, writer in enumerate(writers):
        data = per_writer[writer].with_num_classes(k)
        shards.append(AgentShard(agent_id=p, features=data.features, labels=data.one_hot()))
    logger.info("partitioned %d writers (%d samples) by writer",
                len(writers), sum(s.shard_size for s in shards))
    return FederatedDataset(shards=shards, test_set=test_set, num_features=num_features.pop(),
                            num_classes=k, provenance="by_writer", writer_ids=writers)


def _blob_centers(num_classes: int, num_features: int, seed: int) -> np.ndarray:
    return RngStream(seed, (TAG_SYNTHETIC, 0)).generator().uniform(0.0, 1.0, size=(num_classes, num_features))


def _blob_samples(centers: np.ndarray, labels: np.ndarray, spread: float, gen: np.random.Generator) -> np.ndarray:
    noise = gen.normal(0.0, spread, size=(labels.shape[0], centers.shape[1]))
    return np.clip(centers[labels] + noise, 0.0, 1.0)


def synthetic_blobs(num_classes: int = 3, num_features: int = 8, num_samples: int = 600,
                    seed: int = 0, spread: float = 0.15, stream: int = 1) -> RawDataset:
    """Gaussian blobs around seeded class centers, features clipped to [0, 1].

    Train and test sets drawn with the same seed and different `stream` share
    their class centers.
    """
    if num_classes < 2 or num_features < 1 or num_samples < num_classes:
        raise UsageError("synthetic data needs K >= 2, J >= 1 and at least one sample per class")
    centers = _blob_centers(num_classes, num_features, seed)
    gen = RngStream(seed, (TAG_SYNTHETIC, stream)).generator()
    labels = gen.permutation(np.arange(num_samples) % num_classes)
    return RawDataset(_blob_samples(centers, labels, spread, gen), labels, num_classes)


def synthetic_writers(num_writers: int, samples_per_writer: Sequence[int], num_classes: int = 3,
                      num_features: int = 8, seed: int = 0, concentration: float = 0.5,
                      spread: float = 0.15) -> Dict[str, RawDataset]:
    """Non-IID writer fixture: each writer draws labels from its own Dirichlet class mix."""
    if len(samples_per_writer) != num_writers:
        raise UsageError("samples_per_writer must list one count per writer")
    centers = _blob_centers(num_classes, num_features, seed)
    out = {}
    for i, count in enumerate(samples_per_writer):
        if count < 1:
            raise UsageError(f"writer {i} needs at least one sample")
        gen = RngStream(seed, (TAG_SYNTHETIC, 2, i)).generator()
        mix = gen.dirichlet(np.full(num_classes, concentration))
        labels = gen.choice(num_classes, size=count, p=mix)
        out[f"w{i:04d}"] = RawDataset(_blob_samples(centers, labels, spread, gen), labels, num_classes)
    return out

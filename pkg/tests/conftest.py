"""Pytest configuration and shared fixtures for the DP-IADMM test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to Python path
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

# Import our modules
from config import config
from analysis import make_toy_federation
from data import partition_iid, synthetic_blobs
from model import AgentShard, LogisticShardProblem, ModelConfig
from optimizer import EtaRegime

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def mnist_dir() -> Path:
    return Path(config.data_dir) / "mnist"


def has_mnist() -> bool:
    return all((mnist_dir() / name).is_file() for name in MNIST_FILES)


def random_shard(gen: np.random.Generator, agent_id: int = 0, n: int = 6, J: int = 4, K: int = 3) -> AgentShard:
    """Shard with features in [0, 1] and uniformly drawn classes."""
    features = gen.uniform(0.0, 1.0, size=(n, J))
    labels = np.eye(K)[gen.integers(0, K, size=n)]
    return AgentShard(agent_id=agent_id, features=features, labels=labels)


@pytest.fixture
def gen():
    """Seeded generator for test inputs."""
    return np.random.default_rng(20240607)


@pytest.fixture
def make_shard(gen):
    """Factory for random shards drawn from the shared generator."""
    def make(agent_id: int = 0, n: int = 6, J: int = 4, K: int = 3) -> AgentShard:
        return random_shard(gen, agent_id=agent_id, n=n, J=J, K=K)
    return make


@pytest.fixture
def tiny_shard(make_shard):
    return make_shard()


@pytest.fixture
def logistic_problems(gen):
    """Three small logistic agents sharing one ModelConfig."""
    shards = [random_shard(gen, agent_id=p, n=5 + p) for p in range(3)]
    cfg = ModelConfig.for_shards(shards, beta=1e-3)
    return [LogisticShardProblem(s, cfg) for s in shards]


@pytest.fixture
def synthetic_federation():
    """Four-agent federation over seeded Gaussian blobs, with a bias feature."""
    train = synthetic_blobs(3, 6, 240, seed=3, stream=1).with_bias()
    test = synthetic_blobs(3, 6, 120, seed=3, stream=2).with_bias()
    return partition_iid(train, 4, seed=0, test_set=test)


@pytest.fixture(params=[EtaRegime.SMOOTH, EtaRegime.NONSMOOTH, EtaRegime.STRONG], ids=lambda r: r.value)
def toy_federation(request):
    return make_toy_federation(request.param, seed=1)


@pytest.fixture
def synthetic_config_text():
    """Experiment config for a short synthetic run."""
    return "\n".join([
        "# short synthetic run",
        "dataset=synthetic",
        "synthetic_classes=3",
        "synthetic_features=5",
        "synthetic_samples=120",
        "synthetic_test_samples=60",
        "num_agents=3",
        "add_bias=true",
        "mode=ObjPM",
        "eps_bar=1",
        "E=10",
        "T=30",
        "seeds=0,1",
        "eval_every=10",
    ]) + "\n"


@pytest.fixture
def env_reset(monkeypatch):
    """Reload runtime settings after the test changes environment variables."""
    yield monkeypatch
    monkeypatch.undo()
    config.reload()


# Test markers for categorizing tests
def pytest_configure(config):
    """Configure custom pytest markers."""
    config.addinivalue_line("markers", "slow: Monte-Carlo checks and long runs")
    config.addinivalue_line("markers", "mnist: tests that need the MNIST IDX files")


# Custom test collection - MNIST tests only run when the files are present
def pytest_collection_modifyitems(config, items):
    """Skip MNIST-marked tests when the dataset is not under DPIADMM_DATA_DIR."""
    if has_mnist():
        return
    skip = pytest.mark.skip(reason=f"MNIST IDX files not found under {mnist_dir()}")
    for item in items:
        if "mnist" in item.keywords:
            item.add_marker(skip)


# Helpful output
def pytest_sessionstart(session):
    """Print helpful information at test session start."""
    print("\n" + "=" * 60)
    print("🧪 DP-IADMM TEST SUITE")
    print("=" * 60)
    if has_mnist():
        print(f"📂 MNIST found under {mnist_dir()}")
    else:
        print(f"⚠️  No MNIST under {mnist_dir()} - mnist tests will be skipped")
        print("💡 Set DPIADMM_DATA_DIR to a directory holding mnist/<idx files>")
    print("=" * 60)

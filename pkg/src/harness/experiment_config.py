# src/harness/experiment_config.py - Experiment config files (flat key=value)
#
# Files are read with python-dotenv's parser so every binding keeps its line
# number for error messages. '#' starts a comment.

import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from dotenv.parser import parse_stream

from errors import ConfigError, UsageError
from optimizer import EtaRegime, Mechanism

DATASETS = ("mnist", "femnist", "synthetic")
MODES = ("ObjP", "ObjPM", "OutP", "NonPrivate")
# Local updates each mode implies unless allow_E_override is set.
MODE_E = {"ObjP": 1, "ObjPM": 10, "OutP": 1}


def _parse_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true or false, got '{text}'")


def _parse_seeds(text: str) -> List[int]:
    seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    if not seeds:
        raise ValueError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    return seeds


def _optional(parser: Callable[[str], object], sentinel: str = "") -> Callable[[str], object]:
    def parse(text: str):
        return None if text.strip().lower() in (sentinel, "") else parser(text)
    return parse


@dataclass
class ExperimentConfig:
    """One experiment: dataset, mechanism, schedules and run control."""

    dataset: str = ""
    mode: str = ""
    # Dataset
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    femnist_train: str = ""
    femnist_test: str = ""
    train_subset: int = 0
    num_agents: int = 10
    partition_seed: int = 0
    synthetic_classes: int = 3
    synthetic_features: int = 8
    synthetic_samples: int = 600
    synthetic_test_samples: int = 300
    # Privacy and iterations
    eps_bar: Optional[float] = None
    delta_bar: float = 1e-6
    E: Optional[int] = None
    allow_E_override: bool = False
    T: int = 20000
    # Schedules
    rho_c1: float = 2.0
    rho_c2: float = 5.0
    rho_Tc: int = 10000
    rho_scale: float = 1.0
    rho_static: Optional[float] = None
    eta_regime: str = "nonsmooth"
    eta_L: float = 0.0
    eta_alpha: float = 1.0
    beta: float = 1e-6
    box_bound: float = 100.0
    add_bias: bool = False
    # Output-perturbation baseline
    outp_sigma0: Optional[float] = None
    outp_decay: float = 0.5
    outp_l2_scale: float = 1.0
    # Execution
    seeds: List[int] = field(default_factory=lambda: [0])
    eval_every: int = 100
    threads: Optional[int] = None
    # Where the file came from and which line set each key.
    source: str = field(default="", repr=False)
    lines: Dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode in MODES:
            if self.eps_bar is None:
                self.eps_bar = math.inf if self.mode == "NonPrivate" else 1.0
            if self.E is None:
                self.E = MODE_E.get(self.mode, 1)

    @property
    def mechanism(self) -> Mechanism:
        if self.mode in ("ObjP", "ObjPM"):
            return Mechanism.OBJP
        return Mechanism(self.mode)

    def problems(self) -> List[Tuple[str, str]]:
        """Violated invariants as (key, message) pairs."""
        found = []
        if self.dataset not in DATASETS:
            found.append(("dataset", f"dataset must be one of {', '.join(DATASETS)}"))
        if self.mode not in MODES:
            found.append(("mode", f"mode must be one of {', '.join(MODES)}"))
            return found
        if self.dataset == "mnist":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                if not getattr(self, key):
                    found.append((key, f"{key} is required for the mnist dataset"))
        if self.dataset == "femnist":
            for key in ("femnist_train", "femnist_test"):
                if not getattr(self, key):
                    found.append((key, f"{key} is required for the femnist dataset"))
        if not self.eps_bar > 0:
            found.append(("eps_bar", "eps_bar must be positive or inf"))
        if not 0 < self.delta_bar < 1:
            found.append(("delta_bar", "delta_bar must lie in (0, 1)"))
        if self.E < 1:
            found.append(("E", "E must be at least 1"))
        elif self.mode == "OutP" and self.E != 1:
            found.append(("E", "OutP performs a single local update; E must be 1"))
        elif self.mode in MODE_E and self.E != MODE_E[self.mode] and not self.allow_E_override:
            found.append(("E", f"mode {self.mode} implies E={MODE_E[self.mode]}; "
                               f"set allow_E_override=true to use E={self.E}"))
        if self.T < 0:
            found.append(("T", "T must be >= 0"))
        if self.eval_every < 1:
            found.append(("eval_every", "eval_every must be >= 1"))
        if self.num_agents < 1:
            found.append(("num_agents", "num_agents must be >= 1"))
        if self.rho_Tc < 1:
            found.append(("rho_Tc", "rho_Tc must be >= 1"))
        if not self.rho_scale > 0:
            found.append(("rho_scale", "rho_scale must be positive"))
        if self.rho_static is not None and not self.rho_static > 0:
            found.append(("rho_static", "rho_static must be positive"))
        if self.eta_regime not in {r.value for r in EtaRegime}:
            found.append(("eta_regime", "eta_regime must be smooth, nonsmooth or strong"))
        if self.eta_L < 0:
            found.append(("eta_L", "eta_L must be >= 0"))
        if not self.eta_alpha > 0:
            found.append(("eta_alpha", "eta_alpha must be positive"))
        if self.beta < 0:
            found.append(("beta", "beta must be >= 0"))
        if not self.box_bound > 0:
            found.append(("box_bound", "box_bound must be positive or inf"))
        if self.outp_sigma0 is not None and self.outp_sigma0 < 0:
            found.append(("outp_sigma0", "outp_sigma0 must be >= 0"))
        if self.outp_decay < 0:
            found.append(("outp_decay", "outp_decay must be >= 0"))
        if self.threads is not None and self.threads < 1:
            found.append(("threads", "threads must be >= 1"))
        return found

    def validate(self) -> List[str]:
        """Validate and return list of errors."""
        return [message for _, message in self.problems()]

    def resolve_path(self, value: str, data_dir: Union[str, Path]) -> Path:
        """Relative dataset paths are looked up under the data directory."""
        path = Path(value).expanduser()
        return path if path.is_absolute() else Path(data_dir) / path

    def to_text(self) -> str:
        """Every key with its resolved value, in declaration order."""
        lines = [f"# resolved from {self.source or '<memory>'}"]
        for key in CONFIG_KEYS:
            lines.append(f"{key}={_format_value(getattr(self, key), key)}")
        return "\n".join(lines) + "\n"


def _format_value(value, key: str) -> str:
    if value is None:
        return "auto" if key == "outp_sigma0" else ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS: Dict[str, Callable[[str], object]] = {
    "dataset": str.strip, "mode": str.strip,
    "train_images": str.strip, "train_labels": str.strip,
    "test_images": str.strip, "test_labels": str.strip,
    "femnist_train": str.strip, "femnist_test": str.strip,
    "train_subset": int, "num_agents": int, "partition_seed": int,
    "synthetic_classes": int, "synthetic_features": int,
    "synthetic_samples": int, "synthetic_test_samples": int,
    "eps_bar": _parse_float, "delta_bar": _parse_float,
    "E": int, "allow_E_override": _parse_bool, "T": int,
    "rho_c1": _parse_float, "rho_c2": _parse_float, "rho_Tc": int,
    "rho_scale": _parse_float, "rho_static": _optional(_parse_float),
    "eta_regime": str.strip, "eta_L": _parse_float, "eta_alpha": _parse_float,
    "beta": _parse_float, "box_bound": _parse_float, "add_bias": _parse_bool,
    "outp_sigma0": _optional(_parse_float, "auto"), "outp_decay": _parse_float,
    "outp_l2_scale": _parse_float,
    "seeds": _parse_seeds, "eval_every": int, "threads": _optional(int),
}

CONFIG_KEYS = [f.name for f in fields(ExperimentConfig) if f.name in _PARSERS]


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    values: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    for binding in parse_stream(io.StringIO(text)):
        line = binding.original.line
        if binding.error:
            raise ConfigError(f"{source}: cannot parse '{binding.original.string.strip()}'", line=line)
        if binding.key is None:
            continue
        key = binding.key
        if key not in _PARSERS:
            raise ConfigError(f"{source}: unknown key", key=key, line=line)
        if key in values:
            raise ConfigError(f"{source}: duplicate key, first set on line {lines[key]}", key=key, line=line)
        if binding.value is None:
            raise ConfigError(f"{source}: missing value", key=key, line=line)
        try:
            values[key] = _PARSERS[key](binding.value)
        except ValueError as e:
            raise ConfigError(f"{source}: invalid value '{binding.value}': {e}", key=key, line=line) from e
        lines[key] = line

    for required in ("dataset", "mode"):
        if required not in values:
            raise ConfigError(f"{source}: missing required key", key=required)
    cfg = ExperimentConfig(**values, source=source, lines=lines)
    problems = cfg.problems()
    if problems:
        key, message = problems[0]
        raise ConfigError(f"{source}: {message}", key=key, line=lines.get(key))
    return cfg


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))

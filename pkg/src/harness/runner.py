# src/harness/runner.py - Experiment execution, aggregation and check drivers

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd

from analysis import GapCheckResult, expectation_gap_check, make_toy_federation, write_bound_report
from config import config
from data import (
    FederatedDataset,
    load_femnist_json,
    load_idx,
    merge_datasets,
    partition_by_writer,
    partition_iid,
    synthetic_blobs,
    train_subset,
)
from errors import DPIADMMError, UsageError
from mechanisms import laplace_ratio_audit
from model import LogisticShardProblem, ModelConfig
from optimizer import (
    BoxConstraint,
    EtaRegime,
    RhoSchedule,
    Schedules,
    TrainingSettings,
    run_training,
)
from .experiment_config import ExperimentConfig, parse_config
from .metrics import MetricsRecorder, RunMetrics

logger = logging.getLogger(__name__)

RUN_FILE = re.compile(r"^run_seed(\d+)\.csv$")
RESOLVED_CONFIG = "resolved_config.txt"
AGGREGATE_FILE = "aggregate.csv"
SUMMARY_FILE = "summary.csv"
SUMMARY_COLUMNS = ["mode", "eps_bar", "E", "seeds", "best_final_test_error",
                   "best_overall_test_error", "mean_final_test_error"]
AUDIT_COLUMNS = ["eps_bar", "shift_ratio", "max_log_ratio", "bound", "pass", "inconclusive"]
AUDIT_SAMPLES = 10_000_000


def load_federated_dataset(cfg: ExperimentConfig, data_dir: Union[str, Path, None] = None) -> FederatedDataset:
    """Load, subset and partition the training data named by the config."""
    data_dir = config.data_dir if data_dir is None else data_dir
    if cfg.dataset == "mnist":
        train = load_idx(cfg.resolve_path(cfg.train_images, data_dir),
                         cfg.resolve_path(cfg.train_labels, data_dir), num_classes=10)
        test = load_idx(cfg.resolve_path(cfg.test_images, data_dir),
                        cfg.resolve_path(cfg.test_labels, data_dir), num_classes=10)
    elif cfg.dataset == "femnist":
        writers = load_femnist_json(cfg.resolve_path(cfg.femnist_train, data_dir))
        test_writers = load_femnist_json(cfg.resolve_path(cfg.femnist_test, data_dir))
        if not writers or not test_writers:
            raise UsageError("femnist files hold no writers")
        test = merge_datasets(list(test_writers.values()))
        if cfg.add_bias:
            writers = {w: d.with_bias() for w, d in writers.items()}
            test = test.with_bias()
        return partition_by_writer(writers, test_set=test)
    else:
        train = synthetic_blobs(cfg.synthetic_classes, cfg.synthetic_features, cfg.synthetic_samples,
                                seed=cfg.partition_seed, stream=1)
        test = synthetic_blobs(cfg.synthetic_classes, cfg.synthetic_features, cfg.synthetic_test_samples,
                               seed=cfg.partition_seed, stream=2)
    train = train_subset(train, cfg.train_subset, cfg.partition_seed)
    if cfg.add_bias:
        train, test = train.with_bias(), test.with_bias()
    return partition_iid(train, cfg.num_agents, cfg.partition_seed, test_set=test)


def build_problems(federation: FederatedDataset, beta: float) -> List[LogisticShardProblem]:
    model_cfg = ModelConfig.for_shards(federation.shards, beta)
    return [LogisticShardProblem(shard, model_cfg) for shard in federation.shards]


def training_settings(cfg: ExperimentConfig, seed: int, threads: int) -> TrainingSettings:
    schedules = Schedules(
        rho=RhoSchedule(c1=cfg.rho_c1, c2=cfg.rho_c2, Tc=cfg.rho_Tc, scale=cfg.rho_scale, static=cfg.rho_static),
        eta_regime=EtaRegime(cfg.eta_regime), L=cfg.eta_L, alpha=cfg.eta_alpha,
        eps_bar=cfg.eps_bar, E=cfg.E, T=cfg.T)
    return TrainingSettings(schedules=schedules, mechanism=cfg.mechanism, box=BoxConstraint(cfg.box_bound),
                            seed=seed, threads=threads, delta_bar=cfg.delta_bar,
                            outp_sigma0=cfg.outp_sigma0, outp_decay=cfg.outp_decay,
                            outp_l2_scale=cfg.outp_l2_scale)


def _with_context(error: DPIADMMError, context: str) -> DPIADMMError:
    error.args = (f"{context}: {error}",) + error.args[1:]
    return error


def run_single(cfg: ExperimentConfig, federation: FederatedDataset, seed: int,
               threads: Optional[int] = None) -> RunMetrics:
    """Train once with the given seed and return the recorded metric rows."""
    if threads is None:
        threads = cfg.threads or config.threads or 1
    problems = build_problems(federation, cfg.beta)
    settings = training_settings(cfg, seed, threads)
    recorder = MetricsRecorder(problems, federation.test_set, T=cfg.T, E=cfg.E, eps_bar=cfg.eps_bar,
                               mechanism=cfg.mechanism, eval_every=cfg.eval_every, seed=seed)
    try:
        run_training(problems, settings, observers=[recorder])
    except DPIADMMError as e:
        raise _with_context(e, f"{cfg.source or cfg.mode} seed {seed}") from e
    return recorder.metrics


@dataclass
class ExperimentResult:
    output_dir: Path
    run_files: List[Path] = field(default_factory=list)
    aggregate_file: Optional[Path] = None
    summary_file: Optional[Path] = None
    runs: List[RunMetrics] = field(default_factory=list)


def default_output_dir(cfg: ExperimentConfig) -> Path:
    name = Path(cfg.source).stem if cfg.source else f"{cfg.dataset}_{cfg.mode}"
    return Path(config.output_dir) / name


def run_experiment(cfg: Union[ExperimentConfig, str, Path], output_dir: Union[str, Path, None] = None,
                   threads: Optional[int] = None, data_dir: Union[str, Path, None] = None) -> ExperimentResult:
    """Run every seed, write one CSV per seed, then the aggregate and summary files."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = parse_config(cfg)
    errors = cfg.validate()
    if errors:
        raise UsageError(f"invalid experiment config: {errors[0]}")
    out = Path(output_dir) if output_dir is not None else default_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(cfg.to_text(), encoding="utf-8")

    federation = load_federated_dataset(cfg, data_dir)
    logger.info("experiment %s: mode=%s eps=%r E=%d T=%d P=%d seeds=%s",
                cfg.source or "<memory>", cfg.mode, cfg.eps_bar, cfg.E, cfg.T,
                federation.num_agents, cfg.seeds)
    result = ExperimentResult(output_dir=out)
    for seed in cfg.seeds:
        metrics = run_single(cfg, federation, seed, threads)
        result.runs.append(metrics)
        result.run_files.append(metrics.write_csv(out / f"run_seed{seed}.csv"))
        logger.info("seed %d finished: final test error %.4f", seed, metrics.final_test_error)
    result.aggregate_file, result.summary_file = aggregate_runs(out)
    return result


def _read_runs(directory: Path) -> pd.DataFrame:
    frames = []
    for path in sorted(directory.iterdir()):
        match = RUN_FILE.match(path.name)
        if match:
            frame = pd.read_csv(path)
            frame["seed"] = int(match.group(1))
            frames.append(frame)
    if not frames:
        raise UsageError(f"no run_seed*.csv files in {directory}")
    return pd.concat(frames, ignore_index=True)


def _p20(series: pd.Series) -> float:
    return series.quantile(0.2)


def _p80(series: pd.Series) -> float:
    return series.quantile(0.8)


def aggregate_runs(directory: Union[str, Path]):
    """Per-t mean and 20th/80th percentiles across seeds, plus the best-error summary."""
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"not a directory: {directory}")
    runs = _read_runs(directory)

    aggregate = runs.groupby("t", sort=True).agg(
        test_error_mean=("test_error", "mean"),
        test_error_p20=("test_error", _p20),
        test_error_p80=("test_error", _p80),
        avg_noise_magnitude_mean=("avg_noise_magnitude", "mean"),
        avg_noise_magnitude_p20=("avg_noise_magnitude", _p20),
        avg_noise_magnitude_p80=("avg_noise_magnitude", _p80),
        consensus_residual_mean=("consensus_residual", "mean"),
        global_objective_mean=("global_objective", "mean"),
        cumulative_epsilon=("cumulative_epsilon", "first"),
    ).reset_index()
    aggregate_file = directory / AGGREGATE_FILE
    aggregate.to_csv(aggregate_file, index=False)

    finals = runs.sort_values("t").groupby("seed").tail(1)
    mode, eps_bar, E = "", math.nan, 0
    resolved = directory / RESOLVED_CONFIG
    if resolved.is_file():
        cfg = parse_config(resolved)
        mode, eps_bar, E = cfg.mode, cfg.eps_bar, cfg.E
    summary = pd.DataFrame([{
        "mode": mode,
        "eps_bar": eps_bar,
        "E": E,
        "seeds": runs["seed"].nunique(),
        "best_final_test_error": finals["test_error"].min(),
        "best_overall_test_error": runs["test_error"].min(),
        "mean_final_test_error": finals["test_error"].mean(),
    }], columns=SUMMARY_COLUMNS)
    summary_file = directory / SUMMARY_FILE
    summary.to_csv(summary_file, index=False)
    logger.info("aggregated %d seeds in %s", summary.loc[0, "seeds"], directory)
    return aggregate_file, summary_file


def check_bounds(regimes: Sequence[str] = ("smooth", "nonsmooth", "strong"),
                 eps_values: Sequence[float] = (1.0, math.inf), runs: int = 50, T: int = 1000,
                 E: int = 1, seed: int = 0, out: Union[str, Path, None] = None,
                 threads: int = 1) -> List[GapCheckResult]:
    """Expected-gap bound checks on the toy federation of each regime."""
    results = []
    for regime in regimes:
        federation = make_toy_federation(EtaRegime(regime), seed=seed)
        for eps_bar in eps_values:
            results.append(expectation_gap_check(federation, runs=runs, T=T, E=E, eps_bar=eps_bar,
                                                 seed=seed, threads=threads))
    if out is not None:
        write_bound_report(results, out)
    return results


def audit_failures(frame: pd.DataFrame) -> int:
    """Number of audit cells that failed conclusively; inconclusive cells do not count."""
    return int((~frame["pass"] & ~frame["inconclusive"]).sum())


def audit_dp(eps_values: Sequence[float] = (0.5, 1.0, 2.0), shift_ratios: Sequence[float] = (0.0, 0.5, 1.0),
             samples: int = AUDIT_SAMPLES, seed: int = 0, sensitivity: float = 1.0, slack: float = 0.1,
             out: Union[str, Path, None] = None) -> pd.DataFrame:
    """Histogram likelihood-ratio audit of the Laplace mechanism over an (eps, shift) grid."""
    rows = []
    for i, eps_bar in enumerate(eps_values):
        for j, ratio in enumerate(shift_ratios):
            audit = laplace_ratio_audit(sensitivity / eps_bar, ratio * sensitivity, samples,
                                        seed=seed + 1000 * i + j)
            bound = eps_bar * ratio
            rows.append({"eps_bar": eps_bar, "shift_ratio": ratio, "max_log_ratio": audit.max_log_ratio,
                         "bound": bound, "pass": audit.passes(bound, slack),
                         "inconclusive": audit.inconclusive})
    frame = pd.DataFrame(rows, columns=AUDIT_COLUMNS)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
    return frame

"""Experiment orchestration: subset study, baseline comparison, timing report.

Every experiment is reproducible from (config, seed): corpora, subsets, and
training all derive their randomness from the config's root seed, and all
emitted files carry the config hash.  Outputs are CSV plus a plain-text
rendering; field dumps use the flat flux CSV format for external plotting.
"""

from __future__ import annotations

import os
import platform
from dataclasses import dataclass, field

import numpy as np

from .container import atomic_write_bytes
from .config import ExperimentConfig
from .dataset import (
    Corpus,
    CorpusView,
    Dataset,
    SplitCorpus,
    assemble_operator_samples,
    fit_normalization,
    generate_corpus,
    split_functions,
    split_to_dataset,
    subsample_points,
)
from .errors import TrainingError
from .metrics import aggregate_metric
from .models import (
    DeepONetModel,
    TrainConfig,
    evaluate_on_function,
    inference_timing,
    save_checkpoint,
    train_cnn,
    train_deeponet,
    train_fcn,
)
from .rng import child_seed, substream
from .source import sample_source_spec
from .transport import save_flux_csv, timing_probe


@dataclass
class ExperimentData:
    """Generated corpus plus split and normalization, ready for training."""

    config: ExperimentConfig
    corpus: Corpus
    split: SplitCorpus
    norm: object

    def dataset(self) -> Dataset:
        return split_to_dataset(self.corpus, self.split, self.norm)


def prepare_experiment(config: ExperimentConfig, corpus: Corpus | None = None) -> ExperimentData:
    """Generate (or adopt) the corpus and derive split + normalization."""
    if corpus is None:
        corpus = generate_corpus(
            n=config.corpus_n,
            seed=config.stage_seed("corpus"),
            geometry=config.geometry(),
            materials=config.materials,
            sensor_grid=config.sensor_grid,
            tally_grid=config.tally_grid,
            plan=config.plan,
            ranges=config.source_ranges,
            config_hash=config.config_hash(),
        )
    split = split_functions(corpus, config.stage_seed("split"))
    norm = fit_normalization(split.train)
    return ExperimentData(config=config, corpus=corpus, split=split, norm=norm)


def train_set_model(data: ExperimentData, fraction: float):
    """Train one operator model on the given keep-fraction of tally points."""
    config = data.config
    subset = subsample_points(data.split.train, fraction, config.stage_seed("subset"))
    label = f"set{int(round(fraction * 100))}"
    train_cfg = TrainConfig(
        iterations=config.train.iterations, lr=config.train.lr,
        batch_functions=config.train.batch_functions,
        points_per_function=config.train.points_per_function,
        log_every=config.train.log_every,
        seed=child_seed(config.train.seed, label),
    )
    model, log = train_deeponet(data.split.train, data.norm, train_cfg, subset=subset,
                                hidden=config.hidden, features=config.features,
                                trunk_hidden=config.trunk_hidden)
    return model, log


def evaluate_model(model, view: CorpusView, grid):
    """Per-function metric reports over a corpus view."""
    return [evaluate_on_function(model, entry, grid)[0] for entry in view]


# ----------------------------------------------------------------------
# Subset-size study (one row per keep-fraction)
# ----------------------------------------------------------------------

@dataclass
class BenchmarkRow:
    label: str
    fraction: float
    stats: dict   # metric name -> (mean, std) over test functions


@dataclass
class BenchmarkTable:
    rows: list
    config_hash: str
    seed: int

    def to_csv_text(self) -> str:
        lines = [f"# config_hash={self.config_hash} seed={self.seed}",
                 "set,fraction,r2_mean,r2_std,rmse_mean,rmse_std,mae_mean,mae_std,"
                 "ratio_mean,ratio_std"]
        for row in self.rows:
            cells = [row.label, repr(row.fraction)]
            for name in ("r2", "rmse", "mae", "rmse_mae_ratio"):
                mean, std = row.stats[name]
                cells += [repr(mean), repr(std)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = ["Operator-model performance by training-point fraction",
                 f"config {self.config_hash}, seed {self.seed}",
                 "(mean +/- std over test functions; std over functions, not retrainings)",
                 ""]
        header = f"{'set':<8}{'R2':>18}{'RMSE':>20}{'MAE':>20}{'RMSE/MAE':>18}"
        lines.append(header)
        for row in self.rows:
            cells = [f"{row.label:<8}"]
            for name in ("r2", "rmse", "mae", "rmse_mae_ratio"):
                mean, std = row.stats[name]
                cells.append(f"{mean:>10.4f} +- {std:<6.4f}")
            lines.append("".join(cells))
        return "\n".join(lines) + "\n"


def _aggregate_rows(label, fraction, reports) -> BenchmarkRow:
    stats = {name: aggregate_metric(reports, name)
             for name in ("r2", "rmse", "mae", "rmse_mae_ratio")}
    return BenchmarkRow(label=label, fraction=fraction, stats=stats)


def run_table1_experiment(config: ExperimentConfig, out_dir=None,
                          data: ExperimentData | None = None):
    """Train one operator model per subset fraction and tabulate test metrics.

    Returns (BenchmarkTable, dict label -> trained model).  Writes
    subset_study.csv/.txt and per-set checkpoints when out_dir is given.
    """
    data = data or prepare_experiment(config)
    grid = config.tally_grid
    rows, models = [], {}
    for fraction in config.subsets:
        label = f"set{int(round(fraction * 100))}"
        try:
            model, log = train_set_model(data, fraction)
        except TrainingError as exc:
            raise TrainingError(f"{label}: {exc}", iteration=exc.iteration) from exc
        reports = evaluate_model(model, data.split.test, grid)
        rows.append(_aggregate_rows(label, fraction, reports))
        models[label] = model
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, f"deeponet_{label}.mzck"), model,
                            extra={"config_hash": config.config_hash(),
                                   "seed": config.seed, "fraction": fraction})
            _write_training_log(os.path.join(out_dir, f"train_log_{label}.csv"),
                                log, config)
    table = BenchmarkTable(rows=rows, config_hash=config.config_hash(), seed=config.seed)
    if out_dir is not None:
        atomic_write_bytes(os.path.join(out_dir, "subset_study.csv"),
                           table.to_csv_text().encode())
        atomic_write_bytes(os.path.join(out_dir, "subset_study.txt"),
                           table.to_text().encode())
    return table, models


def _write_training_log(path, log, config: ExperimentConfig) -> None:
    lines = [f"# config_hash={config.config_hash()} seed={config.seed}",
             "iteration,mse,mean_l2_relative_error"]
    lines += [f"{it},{mse!r},{rel!r}" for it, mse, rel in log]
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


# ----------------------------------------------------------------------
# Baseline comparison on the best- and worst-predicted test functions
# ----------------------------------------------------------------------

@dataclass
class ComparisonCase:
    rank_label: str        # "best" or "worst"
    spec_id: str
    reports: dict          # model name -> MetricsReport


@dataclass
class ComparisonTable:
    cases: list
    config_hash: str
    seed: int

    def to_csv_text(self) -> str:
        lines = [f"# config_hash={self.config_hash} seed={self.seed}",
                 "case,spec_id,model,r2,rmse,mae,rmse_mae_ratio"]
        for case in self.cases:
            for name, rep in case.reports.items():
                ratio = repr(rep.rmse_mae_ratio) if rep.rmse_mae_ratio is not None else ""
                lines.append(f"{case.rank_label},{case.spec_id},{name},"
                             f"{rep.r2!r},{rep.rmse!r},{rep.mae!r},{ratio}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = ["Operator model vs pointwise baselines on extreme test cases",
                 f"config {self.config_hash}, seed {self.seed}", ""]
        for case in self.cases:
            lines.append(f"{case.rank_label} test function ({case.spec_id}):")
            for name, rep in case.reports.items():
                ratio = f"{rep.rmse_mae_ratio:.3f}" if rep.rmse_mae_ratio is not None else "n/a"
                lines.append(f"  {name:<10} R2 {rep.r2:8.4f}  RMSE {rep.rmse:10.4f}  "
                             f"MAE {rep.mae:10.4f}  RMSE/MAE {ratio}")
            lines.append("")
        return "\n".join(lines) + "\n"


def train_baselines(data: ExperimentData, fraction: float):
    """Train the two conventional baselines on the training split.

    Both see the same subsampled training points as the operator model, but
    in the traditional feature-target format: the dense net regresses
    coordinates alone (so it can only learn the ensemble-average field) and
    the convolutional net gets the sensor vector as a flat feature alongside
    the coordinates.
    """
    config = data.config
    subset = subsample_points(data.split.train, fraction, config.stage_seed("subset"))
    samples = list(assemble_operator_samples(data.split.train, data.norm, subset))
    fcn_cfg = TrainConfig(
        iterations=config.baseline_train.iterations, lr=config.baseline_train.lr,
        batch_functions=config.baseline_train.batch_functions,
        points_per_function=config.baseline_train.points_per_function,
        log_every=config.baseline_train.log_every,
        seed=child_seed(config.baseline_train.seed, "fcn"))
    cnn_cfg = TrainConfig(
        iterations=config.baseline_train.iterations, lr=config.baseline_train.lr,
        batch_functions=config.baseline_train.batch_functions,
        points_per_function=config.baseline_train.points_per_function,
        log_every=config.baseline_train.log_every,
        seed=child_seed(config.baseline_train.seed, "cnn"))
    fcn = train_fcn(samples, data.norm, fcn_cfg, pooled=True)
    cnn = train_cnn(samples, data.norm, cnn_cfg)
    return fcn, cnn


def run_table2_experiment(config: ExperimentConfig, out_dir=None,
                          data: ExperimentData | None = None,
                          set_model: DeepONetModel | None = None):
    """Rank test functions by operator-model R^2, then pit the baselines
    against it on the best and worst cases.

    All three models train on the same subsampled training split and are
    evaluated on full grids of the selected (unseen) test functions.
    Returns (ComparisonTable, details dict).
    """
    data = data or prepare_experiment(config)
    grid = config.tally_grid
    first_fraction = config.subsets[0]
    if set_model is None:
        set_model, _ = train_set_model(data, first_fraction)
    fcn, cnn = train_baselines(data, first_fraction)

    reports = evaluate_model(set_model, data.split.test, grid)
    r2s = np.array([r.r2 for r in reports])
    best_k = int(np.argmax(r2s))
    worst_k = int(np.argmin(r2s))

    cases = []
    details = {"ranking_r2": r2s, "models": {"fcn": fcn, "cnn": cnn,
                                             "deeponet": set_model}}
    for rank_label, k in (("best", best_k), ("worst", worst_k)):
        entry = data.split.test.entry(k)
        case_reports = {}
        for name, model in (("deeponet", set_model), ("fcn", fcn), ("cnn", cnn)):
            rep, pred_field = evaluate_on_function(model, entry, grid)
            case_reports[name] = rep
            if out_dir is not None:
                save_flux_csv(pred_field, grid,
                              os.path.join(out_dir, f"field_{rank_label}_{name}.csv"),
                              seed=config.seed)
        if out_dir is not None:
            save_flux_csv(entry.flux, grid,
                          os.path.join(out_dir, f"field_{rank_label}_truth.csv"),
                          seed=config.seed)
        cases.append(ComparisonCase(rank_label=rank_label, spec_id=entry.spec_id,
                                    reports=case_reports))

    table = ComparisonTable(cases=cases, config_hash=config.config_hash(),
                            seed=config.seed)
    if out_dir is not None:
        atomic_write_bytes(os.path.join(out_dir, "comparison.csv"),
                           table.to_csv_text().encode())
        atomic_write_bytes(os.path.join(out_dir, "comparison.txt"),
                           table.to_text().encode())
    return table, details


# ----------------------------------------------------------------------
# Timing
# ----------------------------------------------------------------------

@dataclass
class TimingReport:
    simulation_seconds: float
    inference_seconds: float
    ratio: float
    machine: str
    config_hash: str
    seed: int

    def to_text(self) -> str:
        return (
            "Simulation vs surrogate inference timing\n"
            f"config {self.config_hash}, seed {self.seed}\n"
            f"machine: {self.machine}\n"
            f"one simulation:          {self.simulation_seconds:.4f} s\n"
            f"one full-field inference: {self.inference_seconds:.6f} s\n"
            f"speed ratio:             {self.ratio:.1f}x\n"
        )


def run_timing_report(config: ExperimentConfig, model, out_dir=None) -> TimingReport:
    """Measure one simulation and mean inference time on this machine."""
    spec = sample_source_spec(substream(config.stage_seed("timing"), "spec"),
                              config.source_ranges)
    sim_seconds = timing_probe(config.plan, config.geometry(), config.materials,
                               spec, config.tally_grid)
    infer_seconds = inference_timing(model, config.n_inference, config.tally_grid,
                                     rng=substream(config.stage_seed("timing"), "infer"))
    ratio = sim_seconds / infer_seconds if infer_seconds > 0 else float("inf")
    report = TimingReport(simulation_seconds=sim_seconds,
                          inference_seconds=infer_seconds, ratio=ratio,
                          machine=f"{platform.machine()} / {platform.processor() or 'unknown cpu'}",
                          config_hash=config.config_hash(), seed=config.seed)
    if out_dir is not None:
        atomic_write_bytes(os.path.join(out_dir, "timing.txt"), report.to_text().encode())
    return report

"""Command-line interface.

Every subcommand reads the JSON experiment config and writes its outputs
atomically under the --out directory.  Distinct exit codes separate usage
errors, malformed configs, missing inputs, and runtime failures so scripted
pipelines can react to each.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import bench
from .config import ExperimentConfig, desk_config_dict, load_config, save_config
from .dataset import (
    Dataset,
    SplitCorpus,
    fit_normalization,
    generate_corpus,
    read_dataset,
    split_functions,
    split_to_dataset,
    write_dataset,
)
from .errors import ConfigurationError, DatasetError, MazefluxError
from .metrics import aggregate_metric
from .models import load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4

GRADCHECK_TOLERANCE = 1e-4

CORPUS_FILE = "corpus.mzds"
DATASET_FILE = "dataset.mzds"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mazeflux",
        description="Monte Carlo maze transport and operator-learning surrogate benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=(name != "init-config"),
                       help="path to the JSON experiment config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        return p

    add("generate", "sample sources and simulate the corpus")
    add("split", "split the corpus 8:2 and fit normalization")
    p = add("train", "train one operator model on a subset fraction")
    p.add_argument("--fraction", type=float, default=None,
                   help="keep-fraction (default: first entry of config subsets)")
    p = add("evaluate", "evaluate a trained checkpoint on the test split")
    p.add_argument("--fraction", type=float, default=None)
    add("table1", "full subset-size study with per-set models")
    add("table2", "baseline comparison on best/worst test functions")
    add("timing", "simulation vs inference timing report")
    p = add("gradcheck", "finite-difference check of all model gradients")
    p.add_argument("--probes", type=int, default=200)
    p = sub.add_parser("init-config", help="write the default desk-scale config")
    p.add_argument("--out", default="desk.json", help="where to write the config")
    p.add_argument("--seed", type=int, default=1001)
    return parser


def _dataset_path(args) -> str:
    return os.path.join(args.out, DATASET_FILE)


def _fraction_label(fraction: float) -> str:
    return f"set{int(round(fraction * 100))}"


def _cmd_generate(config: ExperimentConfig, args) -> int:
    corpus = generate_corpus(
        n=config.corpus_n, seed=config.stage_seed("corpus"),
        geometry=config.geometry(), materials=config.materials,
        sensor_grid=config.sensor_grid, tally_grid=config.tally_grid,
        plan=config.plan, ranges=config.source_ranges,
        config_hash=config.config_hash())
    write_dataset(Dataset(corpus=corpus), os.path.join(args.out, CORPUS_FILE))
    print(f"wrote {os.path.join(args.out, CORPUS_FILE)} ({len(corpus)} functions)")
    return EXIT_OK


def _cmd_split(config: ExperimentConfig, args) -> int:
    corpus = read_dataset(os.path.join(args.out, CORPUS_FILE)).corpus
    split = split_functions(corpus, config.stage_seed("split"))
    norm = fit_normalization(split.train)
    write_dataset(split_to_dataset(corpus, split, norm), _dataset_path(args))
    print(f"wrote {_dataset_path(args)} "
          f"({len(split.train)} train / {len(split.test)} test)")
    return EXIT_OK


def _load_split_dataset(args):
    dataset = read_dataset(_dataset_path(args))
    if dataset.norm is None or dataset.train_ids is None:
        raise DatasetError(f"{_dataset_path(args)} has no split; run `split` first")
    return dataset


def _cmd_train(config: ExperimentConfig, args) -> int:
    dataset = _load_split_dataset(args)
    fraction = args.fraction if args.fraction is not None else config.subsets[0]
    data = bench.ExperimentData(
        config=config, corpus=dataset.corpus,
        split=SplitCorpus(train=dataset.view("train"), test=dataset.view("test")),
        norm=dataset.norm)
    model, log = bench.train_set_model(data, fraction)
    label = _fraction_label(fraction)
    ckpt = os.path.join(args.out, f"deeponet_{label}.mzck")
    save_checkpoint(ckpt, model, extra={"config_hash": config.config_hash(),
                                        "seed": config.seed, "fraction": fraction})
    bench._write_training_log(os.path.join(args.out, f"train_log_{label}.csv"),
                              log, config)
    print(f"wrote {ckpt} (final mse {log[-1][1]:.5f}, "
          f"mean L2 relative error {log[-1][2]:.4f})")
    return EXIT_OK


def _cmd_evaluate(config: ExperimentConfig, args) -> int:
    dataset = _load_split_dataset(args)
    fraction = args.fraction if args.fraction is not None else config.subsets[0]
    label = _fraction_label(fraction)
    ckpt = os.path.join(args.out, f"deeponet_{label}.mzck")
    model, _, _ = load_checkpoint(ckpt)
    test = dataset.view("test")
    reports = bench.evaluate_model(model, test, config.tally_grid)
    lines = [f"# config_hash={config.config_hash()} seed={config.seed}",
             "spec_id,r2,rmse,mae,rmse_mae_ratio,n_points"]
    for sid, rep in zip(test.spec_ids(), reports):
        ratio = repr(rep.rmse_mae_ratio) if rep.rmse_mae_ratio is not None else ""
        lines.append(f"{sid},{rep.r2!r},{rep.rmse!r},{rep.mae!r},{ratio},{rep.n_points}")
    out_path = os.path.join(args.out, f"metrics_{label}.csv")
    from .container import atomic_write_bytes
    atomic_write_bytes(out_path, ("\n".join(lines) + "\n").encode())
    r2_mean, r2_std = aggregate_metric(reports, "r2")
    print(f"wrote {out_path}; test R2 {r2_mean:.4f} +- {r2_std:.4f} "
          f"over {len(reports)} functions")
    return EXIT_OK


def _cmd_table1(config: ExperimentConfig, args) -> int:
    data = _prepare_or_load(config, args)
    table, _ = bench.run_table1_experiment(config, out_dir=args.out, data=data)
    print(table.to_text())
    return EXIT_OK


def _cmd_table2(config: ExperimentConfig, args) -> int:
    data = _prepare_or_load(config, args)
    label = _fraction_label(config.subsets[0])
    ckpt = os.path.join(args.out, f"deeponet_{label}.mzck")
    set_model = None
    if os.path.exists(ckpt):
        set_model, _, _ = load_checkpoint(ckpt)
    table, _ = bench.run_table2_experiment(config, out_dir=args.out, data=data,
                                           set_model=set_model)
    print(table.to_text())
    return EXIT_OK


def _cmd_timing(config: ExperimentConfig, args) -> int:
    label = _fraction_label(config.subsets[0])
    ckpt = os.path.join(args.out, f"deeponet_{label}.mzck")
    if os.path.exists(ckpt):
        model, _, _ = load_checkpoint(ckpt)
    else:
        data = _prepare_or_load(config, args)
        model, _ = bench.train_set_model(data, config.subsets[0])
        save_checkpoint(ckpt, model, extra={"config_hash": config.config_hash(),
                                            "seed": config.seed,
                                            "fraction": config.subsets[0]})
    report = bench.run_timing_report(config, model, out_dir=args.out)
    print(report.to_text())
    return EXIT_OK


def _cmd_gradcheck(config: ExperimentConfig, args) -> int:
    from .models import gradient_check_suite
    results = gradient_check_suite(seed=config.seed, n_probes=args.probes)
    failed = False
    for name, worst in results.items():
        status = "ok" if worst <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"{name:<10} worst relative error {worst:.3e}  [{status}]")
        failed = failed or worst > GRADCHECK_TOLERANCE
    return EXIT_FAILURE if failed else EXIT_OK


def _prepare_or_load(config: ExperimentConfig, args):
    """Reuse an on-disk corpus when present; otherwise simulate it."""
    corpus_path = os.path.join(args.out, CORPUS_FILE)
    corpus = None
    if os.path.exists(corpus_path):
        corpus = read_dataset(corpus_path).corpus
    data = bench.prepare_experiment(config, corpus=corpus)
    return data


_COMMANDS = {
    "generate": _cmd_generate,
    "split": _cmd_split,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "table1": _cmd_table1,
    "table2": _cmd_table2,
    "timing": _cmd_timing,
    "gradcheck": _cmd_gradcheck,
}


def cli_dispatch(argv=None) -> int:
    """Parse argv and run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    if args.command == "init-config":
        save_config(desk_config_dict(seed=args.seed), args.out)
        print(f"wrote {args.out}")
        return EXIT_OK

    try:
        config = load_config(args.config, seed_override=args.seed)
    except FileNotFoundError as exc:
        print(f"mazeflux {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"mazeflux {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(args.out, exist_ok=True)
    try:
        return _COMMANDS[args.command](config, args)
    except FileNotFoundError as exc:
        print(f"mazeflux {args.command}: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"mazeflux {args.command}: bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MazefluxError as exc:
        print(f"mazeflux {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command line interface

    python cli.py train     --assoc ... --out model.ckpt
    python cli.py evaluate  --scenario cv --folds 10 --out metrics.csv ...
    python cli.py predict   --model model.ckpt --drug DB00014 --top 10 ...
    python cli.py gridsearch --grid memory_dim=16,64 --grid eta=0.5,0.7 ...
    python cli.py stats | compare | sweep

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
"""

import functools
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import pandas as pd

from dataset import DrugDiseaseDataset, dataset_statistics, load_dataset, training_view_for
from errors import ConfigError, HAMNError
from evaluate_and_compare import DEFAULT_SWEEPS, SWEEP_PARAMETERS, ModelComparisonEvaluator
from evaluation import (METHODS, cross_validate, evaluate_new_drug, grid_search, ranked_predictions,
                        run_card_path, write_ranked_predictions, write_run_card)
from hamn_model import load_checkpoint, save_checkpoint, train
from train_config import DEFAULT_GRID, INT_FIELDS, TrainConfig, grid_size

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

UNIT = click.FloatRange(0.0, 1.0)
NON_NEGATIVE = click.FloatRange(min=0.0)

# option name -> TrainConfig field
HYPERPARAMETERS: List[Tuple[str, str, Any, str]] = [
    ("--latent-dim", "latent_dim", click.IntRange(min=1), "Latent factor dimension d"),
    ("--memory-dim", "memory_dim", click.IntRange(min=1), "Memory dimension l"),
    ("--eta", "eta", UNIT, "Weight of the latent-factor term, in [0, 1]"),
    ("--alpha", "alpha", UNIT, "Drug reconstruction balance, in [0, 1]"),
    ("--beta", "beta", UNIT, "Disease reconstruction balance, in [0, 1]"),
    ("--lam", "lam", NON_NEGATIVE, "Drug autoencoder L2 weight"),
    ("--delta", "delta", NON_NEGATIVE, "Disease autoencoder L2 weight"),
    ("--phi", "phi", NON_NEGATIVE, "Weight of the drug reconstruction loss"),
    ("--psi", "psi", NON_NEGATIVE, "Weight of the disease reconstruction loss"),
    ("--lr", "learning_rate", click.FloatRange(min=0.0, min_open=True), "SGD learning rate"),
    ("--lr-decay", "lr_decay", click.FloatRange(0.0, 1.0, min_open=True), "Learning rate decay factor"),
    ("--lr-decay-every", "lr_decay_every", click.IntRange(min=0), "Epochs between decays (0 disables)"),
    ("--epochs", "epochs", click.IntRange(min=0), "Training epochs"),
    ("--batch-size", "batch_size", click.IntRange(min=1), "Minibatch size"),
    ("--neg-ratio", "neg_ratio", click.IntRange(min=1), "Negatives drawn per training positive"),
    ("--noise-level", "noise_level", UNIT, "Masking noise probability, in [0, 1]"),
    ("--seed", "seed", click.IntRange(min=0), "Random seed (default 42)"),
]


def _compose(*decorators: Callable) -> Callable:
    def wrap(f):
        for d in reversed(decorators):
            f = d(f)
        return f
    return wrap


dataset_options = _compose(
    click.option("--assoc", required=True, help="Association matrix file"),
    click.option("--drug-ids", required=True, help="Drug identifier file"),
    click.option("--disease-ids", required=True, help="Disease identifier file"),
    click.option("--drug-sim", required=True, help="Drug similarity matrix file"),
    click.option("--disease-sim", required=True, help="Disease similarity matrix file"),
)

config_options = _compose(
    click.option("--config", "config_path", type=click.Path(dir_okay=False),
                 help="YAML file of hyperparameters; flags override it"),
    *[click.option(flag, dest, type=kind, default=None, help=text) for flag, dest, kind, text in HYPERPARAMETERS],
)


def handle_errors(f: Callable) -> Callable:
    """Map package errors to click exit codes (ConfigError 2, others 1)"""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as e:
            raise click.UsageError(str(e)) from e
        except (HAMNError, FileNotFoundError) as e:
            raise click.ClickException(str(e)) from e
    return wrapper


def _load(params: Dict[str, Any]) -> DrugDiseaseDataset:
    return load_dataset(params["assoc"], params["drug_ids"], params["disease_ids"],
                        params["drug_sim"], params["disease_sim"])


def _build_config(params: Dict[str, Any]) -> TrainConfig:
    config = TrainConfig.from_yaml(params["config_path"]) if params.get("config_path") else TrainConfig()
    overrides = {dest: params[dest] for _, dest, _, _ in HYPERPARAMETERS if params.get(dest) is not None}
    return config.replace(**overrides)


def _command_line(ctx: click.Context) -> str:
    parts = [ctx.command_path]
    for name, value in sorted(ctx.params.items()):
        if value is None or value is False or value == ():
            continue
        parts.append(f"--{name.replace('_', '-')}" if value is True else f"--{name.replace('_', '-')}={value}")
    return " ".join(parts)


def _parse_grid(entries: Tuple[str, ...]) -> Dict[str, List[Any]]:
    fields = set(TrainConfig().to_dict())
    grid: Dict[str, List[Any]] = {}
    for entry in entries:
        name, sep, raw = entry.partition("=")
        name = name.strip()
        if not sep or name not in fields or name == "seed":
            raise click.BadParameter(f"'{entry}' is not of the form hyperparameter=v1,v2,...", param_hint="--grid")
        cast = int if name in INT_FIELDS else float
        try:
            values = [cast(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise click.BadParameter(f"Cannot parse the values of '{entry}'", param_hint="--grid") from None
        grid[name] = values
    return grid


def _parse_list(raw: str, cast: Callable, option: str) -> List[Any]:
    try:
        return [cast(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"Cannot parse '{raw}'", param_hint=option) from None


@click.group()
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default="INFO", show_default=True)
def cli(log_level: str):
    """HAMN drug repositioning: train, evaluate and rank drug-disease associations"""
    logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT, force=True)


@cli.command(name="train")
@dataset_options
@config_options
@click.option("--out", required=True, help="Checkpoint path")
@click.option("--holdout-fold", type=click.IntRange(min=0), default=None,
              help="Train on the other folds of a k-fold plan instead of every association")
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.pass_context
@handle_errors
def train_cmd(ctx: click.Context, out: str, holdout_fold: Optional[int], folds: int, **params):
    """Train a model and write a checkpoint plus its loss trace"""
    dataset = _load(params)
    config = _build_config(params)
    if holdout_fold is None:
        spec: Dict[str, Any] = {"scenario": "full"}
    else:
        spec = {"scenario": "fold", "fold": holdout_fold, "k": folds, "seed": config.seed}
    view = training_view_for(dataset, **spec)
    trained = train(view, config, view_spec=spec)
    save_checkpoint(trained, out)

    trace_path = os.path.splitext(out)[0] + ".loss.csv"
    pd.DataFrame({"epoch": range(1, len(trained.loss_trace) + 1), "loss": trained.loss_trace}).to_csv(
        trace_path, index=False, float_format="%.10f", lineterminator="\n")
    write_run_card(run_card_path(out), config, config.seed, dataset.fingerprint(), _command_line(ctx),
                   extra={"training_view": spec})
    click.echo(f"Checkpoint written to {out}")


@cli.command()
@dataset_options
@config_options
@click.option("--scenario", type=click.Choice(["cv", "new-drug"]), default="cv", show_default=True)
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--method", type=click.Choice(METHODS), default="hamn", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel fold workers (-1 for all cores)")
@click.option("--out", required=True, help="Metrics CSV path")
@click.option("--timing", is_flag=True, help="Record wall-clock train_seconds (reruns then differ in that column)")
@click.option("--drug-rows-only", is_flag=True, help="New-drug scenario: score only the test drugs' rows")
@click.pass_context
@handle_errors
def evaluate(ctx: click.Context, scenario: str, folds: int, method: str, jobs: int, out: str,
             timing: bool, drug_rows_only: bool, **params):
    """Cross-validate (cv) or run the new-drug protocol and write per-fold metrics"""
    dataset = _load(params)
    config = _build_config(params)
    if scenario == "cv":
        report = cross_validate(dataset, config, k=folds, jobs=jobs, method=method, timing=timing)
    else:
        report = evaluate_new_drug(dataset, config, method=method, timing=timing, drug_rows_only=drug_rows_only)
        click.echo(f"New-drug test set: {report.info['test_drugs']} drugs")
    report.write_csv(out)
    report.write_run_card(out, _command_line(ctx))

    mean = report.mean()
    click.echo(f"AUC {mean['auc']:.4f}  AUPR {mean['aupr']:.4f}  "
               f"HR@1 {mean['hr1']:.4f}  HR@5 {mean['hr5']:.4f}  HR@10 {mean['hr10']:.4f}")


@cli.command()
@dataset_options
@click.option("--model", "model_path", required=True, help="Checkpoint written by train")
@click.option("--drug", default=None, help="Rank unknown diseases for this drug id")
@click.option("--all", "all_pairs", is_flag=True, help="Rank every unknown pair")
@click.option("--top", type=click.IntRange(min=1), default=None, help="Keep the K best rows")
@click.option("--out", default=None, help="CSV path (default: standard output)")
@handle_errors
def predict(model_path: str, drug: Optional[str], all_pairs: bool, top: Optional[int], out: Optional[str],
            **params):
    """Export ranked predictions for unknown drug-disease pairs"""
    if (drug is None) == (not all_pairs):
        raise click.UsageError("Give exactly one of --drug or --all")
    dataset = _load(params)
    trained = load_checkpoint(model_path, dataset)
    drug_index = None
    if drug is not None:
        try:
            drug_index = dataset.assoc.drug_index(drug)
        except KeyError:
            raise click.ClickException(f"Unknown drug id '{drug}'") from None

    scores = trained.model.score_matrix()
    if out is None:
        click.echo(ranked_predictions(scores, dataset, drug=drug_index, top=top)
                   .to_csv(index=False, float_format="%.10f", lineterminator="\n"), nl=False)
    else:
        write_ranked_predictions(scores, dataset, out, drug=drug_index, top=top)


@cli.command()
@dataset_options
@config_options
@click.option("--grid", "grid_entries", multiple=True, help="hyperparameter=v1,v2,... (repeatable)")
@click.option("--full-grid", is_flag=True, help="Search the default grid")
@click.option("--dry-run", is_flag=True, help="Only report the number of combinations")
@click.option("--validation-fraction", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
              default=0.1, show_default=True)
@click.option("--jobs", type=int, default=None, help="Parallel workers (default: grid size capped at the CPU count)")
@click.option("--out", default=None, help="Leaderboard CSV path")
@click.pass_context
@handle_errors
def gridsearch(ctx: click.Context, grid_entries: Tuple[str, ...], full_grid: bool, dry_run: bool,
               validation_fraction: float, jobs: int, out: Optional[str], **params):
    """Score hyperparameter combinations on a validation holdout"""
    grid = dict(DEFAULT_GRID) if full_grid else {}
    grid.update(_parse_grid(grid_entries))
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise click.UsageError("Grid is empty: use --grid or --full-grid")
    click.echo(f"{grid_size(grid)} combinations")
    if dry_run:
        return
    if out is None:
        raise click.UsageError("--out is required unless --dry-run is given")

    dataset = _load(params)
    config = _build_config(params)
    if jobs is None:
        jobs = min(grid_size(grid), os.cpu_count() or 1)
    board = grid_search(dataset, config, grid, validation_fraction=validation_fraction, jobs=jobs)
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    board.to_csv(out, index=False, float_format="%.6f", lineterminator="\n")
    write_run_card(run_card_path(out), config, config.seed, dataset.fingerprint(), _command_line(ctx),
                   extra={"grid": grid, "validation_fraction": validation_fraction})
    best = board.iloc[0]
    click.echo("Best: " + ", ".join(f"{k}={best[k]}" for k in grid) + f" (validation AUC {best['val_auc']:.4f})")


@cli.command()
@dataset_options
@handle_errors
def stats(**params):
    """Print dataset statistics"""
    dataset = _load(params)
    table = pd.DataFrame([dataset_statistics(dataset)])
    click.echo(table.to_string(index=False))


@cli.command()
@dataset_options
@config_options
@click.option("--seeds", default="0,1,2,3,4,5,6,7,8,9", show_default=True, help="Comma-separated seeds")
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out-dir", default="comparison_output", show_default=True)
@handle_errors
def compare(seeds: str, folds: int, jobs: int, out_dir: str, **params):
    """Compare the full model, the memory-ablated variant and the kNN baseline"""
    seed_list = _parse_list(seeds, int, "--seeds")
    dataset = _load(params)
    evaluator = ModelComparisonEvaluator(dataset, _build_config(params), folds=folds, jobs=jobs)
    click.echo(evaluator.run_comprehensive_evaluation(seed_list, output_dir=out_dir, sweep_parameters=()))


@cli.command()
@dataset_options
@config_options
@click.option("--parameter", type=click.Choice(SWEEP_PARAMETERS), required=True)
@click.option("--values", default=None, help="Comma-separated values (default: the search range)")
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out-dir", default="sweep_output", show_default=True)
@handle_errors
def sweep(parameter: str, values: Optional[str], folds: int, jobs: int, out_dir: str, **params):
    """Mean cross-validated AUC for each value of memory_dim or eta"""
    cast = int if parameter == "memory_dim" else float
    value_list = _parse_list(values, cast, "--values") if values else DEFAULT_SWEEPS[parameter]
    dataset = _load(params)
    evaluator = ModelComparisonEvaluator(dataset, _build_config(params), folds=folds, jobs=jobs)
    table = evaluator.sweep(parameter, value_list)
    os.makedirs(out_dir, exist_ok=True)
    table.to_csv(os.path.join(out_dir, f"sensitivity_{parameter}.csv"), index=False,
                 float_format="%.6f", lineterminator="\n")
    evaluator.create_visualizations(None, {parameter: table}, out_dir)
    click.echo(table.to_string(index=False))


def main(argv: Optional[List[str]] = None) -> None:
    cli.main(args=argv, prog_name="hamn")


if __name__ == "__main__":
    main(sys.argv[1:])

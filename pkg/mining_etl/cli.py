"""Command-line interface for the mining ROI pipeline."""

import functools
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
import numpy as np
import structlog

from . import __version__
from .core.config import get_settings, read_key_values, write_key_values
from .core.errors import MineRoiError, PreconditionError, TestReuseError
from .core.models import ROI_CLASS_LEGEND, DatasetManifest, RunManifest
from .data.csv_extractor import ingest_manifest
from .synthetic.market import (
    ScenarioConfig,
    default_plan,
    separable_dataset,
    write_scenario,
)

logger = structlog.get_logger(__name__)

DATASET_DIR = "dataset"
CHECKPOINT_DIR = "checkpoints"
REPORT_DIR = "reports"
RUN_MANIFEST = "manifest"
TEST_MARKER = ".final_test_used"


def configure_logging(verbose: bool = False) -> None:
    """Structured JSON logs to logs/etl_debug.log and the console."""
    settings = get_settings()
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level, logging.INFO)
    logs_dir = Path(settings.log_dir) if settings.log_dir else Path("logs")
    logs_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(logs_dir / "etl_debug.log"),
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    if verbose:
        from mining_ml.logging_config import set_ml_log_level
        set_ml_log_level(logging.DEBUG)


def handle_errors(func):
    """Map project errors to their exit codes; anything else is an internal error (1)."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PreconditionError as e:
            click.echo(f"❌ {e}", err=True)
            if e.earliest_valid_date is not None:
                click.echo(f"earliest valid date: {e.earliest_valid_date.isoformat()}", err=True)
            sys.exit(e.exit_code)
        except MineRoiError as e:
            click.echo(f"❌ {e}", err=True)
            sys.exit(e.exit_code)
        except Exception as e:
            logger.exception("Unexpected failure", command=func.__name__)
            click.echo(f"❌ Internal error: {e}", err=True)
            sys.exit(1)
    return wrapper


def parse_seeds(text: str) -> List[int]:
    """`42..46` (inclusive) or `42,43,44`."""
    text = text.strip()
    try:
        if ".." in text:
            first, last = (int(part) for part in text.split(".."))
            if last < first:
                raise ValueError
            return list(range(first, last + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter(f"expected FIRST..LAST or a comma list, got {text!r}")


def load_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    return DatasetManifest.from_key_values(read_key_values(path), base_dir=path.parent, source=str(path))


def write_run_manifest(out_dir: Path, command: str, config_path: Optional[Path] = None,
                       data_hash: Optional[str] = None, seeds: Sequence[int] = (),
                       settings: Optional[Dict[str, object]] = None) -> None:
    run = RunManifest(
        command=command,
        config_path=str(config_path) if config_path else None,
        data_hash=data_hash,
        seeds=tuple(seeds),
        output_dir=str(out_dir),
        tool_version=__version__,
        settings={k: str(v) for k, v in (settings or {}).items()},
    )
    write_key_values(Path(out_dir) / RUN_MANIFEST, run.to_key_values(), header=f"mineroi {command}")


def open_store(data_dir: Path):
    from mining_ml.dataset_store import INFO_FILE, DatasetStore

    data_dir = Path(data_dir)
    nested = data_dir / DATASET_DIR
    return DatasetStore(nested if (nested / INFO_FILE).exists() else data_dir)


def resolve_experiment(config_path: Optional[Path], window: int):
    from mining_ml.experiment import default_experiment, load_experiment
    from mining_ml.model_trainer import ModelKind

    if config_path is None:
        return default_experiment(ModelKind.MINEROI, window)
    return load_experiment(config_path, window)


def build_dataset(manifest: DatasetManifest, out_dir: Path) -> str:
    from mining_ml.dataset_store import write_dataset
    from mining_ml.feature_engineering import MiningFeatureEngineer

    machines, market = ingest_manifest(manifest)
    engineer = MiningFeatureEngineer(market, manifest.region, manifest.halving_dates,
                                     horizon_days=manifest.horizon_days,
                                     revenue_source=manifest.revenue_source,
                                     feature_order=manifest.feature_order)
    rows, samples = engineer.build(machines, manifest.window)
    return write_dataset(Path(out_dir), samples, rows, manifest)


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')
@click.version_option(__version__, prog_name="mineroi")
def main(verbose):
    """Mining hardware ROI classification pipeline."""
    configure_logging(verbose)


@main.command('build')
@click.option('--manifest', 'manifest_path', required=True, type=click.Path(path_type=Path),
              help='Data manifest (KEY=VALUE)')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Output directory')
@click.option('--window', type=int, default=None, help='Override the look-back window L')
@handle_errors
def build(manifest_path, out_dir, window):
    """Ingest CSVs, label purchase days and write the window dataset."""
    manifest = load_manifest(manifest_path)
    if window is not None:
        manifest = manifest.with_window(window)
    click.echo(f"🚀 Building L={manifest.window} dataset from {manifest_path}")
    dataset_hash = build_dataset(manifest, out_dir / DATASET_DIR)
    write_run_manifest(out_dir, "build", manifest_path, dataset_hash,
                       settings={"WINDOW": manifest.window, "REGION": manifest.region})

    from mining_ml.dataset_store import DatasetStore
    store = DatasetStore(out_dir / DATASET_DIR)
    click.echo(f"✅ {store.info['n_samples']} windows, class counts {store.info['class_counts']}")
    click.echo(f"dataset hash: {dataset_hash}")


@main.command('train')
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None,
              help='Experiment config (defaults to the base preset for the dataset window)')
@click.option('--data', 'data_dir', required=True, type=click.Path(path_type=Path), help='Built dataset directory')
@click.option('--seeds', default='42', help='Seeds, e.g. 42..46')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Output directory')
@handle_errors
def train_cmd(config_path, data_dir, seeds, out_dir):
    """Fit on the final training range, selecting the epoch on its held-out tail."""
    from mining_ml.checkpoint import save_checkpoint
    from mining_ml.cross_validation import train_final

    store = open_store(data_dir)
    experiment = resolve_experiment(config_path, store.window)
    seed_list = parse_seeds(seeds)
    for seed in seed_list:
        result, scaler = train_final(store, experiment, seed)
        history = result.history
        result.history.write_csv(out_dir / REPORT_DIR / f"history-seed{seed}.csv")
        save_checkpoint(out_dir / CHECKPOINT_DIR / f"{experiment.kind.value}-seed{seed}.ckpt",
                        result.model, scaler, store.feature_order,
                        metadata={"seed": seed, "data_hash": store.hash, "selected_epoch": history.selected_epoch,
                                  "config": experiment.label})
        val_acc = history.val_accuracy[history.selected_epoch - 1]
        click.echo(f"seed {seed}: selected epoch {history.selected_epoch}, validation accuracy {val_acc:.4f}")
    write_run_manifest(out_dir, "train", config_path, store.hash, seed_list, experiment.to_key_values())


@main.command('cv')
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None, help='Experiment config')
@click.option('--data', 'data_dir', required=True, type=click.Path(path_type=Path), help='Built dataset directory')
@click.option('--seeds', default='42..46', help='Seeds, e.g. 42..46')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Output directory')
@click.option('--jobs', type=int, default=None, help='Parallel (split, seed) runs (default MINEROI_N_JOBS)')
@handle_errors
def cv_cmd(config_path, data_dir, seeds, out_dir, jobs):
    """Expanding-window cross-validation over the plan's validation splits."""
    from mining_ml.cross_validation import cross_validate
    from mining_ml.evaluation import write_confusion_blocks, write_reports_csv

    store = open_store(data_dir)
    experiment = resolve_experiment(config_path, store.window)
    seed_list = parse_seeds(seeds)
    result = cross_validate(store, experiment, seed_list, n_jobs=jobs or get_settings().n_jobs)
    if store.touched(store.plan.final_test):
        raise MineRoiError("cross-validation read samples from the final test range")

    reports = out_dir / REPORT_DIR
    reports.mkdir(parents=True, exist_ok=True)
    write_reports_csv(result.reports, reports / "cv_reports.csv")
    write_confusion_blocks(result.reports, reports / "cv_confusion.csv")
    table = result.table()
    (reports / "cv_table.txt").write_text(table, encoding="utf-8")
    write_run_manifest(out_dir, "cv", config_path, store.hash, seed_list, experiment.to_key_values())
    click.echo(table)


@main.command('eval')
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None, help='Experiment config')
@click.option('--data', 'data_dir', required=True, type=click.Path(path_type=Path), help='Built dataset directory')
@click.option('--seeds', default='42..46', help='Seeds, e.g. 42..46')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Experiment directory')
@click.option('--jobs', type=int, default=None, help='Parallel seed runs')
@click.option('--allow-test-reuse', is_flag=True, help='Evaluate the same test range again in this directory')
@click.option('--plots', is_flag=True, help='Write confusion heatmaps (needs matplotlib/seaborn)')
@handle_errors
def eval_cmd(config_path, data_dir, seeds, out_dir, jobs, allow_test_reuse, plots):
    """Retrain on the full training range per seed and evaluate the final test range once."""
    from mining_ml.checkpoint import save_checkpoint
    from mining_ml.cross_validation import final_evaluation
    from mining_ml.evaluation import (
        aggregate_table,
        plot_confusion,
        roc_points,
        split_table,
        write_confusion_blocks,
        write_reports_csv,
    )

    store = open_store(data_dir)
    test_range = str(store.plan.final_test)
    marker = out_dir / REPORT_DIR / TEST_MARKER
    if marker.exists() and test_range in marker.read_text(encoding="utf-8").split() and not allow_test_reuse:
        raise TestReuseError(f"final test range {test_range} was already evaluated in {out_dir}; "
                             "pass --allow-test-reuse to evaluate it again")

    experiment = resolve_experiment(config_path, store.window)
    seed_list = parse_seeds(seeds)
    result = final_evaluation(store, experiment, seed_list, n_jobs=jobs or get_settings().n_jobs)

    reports = out_dir / REPORT_DIR
    reports.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        save_checkpoint(out_dir / CHECKPOINT_DIR / f"{experiment.kind.value}-final-seed{run.seed}.ckpt",
                        run.result.model, result.scaler, store.feature_order,
                        metadata={"seed": run.seed, "data_hash": store.hash, "config": experiment.label,
                                  "selected_epoch": run.result.history.selected_epoch})
        roc_points(run.probabilities, run.y_true).to_csv(reports / f"roc-seed{run.seed}.csv", index=False)
        if plots:
            plot_confusion(run.report, reports / f"confusion-seed{run.seed}.png")

    write_reports_csv(result.reports, reports / "eval_reports.csv")
    write_confusion_blocks(result.reports, reports / "eval_confusion.csv")
    table = aggregate_table(result.reports) if len(seed_list) > 1 else split_table(result.reports, "Final evaluation")
    (reports / "eval_table.txt").write_text(table, encoding="utf-8")
    write_run_manifest(out_dir, "eval", config_path, store.hash, seed_list, experiment.to_key_values())
    # only a completed evaluation consumes the test range
    with marker.open("a", encoding="utf-8") as fh:
        fh.write(test_range + "\n")
    click.echo(table)


@main.command('predict')
@click.option('--checkpoint', 'checkpoint_path', required=True, type=click.Path(path_type=Path))
@click.option('--data', 'data_dir', required=True, type=click.Path(path_type=Path), help='Built dataset directory')
@click.option('--machine', 'machine_id', required=True, help='Machine id')
@click.option('--date', 'purchase_date', required=True, type=click.DateTime(formats=["%Y-%m-%d"]),
              help='Purchase date YYYY-MM-DD')
@handle_errors
def predict(checkpoint_path, data_dir, machine_id, purchase_date):
    """ROI class of buying one machine on one day."""
    from mining_ml.checkpoint import load_checkpoint
    from mining_ml.feature_engineering import window_ending

    ckpt = load_checkpoint(checkpoint_path)
    store = open_store(data_dir)
    day: date = purchase_date.date()
    window = window_ending(store.feature_rows(machine_id), day, ckpt.window, ckpt.feature_order)
    X = window[None]
    if ckpt.scaler is not None:
        X = ckpt.scaler.transform(X)
    probabilities = ckpt.model.predict_proba(X)[0]
    predicted = int(np.argmax(probabilities))
    probs = ", ".join(f"p{c}={p:.6f}" for c, p in enumerate(probabilities))
    click.echo(f"{machine_id} {day.isoformat()} class={predicted} ({ROI_CLASS_LEGEND[predicted]}) {probs}")
    click.echo("legend: " + "; ".join(f"{c} = {text}" for c, text in ROI_CLASS_LEGEND.items()))


@main.command('sweep')
@click.option('--config', 'config_path', required=True, type=click.Path(path_type=Path),
              help='Experiment config with comma-list values')
@click.option('--data', 'data_dir', required=True, type=click.Path(path_type=Path), help='Built dataset directory')
@click.option('--seeds', default='42..46', help='Seeds, e.g. 42..46')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Output directory')
@click.option('--jobs', type=int, default=None, help='Parallel (split, seed) runs')
@handle_errors
def sweep_cmd(config_path, data_dir, seeds, out_dir, jobs):
    """Cross-validate every configuration of a sweep file and rank them by macro F1."""
    from mining_ml.cross_validation import sweep
    from mining_ml.evaluation import write_reports_csv
    from mining_ml.experiment import load_experiments

    store = open_store(data_dir)
    experiments = load_experiments(config_path, store.window)
    seed_list = parse_seeds(seeds)
    ranking, results = sweep(store, experiments, seed_list, n_jobs=jobs or get_settings().n_jobs)

    reports = out_dir / REPORT_DIR
    reports.mkdir(parents=True, exist_ok=True)
    ranking.to_csv(reports / "sweep_ranking.csv", index=False)
    for i, res in enumerate(results, 1):
        write_reports_csv(res.reports, reports / f"sweep-{i:02d}_reports.csv")
    text = ranking.to_string(index=False, float_format=lambda v: f"{v:.4f}")
    (reports / "sweep_table.txt").write_text(text + "\n", encoding="utf-8")
    write_run_manifest(out_dir, "sweep", config_path, store.hash, seed_list,
                       {"CONFIGS": len(experiments), "BEST": ranking.loc[0, "config"]})
    click.echo(text)


@main.command('ablation')
@click.option('--manifest', 'manifest_path', required=True, type=click.Path(path_type=Path), help='Data manifest')
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None,
              help='Experiment config (defaults to the base preset per window)')
@click.option('--windows', default='30,60', help='Look-back windows to compare')
@click.option('--seeds', default='42..46', help='Seeds, e.g. 42..46')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Output directory')
@click.option('--jobs', type=int, default=None, help='Parallel (split, seed) runs')
@handle_errors
def ablation_cmd(manifest_path, config_path, windows, seeds, out_dir, jobs):
    """Build one dataset per look-back window and cross-validate each."""
    from mining_ml.cross_validation import ablation
    from mining_ml.dataset_store import DatasetStore
    from mining_ml.evaluation import class_table, window_table, write_reports_csv

    manifest = load_manifest(manifest_path)
    window_list = [int(w) for w in windows.split(",") if w.strip()]
    seed_list = parse_seeds(seeds)
    stores, experiments = {}, {}
    for window in window_list:
        dataset_dir = out_dir / f"{DATASET_DIR}-L{window}"
        build_dataset(manifest.with_window(window), dataset_dir)
        stores[window] = DatasetStore(dataset_dir)
        experiments[window] = resolve_experiment(config_path, window)

    results = ablation(stores, experiments, seed_list, n_jobs=jobs or get_settings().n_jobs)
    reports = out_dir / REPORT_DIR
    reports.mkdir(parents=True, exist_ok=True)
    for window, res in results.items():
        write_reports_csv(res.reports, reports / f"ablation-L{window}_reports.csv")
    by_window = {w: r.reports for w, r in results.items()}
    text = window_table(by_window) + "\n" + class_table(by_window)
    (reports / "ablation_table.txt").write_text(text, encoding="utf-8")
    write_run_manifest(out_dir, "ablation", config_path, ",".join(stores[w].hash for w in window_list), seed_list,
                       {"WINDOWS": windows})
    click.echo(text)


@main.command('synth')
@click.option('--out', 'out_dir', required=True, type=click.Path(path_type=Path), help='Output directory')
@click.option('--seed', type=int, default=42, help='Scenario seed')
@click.option('--years', type=int, default=5, help='Scenario length in years')
@click.option('--machines', 'n_machines', type=int, default=6, help='Number of machine models')
@click.option('--start', type=click.DateTime(formats=["%Y-%m-%d"]), default="2016-01-01", help='First day')
@click.option('--window', type=int, default=30, help='Look-back window written to the manifest')
@click.option('--separable', is_flag=True, help='Also write a ready-to-train planted-class dataset')
@click.option('--per-class', type=int, default=500, help='Planted samples per class (with --separable)')
@handle_errors
def synth(out_dir, seed, years, n_machines, start, window, separable, per_class):
    """Write a synthetic three-regime scenario (CSVs + data manifest)."""
    scenario = ScenarioConfig.three_regime(start=start.date(), years=years, seed=seed, n_machines=n_machines)
    manifest_path = write_scenario(scenario, out_dir, window=window)
    click.echo(f"✅ Scenario written; manifest: {manifest_path}")

    if separable:
        from mining_ml.dataset_store import write_dataset

        samples = separable_dataset(window=window, n_per_class=per_class, seed=seed)
        plan = default_plan(samples[0].end_date, samples[-1].end_date, n_splits=2)
        manifest = load_manifest(manifest_path).model_copy(update={"window": window, "plan": plan})
        target = out_dir / "separable" / DATASET_DIR
        dataset_hash = write_dataset(target, samples, {}, manifest)
        write_run_manifest(out_dir / "separable", "synth --separable", None, dataset_hash, (seed,),
                           {"PER_CLASS": per_class, "WINDOW": window})
        click.echo(f"✅ Separable dataset ({len(samples)} windows): {target}")
    write_run_manifest(out_dir, "synth", None, None, (seed,), {"YEARS": years, "MACHINES": n_machines})


if __name__ == '__main__':
    main()

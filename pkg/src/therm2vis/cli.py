"""Command-line entry point: prepare, train, generate, evaluate, triptych.

Exit codes: 0 success (possibly with warnings), 2 input errors, 3 training
failures, 4 evaluation input errors.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from . import perceptual, report, trainer
from .config import load_run_config
from .errors import (
    CheckpointError,
    ConfigurationError,
    IngestionError,
    PairingError,
    TrainingDivergedError,
)
from .quality import compute_quality

EXIT_INPUT = 2
EXIT_TRAINING = 3
EXIT_EVALUATION = 4


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML configuration file.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted-key override, e.g. --set loss.lambda1=0.01.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Fold/training/model seed.")
@click.pass_context
def main(ctx, config_path, overrides, out, seed):
    """Thermal-to-visible face synthesis: training and evaluation toolkit."""
    try:
        ctx.obj = load_run_config(config_path, overrides, out, seed)
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)


def _load_records(cfg, exit_code=EXIT_INPUT, warn=True):
    root = cfg.dataset_root
    if root is None:
        click.echo("error: dataset.root is not configured", err=True)
        sys.exit(exit_code)
    try:
        records, problems = ds.scan_dataset(root)
    except IngestionError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exit_code)
    if warn:
        for problem in problems:
            click.echo(f"warning: {problem}", err=True)
    return records, problems


def _perceptual_net(cfg):
    weights = cfg["perceptual.weights_path"]
    if weights:
        return perceptual.load_pretrained(weights, cfg["perceptual.sha256"])
    click.echo(
        "warning: no perceptual weights configured; using a seeded random "
        "frozen network", err=True,
    )
    return perceptual.random_net(cfg["perceptual.random_seed"])


def _load_plan(cfg):
    path = cfg.folds_path
    if not path.exists():
        click.echo(f"error: folds file {path} not found (run `prepare` first)", err=True)
        sys.exit(EXIT_INPUT)
    return ds.FoldPlan.from_json(path.read_text())


def _parse_fold(value: str, n_folds: int):
    if value == "all":
        return None
    try:
        index = int(value)
    except ValueError:
        raise ConfigurationError(f"--fold must be an index or 'all', got {value!r}")
    if not 0 <= index < n_folds:
        raise ConfigurationError(f"fold index {index} out of range [0, {n_folds})")
    return {index}


@main.command()
@click.pass_obj
def prepare(cfg):
    """Validate the dataset and write the identity-disjoint fold plan."""
    records, problems = _load_records(cfg)
    identities = sorted({r.identity_id for r in records})
    dark = sum(
        1 for r in records
        if r.spectrum == ds.VISIBLE and ds.is_dark(r, cfg["dataset.dark_threshold"])
    )
    click.echo(
        f"{len(records)} records, {len(identities)} identities, "
        f"{dark} dark visible images, {len(problems)} pairing warning(s)"
    )
    try:
        plan = ds.make_folds(identities, cfg["folds.count"], cfg["folds.seed"])
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.folds_path.write_text(plan.to_json())
    click.echo(f"wrote {len(plan.folds)} folds to {cfg.folds_path}")


@main.command()
@click.option("--fold", default="all", help="Fold index or 'all'.")
@click.option("--epochs", type=int, default=None, help="Override train.epochs.")
@click.pass_obj
def train(cfg, fold, epochs):
    """Train per-fold generators and produce test-set images."""
    if epochs is not None:
        cfg.set("train.epochs", epochs)
    records, _ = _load_records(cfg)
    plan = _load_plan(cfg)
    try:
        only = _parse_fold(fold, len(plan.folds))
        net = _perceptual_net(cfg)
        manifests = trainer.run_cross_validation(
            records,
            plan,
            cfg.train_config(),
            net,
            cfg.out_dir,
            dark_threshold=cfg["dataset.dark_threshold"],
            only_folds=only,
            log=lambda epoch, loss: click.echo(f"epoch {epoch} loss {loss:.6f}"),
        )
    except TrainingDivergedError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_TRAINING)
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    for manifest in manifests:
        click.echo(
            f"fold {manifest.fold_index}: {len(manifest.generated)} images, "
            f"checkpoint {manifest.checkpoint_path}"
        )


@main.command()
@click.option("--fold", default="all", help="Fold index or 'all'.")
@click.pass_obj
def generate(cfg, fold):
    """Regenerate test-set images from existing checkpoints."""
    records, _ = _load_records(cfg)
    plan = _load_plan(cfg)
    try:
        only = _parse_fold(fold, len(plan.folds))
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    for i, fold_entry in enumerate(plan.folds):
        if only is not None and i not in only:
            continue
        fold_dir = cfg.out_dir / f"fold{i}"
        ckpt_path = fold_dir / "model.ckpt"
        if not ckpt_path.exists():
            click.echo(f"error: checkpoint {ckpt_path} not found", err=True)
            sys.exit(EXIT_INPUT)
        try:
            ckpt = trainer.load_checkpoint(ckpt_path)
            generated = trainer.generate_fold_images(records, fold_entry, ckpt, fold_dir)
        except CheckpointError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        click.echo(f"fold {i}: regenerated {len(generated)} images")


def _generated_images(out_dir: Path):
    for path in sorted(out_dir.glob("fold*/[0-9]*_gen.png")):
        yield path


@main.command()
@click.pass_obj
def evaluate(cfg):
    """Per-image quality CSV plus the aggregate mean +- std table."""
    records, _ = _load_records(cfg, exit_code=EXIT_EVALUATION, warn=False)
    size = cfg["crn.target_resolution"]
    entries = []
    by_set_vectors = {"O-VIS": [], "O-THM": [], "G-VIS": []}

    pairs = ds.pairs_for_identities(
        records, {r.identity_id for r in records}, exclude_dark=False, size=size
    )
    for pair in pairs:
        tag = f"{pair.identity_id}_{pair.variation_id}"
        vec = compute_quality(pair.visible)
        by_set_vectors["O-VIS"].append(vec)
        entries.append((f"{tag}_vis", "O-VIS", vec))
        vec = compute_quality(pair.thermal)
        by_set_vectors["O-THM"].append(vec)
        entries.append((f"{tag}_thm", "O-THM", vec))

    for path in _generated_images(cfg.out_dir):
        image = ds._read_image(path, ds.VISIBLE)
        vec = compute_quality(image)
        by_set_vectors["G-VIS"].append(vec)
        entries.append((str(path), "G-VIS", vec))

    populated = {k: v for k, v in by_set_vectors.items() if v}
    if not populated:
        click.echo("error: no images to evaluate", err=True)
        sys.exit(EXIT_EVALUATION)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    report.write_per_image_csv(cfg.out_dir / "quality_per_image.csv", entries)
    by_set = {name: report.aggregate(vectors) for name, vectors in populated.items()}
    report.write_aggregate_csv(cfg.out_dir / "quality_aggregate.csv", by_set)
    table = report.render_table(by_set)
    (cfg.out_dir / "quality_table.txt").write_text(table + "\n")
    click.echo(table)


@main.command()
@click.option("--identity", type=int, required=True)
@click.option("--variation", type=int, required=True)
@click.option("--output", "output_path", type=click.Path(), default=None)
@click.pass_obj
def triptych(cfg, identity, variation, output_path):
    """Side-by-side composite: thermal | generated | ground-truth visible."""
    records, _ = _load_records(cfg, exit_code=EXIT_EVALUATION, warn=False)
    size = cfg["crn.target_resolution"]
    by_key = ds.index_records(records)
    thermal = by_key.get((identity, variation, ds.THERMAL))
    visible = by_key.get((identity, variation, ds.VISIBLE))
    matches = list(cfg.out_dir.glob(f"fold*/{identity}_{variation}_gen.png"))
    if thermal is None or visible is None or not matches:
        click.echo(
            f"error: missing image(s) for identity {identity}, variation {variation}",
            err=True,
        )
        sys.exit(EXIT_EVALUATION)
    pair = ds.preprocess_pair(thermal, visible, size)
    generated = ds._read_image(matches[0], ds.VISIBLE)
    composite = np.concatenate([pair.thermal, generated, pair.visible], axis=1)
    if output_path is None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        output_path = cfg.out_dir / f"triptych_{identity}_{variation}.png"
    trainer.write_png(composite, output_path)
    click.echo(f"wrote {output_path}")


if __name__ == "__main__":
    main()

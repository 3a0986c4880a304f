"""Per-fold training, checkpointing, and the full cross-validation protocol."""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import os
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from . import dataset as ds
from .crn import CrnConfig, build_crn
from .cxloss import LossConfig, total_loss
from .errors import CheckpointError, ConfigurationError, TrainingDivergedError
from .perceptual import to_tensor

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 1
    learning_rate: float = 1e-4
    seed: int = 0
    # "thermal_to_visible" trains g = model(thermal) against s=thermal,
    # t=visible; "visible_to_thermal" swaps the roles.
    direction: str = "thermal_to_visible"
    loss: LossConfig = field(default_factory=LossConfig)
    crn: CrnConfig = field(default_factory=CrnConfig)

    def validate(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be > 0")
        if self.direction not in ("thermal_to_visible", "visible_to_thermal"):
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        self.crn.validate()


def config_digest(cfg: TrainConfig) -> str:
    doc = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(doc.encode()).hexdigest()


@dataclass
class Checkpoint:
    model_state: dict
    optimizer_state: dict
    epoch: int
    config: TrainConfig
    digest: str
    loss_history: list = field(default_factory=list)


@dataclass
class RunManifest:
    fold_index: int
    train_identities: list
    test_identities: list
    checkpoint_path: str
    generated: dict  # "identity_variation" -> image path
    wall_time_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Atomic write: assemble in a temp file, then rename into place."""
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(ckpt.config),
        "digest": ckpt.digest,
        "epoch": ckpt.epoch,
        "loss_history": ckpt.loss_history,
        "seed": ckpt.config.seed,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=2, default=list))
        buf = io.BytesIO()
        torch.save(ckpt.model_state, buf)
        zf.writestr("params.pt", buf.getvalue())
        buf = io.BytesIO()
        torch.save(ckpt.optimizer_state, buf)
        zf.writestr("optim.pt", buf.getvalue())
    os.replace(tmp, path)


def _config_from_dict(doc: dict) -> TrainConfig:
    loss = LossConfig(**{**doc["loss"], "source_layers": tuple(doc["loss"]["source_layers"]),
                         "target_layers": tuple(doc["loss"]["target_layers"])})
    crn = CrnConfig(**{**doc["crn"], "channel_schedule": tuple(doc["crn"]["channel_schedule"])})
    top = {k: v for k, v in doc.items() if k not in ("loss", "crn")}
    return TrainConfig(loss=loss, crn=crn, **top)


def load_checkpoint(path) -> Checkpoint:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            model_state = torch.load(io.BytesIO(zf.read("params.pt")), weights_only=True)
            optimizer_state = torch.load(io.BytesIO(zf.read("optim.pt")), weights_only=False)
    except (OSError, KeyError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
    cfg = _config_from_dict(meta["config"])
    return Checkpoint(
        model_state=model_state,
        optimizer_state=optimizer_state,
        epoch=meta["epoch"],
        config=cfg,
        digest=meta["digest"],
        loss_history=meta["loss_history"],
    )


def _roles(pair: ds.ImagePair, direction: str):
    s = to_tensor(pair.thermal)
    t = to_tensor(pair.visible)
    if direction == "visible_to_thermal":
        s, t = t, s
    return s, t


def train_fold(pairs, cfg: TrainConfig, net, log=None) -> Checkpoint:
    """Optimize a freshly built generator on the given pairs.

    `net` is the frozen perceptual network used by the loss. Deterministic
    given the config seed (single-threaded step ordering).
    """
    cfg.validate()
    if not pairs and cfg.epochs > 0:
        raise ConfigurationError("no training pairs for a nonzero epoch count")
    model = build_crn(cfg.crn)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999))
    rng = np.random.default_rng(cfg.seed)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            opt.zero_grad()
            batch_loss = torch.zeros(())
            for j in batch:
                pair = pairs[int(j)]
                s, t = _roles(pair, cfg.direction)
                g = model(s)
                loss, _ = total_loss(s, t, g, net, cfg.loss)
                batch_loss = batch_loss + loss
            batch_loss = batch_loss / len(batch)
            value = float(batch_loss.detach())
            if not np.isfinite(value):
                raise TrainingDivergedError(step, value)
            batch_loss.backward()
            opt.step()
            epoch_losses.append(value)
            step += 1
        mean = float(np.mean(epoch_losses))
        history.append(mean)
        if log is not None:
            log(epoch, mean)
    return Checkpoint(
        model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
        optimizer_state=opt.state_dict(),
        epoch=cfg.epochs,
        config=cfg,
        digest=config_digest(cfg),
        loss_history=history,
    )


def generate(ckpt: Checkpoint, thermal: np.ndarray, expected_crn: CrnConfig | None = None) -> np.ndarray:
    """Inference-mode forward pass; returns an H x W x 3 image in [0, 1]."""
    if expected_crn is not None and expected_crn != ckpt.config.crn:
        raise CheckpointError(
            "checkpoint generator config does not match the requested config"
        )
    model = build_crn(ckpt.config.crn)
    model.load_state_dict(ckpt.model_state)
    model.eval()
    with torch.no_grad():
        out = model(to_tensor(thermal))
    return out.numpy().transpose(1, 2, 0).astype(np.float64)


def parameter_digest(state: dict) -> str:
    h = hashlib.sha256()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].numpy().tobytes())
    return h.hexdigest()


def write_png(image: np.ndarray, path) -> None:
    """Store an H x W x 3 [0, 1] image as 8-bit PNG (RGB)."""
    u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    cv2.imwrite(str(path), cv2.cvtColor(u8, cv2.COLOR_RGB2BGR))


def generate_fold_images(records, fold: ds.Fold, ckpt: Checkpoint, fold_dir: Path) -> dict:
    """Generate and store images for every test pair of one fold."""
    size = ckpt.config.crn.target_resolution
    test_pairs = ds.pairs_for_identities(
        records, fold.test_identities, exclude_dark=False, size=size
    )
    generated = {}
    for pair in test_pairs:
        assert pair.identity_id not in fold.train_identities, (
            "train/test identity leakage"
        )
        img = generate(ckpt, pair.thermal)
        path = fold_dir / f"{pair.identity_id}_{pair.variation_id}_gen.png"
        write_png(img, path)
        generated[f"{pair.identity_id}_{pair.variation_id}"] = str(path)
    return generated


def run_cross_validation(
    records,
    plan: ds.FoldPlan,
    cfg: TrainConfig,
    net,
    out_dir,
    exclude_dark: bool = True,
    dark_threshold: float = ds.DARK_THRESHOLD,
    only_folds=None,
    log=None,
) -> list[RunManifest]:
    """Train one model per fold and generate every test pair's image.

    A fold whose manifest already exists is skipped, making interrupted
    runs resumable. Dark visible images are excluded from training only;
    test generation covers all variations.
    """
    out_dir = Path(out_dir)
    size = cfg.crn.target_resolution
    record_ids = {r.identity_id for r in records}
    plan_ids = set().union(*(f.test_identities for f in plan.folds)) if plan.folds else set()
    if plan_ids != record_ids:
        raise ConfigurationError("fold plan does not cover the record identity set")

    manifests = []
    for i, fold in enumerate(plan.folds):
        if only_folds is not None and i not in only_folds:
            continue
        fold_dir = out_dir / f"fold{i}"
        manifest_path = fold_dir / "manifest.json"
        if manifest_path.exists():
            manifests.append(RunManifest.from_json(manifest_path.read_text()))
            continue
        fold_dir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()

        pairs = ds.training_pairs(records, fold, exclude_dark, size, dark_threshold)
        ckpt = train_fold(pairs, cfg, net, log=log)
        ckpt_path = fold_dir / "model.ckpt"
        save_checkpoint(ckpt, ckpt_path)

        generated = generate_fold_images(records, fold, ckpt, fold_dir)

        manifest = RunManifest(
            fold_index=i,
            train_identities=sorted(fold.train_identities),
            test_identities=sorted(fold.test_identities),
            checkpoint_path=str(ckpt_path),
            generated=generated,
            wall_time_s=time.monotonic() - started,
        )
        # Manifest written last: its presence marks the fold complete.
        manifest_path.write_text(manifest.to_json())
        manifests.append(manifest)
    return manifests

"""Unified run configuration: defaults, YAML file, dotted-key overrides.

Precedence: command-line flags > ``--set`` overrides > config file >
defaults. Defaults match the published training recipe (40 epochs, batch
size 1, learning rate 1e-4, loss weights 0.01/0.99, 10 folds, 128 target
resolution).
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .crn import CrnConfig
from .cxloss import LossConfig
from .errors import ConfigurationError
from .trainer import TrainConfig

DEFAULTS = {
    "dataset": {
        "root": None,
        "dark_threshold": 0.05,
    },
    "folds": {
        "count": 10,
        "seed": 0,
    },
    "output": {
        "dir": "out",
    },
    "perceptual": {
        "weights_path": None,
        "sha256": None,
        "random_seed": 0,
    },
    "train": {
        "epochs": 40,
        "batch_size": 1,
        "learning_rate": 1e-4,
        "seed": 0,
        "direction": "thermal_to_visible",
    },
    "loss": {
        "lambda1": 0.01,
        "lambda2": 0.99,
        "source_layers": ["conv4_2"],
        "target_layers": ["conv3_2", "conv4_2"],
        "h": 0.5,
        "epsilon": 1e-5,
        "feature_cap": 1024,
        "subsample_seed": 0,
    },
    "crn": {
        "base_resolution": 4,
        "target_resolution": 128,
        "channel_schedule": [512, 512, 512, 256, 128, 64],
        "leaky_slope": 0.2,
        "seed": 0,
    },
}


def _merge(base: dict, overlay: dict, prefix=""):
    for key, value in overlay.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown configuration key: {dotted}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{dotted} must be a mapping")
            _merge(base[key], value, f"{dotted}.")
        else:
            base[key] = value


class RunConfig:
    def __init__(self, doc: dict):
        self.doc = doc

    def __getitem__(self, dotted: str):
        node = self.doc
        for part in dotted.split("."):
            node = node[part]
        return node

    def set(self, dotted: str, value) -> None:
        parts = dotted.split(".")
        node = self.doc
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigurationError(f"unknown configuration key: {dotted}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigurationError(f"unknown configuration key: {dotted}")
        node[parts[-1]] = value

    @property
    def dataset_root(self):
        return self.doc["dataset"]["root"]

    @property
    def out_dir(self) -> Path:
        return Path(self.doc["output"]["dir"])

    @property
    def folds_path(self) -> Path:
        return self.out_dir / "folds.json"

    def loss_config(self) -> LossConfig:
        d = self.doc["loss"]
        return LossConfig(
            lambda1=d["lambda1"],
            lambda2=d["lambda2"],
            source_layers=tuple(d["source_layers"]),
            target_layers=tuple(d["target_layers"]),
            h=d["h"],
            epsilon=d["epsilon"],
            feature_cap=d["feature_cap"],
            subsample_seed=d["subsample_seed"],
        )

    def crn_config(self) -> CrnConfig:
        d = self.doc["crn"]
        return CrnConfig(
            base_resolution=d["base_resolution"],
            target_resolution=d["target_resolution"],
            channel_schedule=tuple(d["channel_schedule"]),
            leaky_slope=d["leaky_slope"],
            seed=d["seed"],
        )

    def train_config(self) -> TrainConfig:
        d = self.doc["train"]
        cfg = TrainConfig(
            epochs=d["epochs"],
            batch_size=d["batch_size"],
            learning_rate=d["learning_rate"],
            seed=d["seed"],
            direction=d["direction"],
            loss=self.loss_config(),
            crn=self.crn_config(),
        )
        cfg.validate()
        return cfg


def parse_override(text: str):
    if "=" not in text:
        raise ConfigurationError(f"override must look like key=value, got {text!r}")
    key, _, raw = text.partition("=")
    return key.strip(), yaml.safe_load(raw)


def load_run_config(
    config_path=None, overrides=(), out=None, seed=None
) -> RunConfig:
    doc = copy.deepcopy(DEFAULTS)
    if config_path is not None:
        loaded = yaml.safe_load(Path(config_path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a mapping")
        _merge(doc, loaded)
    cfg = RunConfig(doc)
    for item in overrides:
        key, value = parse_override(item)
        cfg.set(key, value)
    if out is not None:
        cfg.set("output.dir", str(out))
    if seed is not None:
        cfg.set("folds.seed", int(seed))
        cfg.set("train.seed", int(seed))
        cfg.set("crn.seed", int(seed))
    return cfg

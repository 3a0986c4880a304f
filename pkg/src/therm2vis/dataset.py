"""Paired visible/thermal face corpus: ingestion, preprocessing, fold planning.

Corpus layout on disk: one directory per identity, files named
``<identity>_<variation>_<vis|thm>.png``. Visible images are 3-channel
8-bit PNG, thermal images single-channel grayscale PNG. Pixels map to
[0, 1] by division by 255.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import ConfigurationError, IngestionError, PairingError

VISIBLE = "visible"
THERMAL = "thermal"

NETWORK_SIZE = 128

# BT.601 luma weights, shared with the quality metrics.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

DARK_THRESHOLD = 0.05

_FILE_RE = re.compile(r"^(\d+)_(\d+)_(vis|thm)\.png$")


@dataclass
class CaptureRecord:
    """One raw capture: identity, variation, spectrum and its pixel grid."""

    identity_id: int
    variation_id: int
    spectrum: str
    pixels: np.ndarray  # H x W x C, floats in [0, 1]
    source_path: str = ""

    def __post_init__(self):
        if self.spectrum not in (VISIBLE, THERMAL):
            raise ConfigurationError(f"unknown spectrum {self.spectrum!r}")
        if self.pixels.ndim != 3:
            raise ConfigurationError("pixels must be H x W x C")
        channels = self.pixels.shape[2]
        expected = 3 if self.spectrum == VISIBLE else 1
        if channels != expected:
            raise ConfigurationError(
                f"{self.spectrum} record must have {expected} channel(s), got {channels}"
            )
        lo, hi = float(self.pixels.min(initial=0.0)), float(self.pixels.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ConfigurationError(f"pixel values outside [0, 1]: min {lo}, max {hi}")


@dataclass
class ImagePair:
    """Preprocessed thermal/visible pair at network resolution.

    The thermal grid carries its single channel replicated to 3.
    """

    thermal: np.ndarray
    visible: np.ndarray
    identity_id: int
    variation_id: int


@dataclass
class Fold:
    train_identities: frozenset
    test_identities: frozenset


@dataclass
class FoldPlan:
    seed: int
    folds: list[Fold] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "folds": [
                {"train": sorted(f.train_identities), "test": sorted(f.test_identities)}
                for f in self.folds
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        doc = json.loads(text)
        folds = [
            Fold(frozenset(entry["train"]), frozenset(entry["test"]))
            for entry in doc["folds"]
        ]
        return cls(seed=int(doc["seed"]), folds=folds)


def luminance(image: np.ndarray) -> np.ndarray:
    """BT.601 luminance of an H x W x 3 image in [0, 1].

    Computed as an integer-weighted sum over 1000 so gray inputs map to
    their exact value (0.299 + 0.587 + 0.114 does not sum to 1.0 in
    binary floating point).
    """
    return (
        299.0 * image[..., 0] + 587.0 * image[..., 1] + 114.0 * image[..., 2]
    ) / 1000.0


def _read_image(path: Path, spectrum: str) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IngestionError(f"unreadable image file: {path}")
    if spectrum == VISIBLE:
        if raw.ndim == 2:
            raise IngestionError(f"visible image is single-channel: {path}")
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    else:
        if raw.ndim == 3:
            raw = cv2.cvtColor(raw, cv2.COLOR_BGR2GRAY)
        raw = raw[:, :, None]
    return raw.astype(np.float64) / 255.0


def scan_dataset(root_path) -> tuple[list[CaptureRecord], list[str]]:
    """Load all records, collecting pairing problems instead of raising.

    Returns (records, problems); records include orphans' counterparts only
    when both spectra are present.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise IngestionError(f"dataset root does not exist: {root}")

    found: dict[tuple[int, int, str], Path] = {}
    for path in sorted(root.rglob("*.png")):
        m = _FILE_RE.match(path.name)
        if not m:
            continue
        identity, variation = int(m.group(1)), int(m.group(2))
        spectrum = VISIBLE if m.group(3) == "vis" else THERMAL
        found[(identity, variation, spectrum)] = path

    problems = []
    records = []
    for (identity, variation, spectrum), path in sorted(found.items()):
        other = VISIBLE if spectrum == THERMAL else THERMAL
        if (identity, variation, other) not in found:
            problems.append(
                f"missing {other} counterpart for (identity {identity}, "
                f"variation {variation}): orphan {path}"
            )
            continue
        pixels = _read_image(path, spectrum)
        records.append(
            CaptureRecord(identity, variation, spectrum, pixels, str(path))
        )
    records.sort(key=lambda r: (r.identity_id, r.variation_id, r.spectrum))
    return records, problems


def load_dataset(root_path) -> list[CaptureRecord]:
    """Load the corpus, raising on the first pairing problem."""
    records, problems = scan_dataset(root_path)
    if problems:
        raise PairingError(problems[0])
    return records


def _resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[0] == size and image.shape[1] == size:
        return image.copy()
    squeeze = image.ndim == 3 and image.shape[2] == 1
    src = image[:, :, 0] if squeeze else image
    out = cv2.resize(src, (size, size), interpolation=cv2.INTER_LINEAR)
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, None] if squeeze else out


def _center_crop_square(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top : top + side, left : left + side]


def preprocess_pair(
    thermal: CaptureRecord, visible: CaptureRecord, size: int = NETWORK_SIZE
) -> ImagePair:
    """Resize both captures to the network resolution; no alignment applied.

    The thermal capture is center-cropped to square (the sensor is wider
    than tall), bilinearly resized, and its channel replicated to 3.
    """
    if thermal.spectrum != THERMAL or visible.spectrum != VISIBLE:
        raise PairingError("preprocess_pair expects (thermal, visible) records")
    if (thermal.identity_id, thermal.variation_id) != (
        visible.identity_id,
        visible.variation_id,
    ):
        raise PairingError(
            f"identity/variation mismatch: thermal ({thermal.identity_id}, "
            f"{thermal.variation_id}) vs visible ({visible.identity_id}, "
            f"{visible.variation_id})"
        )
    th = _resize_bilinear(_center_crop_square(thermal.pixels), size)
    th3 = np.repeat(th, 3, axis=2)
    vis = _resize_bilinear(visible.pixels, size)
    return ImagePair(th3, vis, thermal.identity_id, thermal.variation_id)


def is_dark(visible: CaptureRecord, threshold: float = DARK_THRESHOLD) -> bool:
    """True when the visible capture is (nearly) completely dark."""
    if visible.spectrum != VISIBLE:
        raise PairingError("is_dark expects a visible record")
    return float(luminance(visible.pixels).mean()) < threshold


def make_folds(identities, k: int, seed: int) -> FoldPlan:
    """Identity-disjoint k-fold split, deterministic per seed."""
    ids = sorted(identities)
    if k < 2:
        raise ConfigurationError(f"fold count must be >= 2, got {k}")
    if len(ids) % k != 0:
        raise ConfigurationError(
            f"{len(ids)} identities not divisible into {k} folds"
        )
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    per_fold = len(ids) // k
    folds = []
    for i in range(k):
        test = frozenset(shuffled[i * per_fold : (i + 1) * per_fold])
        train = frozenset(ids) - test
        folds.append(Fold(train, test))
    return FoldPlan(seed=seed, folds=folds)


def index_records(records) -> dict[tuple[int, int, str], CaptureRecord]:
    return {(r.identity_id, r.variation_id, r.spectrum): r for r in records}


def pairs_for_identities(
    records,
    identities,
    exclude_dark: bool,
    size: int = NETWORK_SIZE,
    dark_threshold: float = DARK_THRESHOLD,
) -> list[ImagePair]:
    by_key = index_records(records)
    pairs = []
    for (identity, variation, spectrum), rec in sorted(by_key.items()):
        if spectrum != THERMAL or identity not in identities:
            continue
        vis = by_key.get((identity, variation, VISIBLE))
        if vis is None:
            raise PairingError(
                f"missing visible counterpart for (identity {identity}, "
                f"variation {variation})"
            )
        if exclude_dark and is_dark(vis, dark_threshold):
            continue
        pairs.append(preprocess_pair(rec, vis, size))
    return pairs


def training_pairs(
    records,
    fold: Fold,
    exclude_dark: bool = True,
    size: int = NETWORK_SIZE,
    dark_threshold: float = DARK_THRESHOLD,
) -> list[ImagePair]:
    """Preprocessed pairs for the fold's training identities."""
    return pairs_for_identities(
        records, fold.train_identities, exclude_dark, size, dark_threshold
    )

import cv2
import numpy as np
import pytest

from therm2vis import dataset as ds
from therm2vis.perceptual import random_net


def smooth_image(seed: int, channels: int, size: int = 128) -> np.ndarray:
    """Band-limited random image; closer to a face photo than pixel noise."""
    rng = np.random.default_rng(seed)
    img = rng.random((size, size, channels))
    img = cv2.GaussianBlur(img, (0, 0), size / 21).reshape(size, size, -1)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def make_record(identity, variation, spectrum, pixels=None, size=16, value=None, seed=0):
    channels = 3 if spectrum == ds.VISIBLE else 1
    if pixels is None:
        if value is not None:
            pixels = np.full((size, size, channels), value, dtype=np.float64)
        else:
            rng = np.random.default_rng(seed + identity * 100 + variation)
            pixels = rng.random((size, size, channels))
    return ds.CaptureRecord(identity, variation, spectrum, pixels, "")


def synthetic_records(
    n_identities, n_variations, size=16, dark_variation=None, seed=0
):
    """In-memory corpus; `dark_variation` makes that variation's visible dark."""
    records = []
    for identity in range(n_identities):
        for variation in range(1, n_variations + 1):
            rng = np.random.default_rng(seed + identity * 1000 + variation)
            vis = rng.random((size, size, 3))
            if variation == dark_variation:
                vis = vis * 0.01
            records.append(
                ds.CaptureRecord(identity, variation, ds.VISIBLE, vis, "")
            )
            records.append(
                ds.CaptureRecord(
                    identity, variation, ds.THERMAL, rng.random((size, size, 1)), ""
                )
            )
    return records


def write_corpus(root, n_identities, n_variations, size=16, skip=()):
    """PNG corpus in the on-disk layout; `skip` drops (id, var, kind) files."""
    rng = np.random.default_rng(0)
    for identity in range(n_identities):
        d = root / str(identity)
        d.mkdir(parents=True, exist_ok=True)
        for variation in range(1, n_variations + 1):
            vis = (rng.random((size, size, 3)) * 255).astype(np.uint8)
            thm = (rng.random((size, size)) * 255).astype(np.uint8)
            if (identity, variation, "vis") not in skip:
                cv2.imwrite(str(d / f"{identity}_{variation}_vis.png"), vis)
            if (identity, variation, "thm") not in skip:
                cv2.imwrite(str(d / f"{identity}_{variation}_thm.png"), thm)


@pytest.fixture(scope="session")
def frozen_net():
    return random_net(0)

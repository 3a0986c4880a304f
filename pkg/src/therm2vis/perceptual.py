"""Frozen 19-layer perceptual network and intermediate feature extraction.

The network follows the standard 19-layer convolutional architecture
(16 conv layers in 5 blocks separated by 2x2 max pooling). Features are
taken post-activation at canonically named layers (conv1_1 .. conv5_4).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, WeightsError

# Channel widths per conv layer; "M" marks a pooling stage.
_ARCH = [
    ("conv1_1", 64), ("conv1_2", 64), "M",
    ("conv2_1", 128), ("conv2_2", 128), "M",
    ("conv3_1", 256), ("conv3_2", 256), ("conv3_3", 256), ("conv3_4", 256), "M",
    ("conv4_1", 512), ("conv4_2", 512), ("conv4_3", 512), ("conv4_4", 512), "M",
    ("conv5_1", 512), ("conv5_2", 512), ("conv5_3", 512), ("conv5_4", 512), "M",
]

LAYER_NAMES = [item[0] for item in _ARCH if item != "M"]

# Per-channel statistics of the pretraining corpus (RGB).
INPUT_MEAN = (0.485, 0.456, 0.406)
INPUT_STD = (0.229, 0.224, 0.225)


@dataclass
class FeatureStack:
    """Per-layer feature grids (C x H x W tensors) for one image."""

    layers: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.layers[name]

    def names(self):
        return list(self.layers)


class PerceptualNet(nn.Module):
    """Frozen feature extractor; weights never receive gradient updates."""

    def __init__(self):
        super().__init__()
        convs = {}
        in_ch = 3
        for item in _ARCH:
            if item == "M":
                continue
            name, out_ch = item
            convs[name] = nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)
            in_ch = out_ch
        self.convs = nn.ModuleDict(convs)
        self.weights_digest = None

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    def forward_features(self, x: torch.Tensor, layers) -> dict:
        """Run the stack, returning post-activation grids for `layers`.

        Stops at the deepest requested layer.
        """
        unknown = [l for l in layers if l not in self.convs]
        if unknown:
            raise ContractError(f"unknown layer name(s): {unknown}")
        wanted = set(layers)
        out = {}
        for item in _ARCH:
            if item == "M":
                x = F.max_pool2d(x, kernel_size=2, stride=2)
                continue
            name, _ = item
            x = F.relu(self.convs[name](x))
            if name in wanted:
                out[name] = x
                wanted.discard(name)
                if not wanted:
                    break
        return out


def _iter_param_shapes():
    in_ch = 3
    for item in _ARCH:
        if item == "M":
            continue
        name, out_ch = item
        yield f"{name}.weight", (out_ch, in_ch, 3, 3)
        yield f"{name}.bias", (out_ch,)
        in_ch = out_ch


def _canonicalize_state_dict(state: dict) -> dict:
    """Accept canonical conv-name keys or torchvision `features.N.*` keys."""
    if any(k.startswith("features.") for k in state):
        conv_indices = []
        idx = 0
        for item in _ARCH:
            if item == "M":
                idx += 1  # pooling layer
                continue
            conv_indices.append(idx)
            idx += 2  # conv + relu
        mapped = {}
        for name, fidx in zip(LAYER_NAMES, conv_indices):
            for kind in ("weight", "bias"):
                key = f"features.{fidx}.{kind}"
                if key in state:
                    mapped[f"{name}.{kind}"] = state[key]
        return mapped
    return {k: v for k, v in state.items() if k.split(".")[0] in LAYER_NAMES}


def load_pretrained(weights_path, expected_sha256: str | None = None) -> PerceptualNet:
    """Load a frozen perceptual network from a saved state dict.

    The file's content digest is recorded on the returned network; when
    `expected_sha256` is given, a mismatch is an error.
    """
    digest = hashlib.sha256(open(weights_path, "rb").read()).hexdigest()
    if expected_sha256 is not None and digest != expected_sha256:
        raise WeightsError(
            f"weights digest mismatch: got {digest}, expected {expected_sha256}"
        )
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    state = _canonicalize_state_dict(state)

    for key, shape in _iter_param_shapes():
        if key not in state:
            raise WeightsError(f"missing parameter {key}")
        got = tuple(state[key].shape)
        if got != shape:
            raise WeightsError(f"shape mismatch for {key}: got {got}, expected {shape}")

    net = PerceptualNet()
    net.convs.load_state_dict(state)
    net.weights_digest = digest
    return net.freeze()


def save_weights(net: PerceptualNet, path) -> None:
    torch.save(net.convs.state_dict(), path)


def random_net(seed: int) -> PerceptualNet:
    """Seeded randomly initialized network (fan-in scaled), frozen.

    Stands in when canonical pretrained weights are not on disk; feature
    grids are still informative as fixed random projections.
    """
    net = PerceptualNet()
    gen = torch.Generator().manual_seed(seed)
    for name in LAYER_NAMES:
        conv = net.convs[name]
        fan_in = conv.weight.shape[1] * 9
        with torch.no_grad():
            conv.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
            conv.bias.zero_()
    net.weights_digest = f"random-seed-{seed}"
    return net.freeze()


def to_tensor(image: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """H x W x 3 array in [0, 1] -> (3, H, W) tensor."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractError(f"expected H x W x 3 image, got shape {image.shape}")
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(dtype)


def normalize_for_net(image: torch.Tensor) -> torch.Tensor:
    """Center by the pretraining corpus channel means and scale by its stds.

    Input: (3, H, W) tensor in [0, 1].
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractError(f"expected (3, H, W) tensor, got shape {tuple(image.shape)}")
    values = image.detach()
    if float(values.min()) < -1e-6 or float(values.max()) > 1.0 + 1e-6:
        raise ContractError("input values must lie in [0, 1]")
    mean = torch.tensor(INPUT_MEAN, dtype=image.dtype).view(3, 1, 1)
    std = torch.tensor(INPUT_STD, dtype=image.dtype).view(3, 1, 1)
    return (image - mean) / std


def extract(net: PerceptualNet, image, layers) -> FeatureStack:
    """Feature grids for `layers`; differentiable w.r.t. the input image."""
    if isinstance(image, np.ndarray):
        image = to_tensor(image)
    x = normalize_for_net(image).unsqueeze(0)
    grids = net.forward_features(x, list(layers))
    return FeatureStack({name: grid[0] for name, grid in grids.items()})

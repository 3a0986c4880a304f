"""Contextual similarity between feature sets and the two-term training loss.

Convention fixed here and relied on by the tests: in the distance matrix,
rows index the generated feature set and columns the reference set. The
similarity aggregates, per reference feature (column), the best normalized
affinity over generated features (max over rows), then averages over
columns. Being built from min/softmax/max/mean it is blind to feature
order, hence to spatial position.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ContractError
from .perceptual import FeatureStack, extract, to_tensor

DEFAULT_SOURCE_LAYERS = ("conv4_2",)
DEFAULT_TARGET_LAYERS = ("conv3_2", "conv4_2")


@dataclass
class LossConfig:
    lambda1: float = 0.01
    lambda2: float = 0.99
    source_layers: tuple = DEFAULT_SOURCE_LAYERS
    target_layers: tuple = DEFAULT_TARGET_LAYERS
    h: float = 0.5
    epsilon: float = 1e-5
    feature_cap: int = 1024
    subsample_seed: int = 0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda1 + self.lambda2 <= 0:
            raise ContractError("loss weights must be nonnegative with positive sum")
        if self.h <= 0 or self.epsilon <= 0:
            raise ContractError("bandwidth and epsilon must be positive")
        if self.feature_cap < 1:
            raise ContractError("feature cap must be >= 1")
        self.source_layers = tuple(self.source_layers)
        self.target_layers = tuple(self.target_layers)


def subsample_indices(n: int, cap: int, seed: int) -> np.ndarray:
    """Deterministic choice of positions kept from a flattened grid."""
    if n <= cap:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=cap, replace=False))


def flatten_and_subsample(
    stack: FeatureStack, layer: str, cap: int, seed: int
) -> torch.Tensor:
    """Flatten one layer's grid (C, H, W) to (N, C), capping N per seed."""
    grid = stack[layer]
    c = grid.shape[0]
    flat = grid.reshape(c, -1).transpose(0, 1)
    idx = subsample_indices(flat.shape[0], cap, seed)
    return flat[torch.from_numpy(idx)]


def distance_matrix(x: torch.Tensor, y: torch.Tensor, epsilon: float = 1e-5) -> torch.Tensor:
    """Cosine distances between x and y after centering both by y's mean."""
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ContractError(
            f"feature sets must be (N, C)/(M, C) with equal C, got "
            f"{tuple(x.shape)} and {tuple(y.shape)}"
        )
    if y.shape[0] == 0:
        raise ContractError("reference feature set is empty")
    mu = y.mean(dim=0, keepdim=True)
    xc = x - mu
    yc = y - mu
    xn = xc / (xc.norm(dim=1, keepdim=True) + epsilon)
    yn = yc / (yc.norm(dim=1, keepdim=True) + epsilon)
    return (1.0 - xn @ yn.T).clamp(min=0.0)


def contextual_similarity(
    d: torch.Tensor, h: float = 0.5, epsilon: float = 1e-5
) -> torch.Tensor:
    """Scalar similarity in (0, 1] from a nonnegative distance matrix."""
    dmin = d.min(dim=1, keepdim=True).values
    dtil = d / (dmin + epsilon)
    w = torch.exp((1.0 - dtil) / h)
    a = w / w.sum(dim=1, keepdim=True)
    return a.max(dim=0).values.mean()


def cx_loss(g_feats: torch.Tensor, ref_feats: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Negative log contextual similarity of generated vs reference features."""
    if g_feats.shape[0] == 0:
        raise ContractError("generated feature set is empty")
    d = distance_matrix(g_feats, ref_feats, cfg.epsilon)
    return -torch.log(contextual_similarity(d, cfg.h, cfg.epsilon))


def _layer_seed(base: int, layer: str) -> int:
    return (base + zlib.crc32(layer.encode())) % (2**32)


def _as_image_tensor(img, requires_grad=False):
    if isinstance(img, np.ndarray):
        img = to_tensor(img)
    if img.ndim != 3 or img.shape[0] != 3 or img.shape[1] != img.shape[2]:
        raise ContractError(f"expected square (3, H, W) image, got {tuple(img.shape)}")
    return img


def total_loss(s_img, t_img, g_img, net, cfg: LossConfig):
    """Two-term loss: lambda1 * source term + lambda2 * target term.

    Layers within each term are summed with equal weight. Returns the loss
    tensor (differentiable w.r.t. g_img) and a float breakdown.
    """
    g_img = _as_image_tensor(g_img)
    s_img = _as_image_tensor(s_img)
    t_img = _as_image_tensor(t_img)

    layers = sorted(set(cfg.source_layers) | set(cfg.target_layers))
    g_stack = extract(net, g_img, layers)
    with torch.no_grad():
        s_stack = extract(net, s_img, cfg.source_layers)
        t_stack = extract(net, t_img, cfg.target_layers)

    def term(ref_stack, names):
        total = g_img.new_zeros(())
        for layer in names:
            seed = _layer_seed(cfg.subsample_seed, layer)
            g = flatten_and_subsample(g_stack, layer, cfg.feature_cap, seed)
            r = flatten_and_subsample(ref_stack, layer, cfg.feature_cap, seed)
            total = total + cx_loss(g, r, cfg)
        return total

    source_term = term(s_stack, cfg.source_layers)
    target_term = term(t_stack, cfg.target_layers)
    total = cfg.lambda1 * source_term + cfg.lambda2 * target_term
    breakdown = {
        "source": float(source_term.detach()),
        "target": float(target_term.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown

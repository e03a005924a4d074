"""Differentiable building blocks: point-set encoders, adaptive normalization,
style-to-normalization mapping networks, the folding decoder and the
discriminator.

All blocks are plain torch modules; reverse-mode gradients come from autograd
and are validated against finite differences in the test suite. Shapes follow
the (B, N, 3) convention for point batches.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class ShapeMismatchError(ValueError):
    """Raised when an input does not match a block's configured shape."""


def adanorm(features, gamma, beta, mode="batch", eps=1e-5):
    """Normalize per-point features and apply a style-dependent affine.

    features: (B, N, C). gamma/beta: (C,) or (B, C).
    "batch" mode normalizes each channel over all points of the whole batch,
    "instance" mode over the points of each instance separately. Statistics
    are always the current ones; no running averages are kept.
    """
    if features.dim() != 3:
        raise ShapeMismatchError("features must be (B, N, C)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    channels = features.shape[2]
    if gamma.shape[-1] != channels or beta.shape[-1] != channels:
        raise ShapeMismatchError(
            f"gamma/beta have {gamma.shape[-1]} channels, features have {channels}"
        )
    if mode == "batch":
        mean = features.mean(dim=(0, 1), keepdim=True)
        var = features.var(dim=(0, 1), unbiased=False, keepdim=True)
    elif mode == "instance":
        mean = features.mean(dim=1, keepdim=True)
        var = features.var(dim=1, unbiased=False, keepdim=True)
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    normed = (features - mean) / torch.sqrt(var + eps)
    if gamma.dim() == 1:
        gamma = gamma.unsqueeze(0)
        beta = beta.unsqueeze(0)
    return gamma.unsqueeze(1) * normed + beta.unsqueeze(1)


@dataclass
class AdaNormParams:
    """Per-layer (gamma, beta) pairs consumed by the decoder's norm layers.

    Each entry is (B, C_l) for the l-th adaptive layer, batch-broadcastable.
    """

    gammas: tuple
    betas: tuple

    @classmethod
    def identity(cls, layer_channels, batch=1, dtype=torch.float32, device=None):
        gammas = tuple(torch.ones(batch, c, dtype=dtype, device=device) for c in layer_channels)
        betas = tuple(torch.zeros(batch, c, dtype=dtype, device=device) for c in layer_channels)
        return cls(gammas=gammas, betas=betas)

    def channels(self):
        return tuple(g.shape[-1] for g in self.gammas)

    def __len__(self):
        return len(self.gammas)


class PointNetEncoder(nn.Module):
    """Shared per-point MLP, channelwise max pool, final affine.

    Per-point layers are order-free, so the output is exactly invariant to
    point permutations. `point_features` exposes the pre-pool activations of
    every per-point layer (the taps used by the perceptual metric).
    """

    def __init__(self, out_dim, widths=(64, 128)):
        super().__init__()
        if out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        dims = (3,) + tuple(widths) + (out_dim,)
        self.point_layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1)
        )
        self.head = nn.Linear(out_dim, out_dim)
        self.out_dim = out_dim

    def point_features(self, x):
        if x.dim() != 3 or x.shape[2] != 3:
            raise ShapeMismatchError("expected point batch of shape (B, N, 3)")
        taps = []
        h = x
        for layer in self.point_layers:
            h = F.relu(layer(h))
            taps.append(h)
        return taps

    def forward(self, x):
        h = self.point_features(x)[-1]
        pooled = h.max(dim=1).values  # (B, out_dim)
        return self.head(pooled)


class MappingNetwork(nn.Module):
    """Style code -> concatenated (gamma, beta) pairs for every decoder layer.

    Two (affine -> dropout -> ReLU) blocks followed by a final affine. The
    scale is emitted as 1 + raw output, so a zeroed head yields identity
    normalization.
    """

    def __init__(self, style_dim, layer_channels, hidden=256, dropout=0.2):
        super().__init__()
        self.style_dim = style_dim
        self.layer_channels = tuple(layer_channels)
        out_total = 2 * sum(self.layer_channels)
        self.blocks = nn.Sequential(
            nn.Linear(style_dim, hidden),
            nn.Dropout(dropout),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.Dropout(dropout),
            nn.ReLU(),
        )
        self.head = nn.Linear(hidden, out_total)

    def forward(self, s):
        if s.dim() == 1:
            s = s.unsqueeze(0)
        if s.shape[-1] != self.style_dim:
            raise ShapeMismatchError(
                f"style code has {s.shape[-1]} dims, expected {self.style_dim}"
            )
        raw = self.head(self.blocks(s))
        gammas, betas = [], []
        offset = 0
        for c in self.layer_channels:
            gammas.append(1.0 + raw[:, offset : offset + c])
            betas.append(raw[:, offset + c : offset + 2 * c])
            offset += 2 * c
        return AdaNormParams(gammas=tuple(gammas), betas=tuple(betas))


def _grid_uv(per_primitive, dtype, device):
    """Deterministic lattice in [0,1]^2 with `per_primitive` points.

    Uses a g x g grid when the count is a perfect square, otherwise the first
    `per_primitive` points of the smallest covering lattice.
    """
    g = int(np.sqrt(per_primitive))
    if g * g == per_primitive:
        rows, cols = g, g
    else:
        rows = max(g, 1)
        cols = -(-per_primitive // rows)
    u = torch.linspace(0.0, 1.0, cols, dtype=dtype, device=device)
    v = torch.linspace(0.0, 1.0, rows, dtype=dtype, device=device)
    uv = torch.cartesian_prod(v, u).flip(-1)  # row-major (u fastest)
    return uv[:per_primitive]


class FoldingDecoder(nn.Module):
    """Folds 2D primitive patches into 3D, conditioned through AdaNorm layers.

    Each primitive owns an MLP (content_dim + 2 -> hidden... -> 3, tanh); the
    gamma/beta of the l-th hidden layer are shared across primitives. UV
    points are random per seed (training) or a fixed lattice (seed None).
    """

    def __init__(self, content_dim, hidden=(512, 256, 128), primitives=4,
                 norm_mode="batch", eps=1e-5):
        super().__init__()
        if norm_mode not in ("batch", "instance"):
            raise ValueError(f"unknown normalization mode {norm_mode!r}")
        self.content_dim = content_dim
        self.layer_channels = tuple(hidden)
        self.primitives = primitives
        self.norm_mode = norm_mode
        self.eps = eps
        dims = (content_dim + 2,) + self.layer_channels
        self.patch_mlps = nn.ModuleList()
        for _ in range(primitives):
            layers = nn.ModuleList(
                nn.Linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1)
            )
            layers.append(nn.Linear(dims[-1], 3))
            self.patch_mlps.append(layers)

    def _check(self, adp, n_points):
        if n_points % self.primitives != 0:
            raise ValueError("points per primitive: n_points must be divisible by primitives")
        if adp.channels() != self.layer_channels:
            raise ShapeMismatchError(
                f"adanorm channels {adp.channels()} do not match decoder layers {self.layer_channels}"
            )

    def forward(self, c, adp, n_points, seed=None):
        if c.dim() == 1:
            c = c.unsqueeze(0)
        if c.shape[-1] != self.content_dim:
            raise ShapeMismatchError(
                f"content code has {c.shape[-1]} dims, expected {self.content_dim}"
            )
        self._check(adp, n_points)
        batch = c.shape[0]
        npp = n_points // self.primitives
        gen = None
        if seed is not None:
            gen = torch.Generator()
            gen.manual_seed(int(seed))
        patches = []
        for p, layers in enumerate(self.patch_mlps):
            if gen is None:
                uv = _grid_uv(npp, c.dtype, c.device).expand(batch, npp, 2)
            else:
                uv = torch.rand(batch, npp, 2, generator=gen, dtype=c.dtype, device=c.device)
            h = torch.cat([uv, c.unsqueeze(1).expand(batch, npp, c.shape[-1])], dim=-1)
            for l, linear in enumerate(layers[:-1]):
                h = linear(h)
                h = adanorm(h, adp.gammas[l], adp.betas[l], mode=self.norm_mode, eps=self.eps)
                h = F.relu(h)
            patches.append(torch.tanh(layers[-1](h)))
        return torch.cat(patches, dim=1)  # (B, n_points, 3)

    def grid_faces(self, n_points):
        """Fixed triangulation of the per-primitive UV lattice (mesh mode)."""
        npp = n_points // self.primitives
        g = int(np.sqrt(npp))
        if g * g != npp or n_points % self.primitives != 0:
            raise ValueError("points per primitive: mesh mode needs a square per-primitive grid")
        faces = []
        for p in range(self.primitives):
            base = p * npp
            for r in range(g - 1):
                for col in range(g - 1):
                    v = base + r * g + col
                    faces.append((v, v + 1, v + g + 1))
                    faces.append((v, v + g + 1, v + g))
        return np.asarray(faces, dtype=np.int64)


class Discriminator(nn.Module):
    """Point-set encoder to a bottleneck, then a 3-block MLP to a real score."""

    def __init__(self, bottleneck=1024, widths=(512, 256, 128),
                 encoder_widths=(64, 128), dropout=0.2):
        super().__init__()
        self.encoder = PointNetEncoder(bottleneck, widths=encoder_widths)
        blocks = []
        dims = (bottleneck,) + tuple(widths)
        for i in range(len(widths)):
            blocks += [nn.Linear(dims[i], dims[i + 1]), nn.Dropout(dropout), nn.ReLU()]
        self.mlp = nn.Sequential(*blocks, nn.Linear(dims[-1], 1))

    def forward(self, x):
        return self.mlp(self.encoder(x)).squeeze(-1)  # (B,)


def init_parameters(module, seed=0):
    """Deterministic re-initialization: Kaiming-uniform fan-in weights, zero biases."""
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Linear):
                fan_in = m.weight.shape[1]
                bound = float(np.sqrt(6.0 / fan_in))
                # uniform_ draws in flattened order, stable across runs
                m.weight.uniform_(-bound, bound, generator=gen)
                m.bias.zero_()
    return module

"""The two-branch learned colour quantiser.

One branch annotates every pixel with a colour index (soft per-pixel
probabilities during training, hard argmax at test time); the other
detects the palette itself, treating palette generation as key-point
localisation in RGB space: C learnable query vectors cross-attend image
features and decode to C colours in [0,1]^3.

Train path:   x_quant = m_tau(x) (x) P(x)   (convex per-pixel mixes)
Test path:    x_quant = one_hot(argmax) (x) P(x)   (<= C distinct colours)
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .colour import validate_rgb_image

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# differentiable colour helpers (gradient-safe masked divisions)


def torch_rgb_to_hsv(x: torch.Tensor) -> torch.Tensor:
    """Hexcone RGB -> HSV on a (B, 3, H, W) tensor; hue in radians.

    Matches :func:`cqlab.colour.rgb_to_hsv` and is differentiable away
    from sector boundaries; achromatic pixels get hue 0 with zero gradient.
    """
    r, g, b = x[:, 0], x[:, 1], x[:, 2]
    v, _ = x.max(dim=1)
    mn, _ = x.min(dim=1)
    delta = v - mn
    chromatic = delta > 0
    safe_delta = torch.where(chromatic, delta, torch.ones_like(delta))

    hr = torch.remainder((g - b) / safe_delta, 6.0)
    hg = (b - r) / safe_delta + 2.0
    hb = (r - g) / safe_delta + 4.0
    sector = torch.where(r == v, hr, torch.where(g == v, hg, hb))
    h = torch.remainder(
        torch.where(chromatic, sector * (math.pi / 3.0), torch.zeros_like(sector)), TWO_PI
    )

    positive = v > 0
    s = torch.where(positive, delta / torch.where(positive, v, torch.ones_like(v)),
                    torch.zeros_like(v))
    return torch.stack([h, s, v], dim=1)


def torch_hsv_to_cone(hsv: torch.Tensor) -> torch.Tensor:
    """(h, s, v) -> (s*v*cos h, s*v*sin h, v) on a (B, 3, H, W) tensor."""
    h, s, v = hsv[:, 0], hsv[:, 1], hsv[:, 2]
    sv = s * v
    return torch.stack([sv * torch.cos(h), sv * torch.sin(h), v], dim=1)


# ---------------------------------------------------------------------------
# deterministic initialisation


def _init_conv_linear(module: nn.Module, gen: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight.shape[1] * (
                m.weight.shape[2] * m.weight.shape[3] if m.weight.dim() == 4 else 1
            )
            with torch.no_grad():
                m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()


# ---------------------------------------------------------------------------
# encoder contract and the default small U-shaped encoder


class UShapedEncoder(nn.Module):
    """Default per-pixel annotator: two downsampling stages with skip
    connections, ~100k parameters at width 16. Input spatial dims must be
    multiples of 4; output has one channel per colour."""

    def __init__(self, n_colours: int, width: int = 16):
        super().__init__()
        w = width
        self.stem = nn.Conv2d(3, w, 3, padding=1)
        self.down1 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.mid = nn.Conv2d(4 * w, 4 * w, 3, padding=1)
        self.up1 = nn.Conv2d(4 * w, 2 * w, 3, padding=1)
        self.fuse1 = nn.Conv2d(4 * w, 2 * w, 3, padding=1)
        self.up2 = nn.Conv2d(2 * w, w, 3, padding=1)
        self.fuse2 = nn.Conv2d(2 * w, w, 3, padding=1)
        self.head = nn.Conv2d(w, n_colours, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s0 = F.relu(self.stem(x))
        s1 = F.relu(self.down1(s0))
        s2 = F.relu(self.down2(s1))
        z = F.relu(self.mid(s2))
        z = F.relu(self.up1(F.interpolate(z, scale_factor=2, mode="nearest")))
        z = F.relu(self.fuse1(torch.cat([z, s1], dim=1)))
        z = F.relu(self.up2(F.interpolate(z, scale_factor=2, mode="nearest")))
        z = F.relu(self.fuse2(torch.cat([z, s0], dim=1)))
        return self.head(z)


# ---------------------------------------------------------------------------
# palette branch


def cross_attention(queries: torch.Tensor, keys: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    """Single-head scaled dot-product attention: softmax(QK^T / sqrt(d)) V.

    Works on (C, d) against (N, d) or with a leading batch dimension.
    """
    d = queries.shape[-1]
    scores = queries @ keys.transpose(-2, -1) / math.sqrt(d)
    return torch.softmax(scores, dim=-1) @ values


class _FeedForward(nn.Module):
    def __init__(self, d_in: int, d_hidden: int, d_out: int):
        super().__init__()
        self.fc1 = nn.Linear(d_in, d_hidden)
        self.fc2 = nn.Linear(d_hidden, d_out)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class AttentionPalette(nn.Module):
    """Decode C learnable queries into C RGB colours by attending image
    features at 1/4 resolution. Positional encoding is a depth-wise
    convolution so any input resolution works."""

    def __init__(self, n_colours: int, query_dim: int = 64):
        super().__init__()
        d = query_dim
        self.queries = nn.Parameter(torch.empty(n_colours, d))
        self.stem1 = nn.Conv2d(3, d // 2, 3, stride=2, padding=1)
        self.stem2 = nn.Conv2d(d // 2, d, 3, stride=2, padding=1)
        self.pos = nn.Conv2d(d, d, 3, padding=1, groups=d)
        self.key_proj = nn.Linear(d, d)
        self.value_proj = nn.Linear(d, d)
        self.ffn = _FeedForward(d, 4 * d, d)
        self.decode = _FeedForward(d, 4 * d, 3)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        f0 = F.gelu(self.stem2(F.gelu(self.stem1(x))))
        f = f0 + self.pos(f0)
        return f.flatten(2).transpose(1, 2)  # (B, HW/16, d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.features(x)
        keys = self.key_proj(tokens)
        values = self.value_proj(tokens)
        q = self.queries.unsqueeze(0).expand(x.shape[0], -1, -1)
        embeddings = q + self.ffn(cross_attention(q, keys, values))
        return torch.sigmoid(self.decode(embeddings))  # (B, C, 3)


class GlobalPalette(nn.Module):
    """Ablation variant: a single learned palette shared by every image."""

    def __init__(self, n_colours: int):
        super().__init__()
        self.raw = nn.Parameter(torch.empty(n_colours, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.raw).unsqueeze(0).expand(x.shape[0], -1, -1)


# ---------------------------------------------------------------------------
# the assembled quantiser


class PaletteQuantizer(nn.Module):
    """Two-branch colour quantiser: per-pixel index annotation plus
    image-conditioned palette detection."""

    def __init__(
        self,
        n_colours: int,
        query_dim: int = 64,
        encoder_width: int = 16,
        palette_mode: str = "attention",
        encoder: nn.Module | None = None,
    ):
        super().__init__()
        if n_colours < 1:
            raise ValueError("n_colours must be >= 1")
        if palette_mode not in ("attention", "global"):
            raise ValueError(f"unknown palette_mode {palette_mode!r}")
        self.n_colours = n_colours
        self.query_dim = query_dim
        self.encoder_width = encoder_width
        self.palette_mode = palette_mode
        self.encoder = encoder if encoder is not None else UShapedEncoder(n_colours, encoder_width)
        if palette_mode == "attention":
            self.palette_branch: nn.Module = AttentionPalette(n_colours, query_dim)
        else:
            self.palette_branch = GlobalPalette(n_colours)

    def deterministic_init(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        _init_conv_linear(self, gen)
        with torch.no_grad():
            if isinstance(self.palette_branch, AttentionPalette):
                self.palette_branch.queries.normal_(
                    0.0, 1.0 / math.sqrt(self.query_dim), generator=gen
                )
            else:
                self.palette_branch.raw.normal_(0.0, 1.0, generator=gen)

    # -- padding ------------------------------------------------------------

    @staticmethod
    def _pad(x: torch.Tensor) -> tuple[torch.Tensor, int, int]:
        h, w = x.shape[-2:]
        if h < 4 or w < 4:
            raise ValueError(f"input must be at least 4 x 4, got {h} x {w}")
        ph, pw = (-h) % 4, (-w) % 4
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        return x, h, w

    # -- forward paths ------------------------------------------------------

    def activation_map(self, x: torch.Tensor) -> torch.Tensor:
        """Per-pixel class scores, (B, C, H, W) matching the input dims."""
        padded, h, w = self._pad(x)
        return self.encoder(padded)[..., :h, :w]

    def palette(self, x: torch.Tensor) -> torch.Tensor:
        """Image-conditioned palette, (B, C, 3) in (0, 1)."""
        padded, _, _ = self._pad(x)
        return self.palette_branch(padded)

    def quantise_train_batch(
        self, x: torch.Tensor, tau: float
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Soft quantisation: returns (x_quant, probability map, palette)."""
        if tau <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < tau < 1.0:
            warnings.warn(
                f"temperature {tau} outside (0, 1); soft assignments will be diffuse",
                stacklevel=2,
            )
        act = self.activation_map(x)
        m = torch.softmax(act / tau, dim=1)
        pal = self.palette(x)
        xq = torch.einsum("bchw,bcd->bdhw", m, pal)
        return xq, m, pal

    def quantise_test_batch(
        self, x: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Hard quantisation: returns (x_quant, index map, palette)."""
        act = self.activation_map(x)
        idx = tie_safe_argmax(act)
        pal = self.palette(x)
        one_hot = F.one_hot(idx, self.n_colours).to(pal.dtype).permute(0, 3, 1, 2)
        xq = torch.einsum("bchw,bcd->bdhw", one_hot, pal)
        return xq, idx, pal


def tie_safe_argmax(act: torch.Tensor) -> torch.Tensor:
    """Channel argmax over dim 1 with ties resolved to the lowest index."""
    c = act.shape[1]
    max_vals = act.max(dim=1, keepdim=True).values
    is_max = act == max_vals
    rank = torch.arange(c, 0, -1, device=act.device, dtype=act.dtype).view(1, c, 1, 1)
    return torch.argmax(is_max.to(act.dtype) * rank, dim=1)


def build_model(
    n_colours: int,
    query_dim: int = 64,
    encoder_width: int = 16,
    palette_mode: str = "attention",
    seed: int = 0,
) -> PaletteQuantizer:
    """Construct a quantiser with bit-reproducible initial parameters."""
    model = PaletteQuantizer(n_colours, query_dim, encoder_width, palette_mode)
    model.deterministic_init(seed)
    return model


# ---------------------------------------------------------------------------
# numpy-facing operations on single images


def softmax_with_temperature(activation: np.ndarray, tau: float) -> np.ndarray:
    """Per-pixel softmax of (H, W, C) scores divided by the temperature."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    a = np.asarray(activation, dtype=np.float64)
    shifted = (a - a.max(axis=-1, keepdims=True)) / tau
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_index_map(activation: np.ndarray) -> np.ndarray:
    """Per-pixel channel argmax of (H, W, C) scores; ties to the lowest index.

    Softmax is omitted: it never changes the per-pixel argmax.
    """
    return np.argmax(np.asarray(activation), axis=-1)


def _to_batch(img: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    arr = validate_rgb_image(img)
    return torch.from_numpy(arr).to(dtype).permute(2, 0, 1).unsqueeze(0)


def palette_acquire(model: PaletteQuantizer, img: np.ndarray) -> np.ndarray:
    """Detect the image's palette; returns (C, 3) floats in (0, 1)."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        return model.palette(_to_batch(img, dtype))[0].numpy().astype(np.float64)


def quantise_train(
    model: PaletteQuantizer, img: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Soft-quantise one image; returns (image, H x W x C probability map, palette)."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        xq, m, pal = model.quantise_train_batch(_to_batch(img, dtype), tau)
    return (
        xq[0].permute(1, 2, 0).numpy().astype(np.float64),
        m[0].permute(1, 2, 0).numpy().astype(np.float64),
        pal[0].numpy().astype(np.float64),
    )


def quantise_test(
    model: PaletteQuantizer, img: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hard-quantise one image; returns (image, H x W index map, palette)."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        xq, idx, pal = model.quantise_test_batch(_to_batch(img, dtype))
    return (
        xq[0].permute(1, 2, 0).numpy().astype(np.float64),
        idx[0].numpy(),
        pal[0].numpy().astype(np.float64),
    )

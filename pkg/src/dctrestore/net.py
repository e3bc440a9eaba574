"""The coefficient recovery network.

A dual-branch transformer over collocated DCT maps: each block pairs
shifted-window attention across the spatial grid with attention across the
64-frequency channel tokens, fuses the branches by channel concatenation
and a 3x3 convolution, and sits inside residual groups with a global skip.
A luminance-chrominance head unifies full-size luma and half-size chroma
maps into one feature grid; the final projection is zero-initialized so an
untrained model reproduces the plain JPEG decode exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import InitKind, Parameter, Tensor
from .blockdct import (
    Colorspace,
    ComponentKind,
    PixelImage,
    QuantMatrix,
    QuantizedImage,
    Subsampling,
    idct_plane,
    ycbcr_planes_to_rgb,
)
from .collocate import CollocatedMap, chroma_dct_upsample, inverse_rearrange, qm_embed, rearrange
from .errors import (
    ChannelNotDivisibleByHead,
    ConfigMismatch,
    DimMismatch,
    DimNotDivisibleByWindow,
)

INPUT_SCALE = 1.0 / 1024.0  # coefficients live in roughly [-1024, 1023]


class Ablation(Enum):
    FULL = "full"
    PARALLEL_SPATIAL = "parallel_spatial"
    PARALLEL_FREQUENTIAL = "parallel_frequential"
    SUCCESSIVE = "successive"
    ADD_FUSION = "add_fusion"
    CONCAT_NO_CONV = "concat_no_conv"
    NO_QM = "no_qm"
    CONCAT_QM = "concat_qm"


@dataclass
class ModelConfig:
    embed_dim: int = 96
    window_size: int = 4
    num_blocks: int = 4
    units_per_block: int = 4
    d_head: int = 32
    mlp_ratio: float = 4.0
    grayscale: bool = False
    subsampling: Subsampling = Subsampling.S420
    ablation: Ablation = Ablation.FULL

    def __post_init__(self):
        if self.embed_dim % self.d_head:
            raise ChannelNotDivisibleByHead(
                f"embed_dim {self.embed_dim} not divisible by d_head {self.d_head}"
            )
        if self.window_size % 2:
            raise DimNotDivisibleByWindow(f"window_size {self.window_size} must be even")

    @property
    def heads(self) -> int:
        return self.embed_dim // self.d_head

    @property
    def in_channels(self) -> int:
        return 128 if self.ablation is Ablation.CONCAT_QM else 64

    @property
    def out_channels(self) -> int:
        return 64 if self.grayscale else 192

    def to_text(self) -> str:
        pairs = [
            ("embed_dim", self.embed_dim),
            ("window_size", self.window_size),
            ("num_blocks", self.num_blocks),
            ("units_per_block", self.units_per_block),
            ("d_head", self.d_head),
            ("mlp_ratio", self.mlp_ratio),
            ("grayscale", int(self.grayscale)),
            ("subsampling", self.subsampling.value),
            ("ablation", self.ablation.value),
        ]
        return "\n".join(f"{k}={v}" for k, v in pairs)

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if line and "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        return cls(
            embed_dim=int(kv["embed_dim"]),
            window_size=int(kv["window_size"]),
            num_blocks=int(kv["num_blocks"]),
            units_per_block=int(kv["units_per_block"]),
            d_head=int(kv["d_head"]),
            mlp_ratio=float(kv["mlp_ratio"]),
            grayscale=bool(int(kv["grayscale"])),
            subsampling=Subsampling(kv["subsampling"]),
            ablation=Ablation(kv["ablation"]),
        )


class _Registry:
    """Creates uniquely named parameters with deterministic initialization."""

    def __init__(self, rng: np.random.Generator, dtype):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Parameter] = {}

    def add(self, name: str, data: np.ndarray, kind: InitKind) -> Parameter:
        if name in self.params:
            raise ConfigMismatch(f"duplicate parameter name {name}")
        p = Parameter(name, Tensor(data.astype(self.dtype), requires_grad=True), kind)
        self.params[name] = p
        return p

    def weight(self, name: str, shape, zero: bool = False) -> Parameter:
        if zero:
            return self.add(name, np.zeros(shape), InitKind.ZERO)
        return self.add(name, ad.trunc_normal(self.rng, shape), InitKind.TRUNC_NORMAL)

    def bias(self, name: str, n: int) -> Parameter:
        return self.add(name, np.zeros(n), InitKind.ZERO)

    def ones(self, name: str, n: int) -> Parameter:
        return self.add(name, np.ones(n), InitKind.ZERO)


class _Conv3x3:
    def __init__(self, reg: _Registry, name: str, cin: int, cout: int, zero: bool = False):
        self.w = reg.weight(f"{name}.w", (cout, cin, 3, 3), zero=zero)
        self.b = reg.bias(f"{name}.b", cout)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w.tensor, self.b.tensor)


class _DepthwiseConv3x3:
    def __init__(self, reg: _Registry, name: str, c: int):
        self.w = reg.weight(f"{name}.w", (c, 1, 3, 3))
        self.b = reg.bias(f"{name}.b", c)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w.tensor, self.b.tensor, depthwise=True)


class _TransposeConv2x2:
    def __init__(self, reg: _Registry, name: str, cin: int, cout: int):
        self.w = reg.weight(f"{name}.w", (cin, cout, 2, 2))
        self.b = reg.bias(f"{name}.b", cout)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.transpose_conv2d(x, self.w.tensor, self.b.tensor)


class _Linear:
    def __init__(self, reg: _Registry, name: str, nin: int, nout: int):
        self.w = reg.weight(f"{name}.w", (nin, nout))
        self.b = reg.bias(f"{name}.b", nout)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w.tensor), self.b.tensor)


class _LayerNorm:
    def __init__(self, reg: _Registry, name: str, c: int):
        self.g = reg.ones(f"{name}.g", c)
        self.b = reg.bias(f"{name}.b", c)

    def __call__(self, x: Tensor, axis: int = 1) -> Tensor:
        return ad.layer_norm(x, self.g.tensor, self.b.tensor, axis=axis)


class _Mlp:
    """Two per-position linear maps with a GELU in between."""

    def __init__(self, reg: _Registry, name: str, c: int, ratio: float):
        hidden = int(round(c * ratio))
        self.fc1 = _Linear(reg, f"{name}.fc1", c, hidden)
        self.fc2 = _Linear(reg, f"{name}.fc2", hidden, c)

    def __call__(self, x: Tensor) -> Tensor:
        # x: (B, C, H, W); apply over the channel axis at every position.
        b, c, h, w = x.shape
        t = ad.reshape(ad.permute(x, (0, 2, 3, 1)), (b, h * w, c))
        t = self.fc2(ad.gelu(self.fc1(t)))
        return ad.permute(ad.reshape(t, (b, h, w, c)), (0, 3, 1, 2))


def _relative_index(m: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (m - 1)
    return (rel[0] * (2 * m - 1) + rel[1]).reshape(-1)


def _shift_mask(h: int, w: int, m: int, dtype) -> np.ndarray:
    """(windows, m*m, m*m) additive mask for shifted-window attention."""
    s = m // 2
    img = np.zeros((h, w))
    cnt = 0
    for hs in (slice(0, h - m), slice(h - m, h - s), slice(h - s, h)):
        for ws in (slice(0, w - m), slice(w - m, w - s), slice(w - s, w)):
            img[hs, ws] = cnt
            cnt += 1
    wins = (
        img.reshape(h // m, m, w // m, m).transpose(0, 2, 1, 3).reshape(-1, m * m)
    )
    mask = (wins[:, None, :] != wins[:, :, None]) * -100.0
    return mask.astype(dtype)


class _WindowAttention:
    """Multi-head self-attention inside m x m windows with learned position bias."""

    def __init__(self, reg: _Registry, name: str, c: int, m: int, heads: int):
        self.c, self.m, self.heads = c, m, heads
        self.d = c // heads
        self.qkv = _Linear(reg, f"{name}.qkv", c, 3 * c)
        self.proj = _Linear(reg, f"{name}.proj", c, c)
        self.bias_table = reg.weight(f"{name}.bias", (heads, (2 * m - 1) ** 2))
        self.rel_index = _relative_index(m)

    def __call__(self, x: Tensor, shifted: bool) -> Tensor:
        b, c, h, w = x.shape
        m = self.m
        if h % m or w % m:
            raise DimNotDivisibleByWindow(f"feature grid {(h, w)} not divisible by {m}")
        if shifted:
            x = ad.cyclic_shift(x, (-(m // 2), -(m // 2)))
        wins = ad.window_partition(x, m)  # (B*nw, m*m, C)
        nw = wins.shape[0]
        qkv = self.qkv(wins)
        parts = []
        for i in range(3):
            t = ad.slice_axis(qkv, 2, i * c, (i + 1) * c)
            t = ad.permute(ad.reshape(t, (nw, m * m, self.heads, self.d)), (0, 2, 1, 3))
            parts.append(t)
        q, k, v = parts
        attn = ad.mul(ad.matmul(q, ad.permute(k, (0, 1, 3, 2))), 1.0 / np.sqrt(self.d))
        bias = ad.take_last(self.bias_table.tensor, self.rel_index)
        attn = ad.add(attn, ad.reshape(bias, (1, self.heads, m * m, m * m)))
        if shifted:
            mask = _shift_mask(h, w, m, x.dtype)
            tiled = np.tile(mask, (nw // mask.shape[0], 1, 1))[:, None, :, :]
            attn = ad.add(attn, Tensor(tiled))
        attn = ad.softmax(attn, axis=-1)
        out = ad.matmul(attn, v)  # (nw, heads, m*m, d)
        out = ad.reshape(ad.permute(out, (0, 2, 1, 3)), (nw, m * m, c))
        out = self.proj(out)
        y = ad.window_reverse(out, m, h, w)
        if shifted:
            y = ad.cyclic_shift(y, (m // 2, m // 2))
        return y


class _SpatialBranch:
    def __init__(self, reg: _Registry, name: str, cfg: ModelConfig, shifted: bool):
        c = cfg.embed_dim
        self.shifted = shifted
        self.ln1 = _LayerNorm(reg, f"{name}.ln1", c)
        self.attn = _WindowAttention(reg, f"{name}.attn", c, cfg.window_size, cfg.heads)
        self.ln2 = _LayerNorm(reg, f"{name}.ln2", c)
        self.mlp = _Mlp(reg, f"{name}.mlp", c, cfg.mlp_ratio)

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.add(self.attn(self.ln1(x), self.shifted), x)
        return ad.add(self.mlp(self.ln2(x)), x)


class _ChannelAttention:
    """Attention over the C channel tokens; each token's features span h*w."""

    def __init__(self, reg: _Registry, name: str, c: int, heads: int):
        self.c, self.heads = c, heads
        self.d = c // heads
        self.pos1 = _DepthwiseConv3x3(reg, f"{name}.pos1", c)
        self.pos2 = _DepthwiseConv3x3(reg, f"{name}.pos2", c)
        self.wq = _Linear(reg, f"{name}.q", c, c)
        self.wk = _Linear(reg, f"{name}.k", c, c)
        self.wv = _Linear(reg, f"{name}.v", c, c)
        self.proj = _Linear(reg, f"{name}.proj", c, c)

    def __call__(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        x = ad.add(x, self.pos2(ad.gelu(self.pos1(x))))
        tokens = ad.reshape(ad.permute(x, (0, 2, 3, 1)), (b, h * w, c))

        def heads_of(t: Tensor) -> Tensor:
            t = ad.reshape(t, (b, h * w, self.heads, self.d))
            return ad.permute(t, (0, 2, 3, 1))  # (B, heads, d, h*w)

        q = heads_of(self.wq(tokens))
        k = heads_of(self.wk(tokens))
        v = heads_of(self.wv(tokens))
        attn = ad.mul(ad.matmul(q, ad.permute(k, (0, 1, 3, 2))), 1.0 / np.sqrt(h * w))
        attn = ad.softmax(attn, axis=-1)  # (B, heads, d, d) over channel tokens
        out = ad.matmul(attn, v)  # (B, heads, d, h*w)
        out = ad.reshape(ad.permute(out, (0, 3, 1, 2)), (b, h * w, c))
        out = self.proj(out)
        return ad.permute(ad.reshape(out, (b, h, w, c)), (0, 3, 1, 2))


class _FrequentialBranch:
    def __init__(self, reg: _Registry, name: str, cfg: ModelConfig):
        c = cfg.embed_dim
        self.ln1 = _LayerNorm(reg, f"{name}.ln1", c)
        self.attn = _ChannelAttention(reg, f"{name}.attn", c, cfg.heads)
        self.ln2 = _LayerNorm(reg, f"{name}.ln2", c)
        self.mlp = _Mlp(reg, f"{name}.mlp", c, cfg.mlp_ratio)

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.add(self.attn(self.ln1(x)), x)
        return ad.add(self.mlp(self.ln2(x)), x)


class _DualBranchBlock:
    """One transformer unit: two branches, per-branch input residual, fusion."""

    def __init__(self, reg: _Registry, name: str, cfg: ModelConfig, shifted: bool):
        c = cfg.embed_dim
        self.ablation = cfg.ablation
        if cfg.ablation is Ablation.PARALLEL_SPATIAL:
            self.b1 = _SpatialBranch(reg, f"{name}.b1", cfg, shifted)
            self.b2 = _SpatialBranch(reg, f"{name}.b2", cfg, shifted)
        elif cfg.ablation is Ablation.PARALLEL_FREQUENTIAL:
            self.b1 = _FrequentialBranch(reg, f"{name}.b1", cfg)
            self.b2 = _FrequentialBranch(reg, f"{name}.b2", cfg)
        else:
            self.b1 = _SpatialBranch(reg, f"{name}.b1", cfg, shifted)
            self.b2 = _FrequentialBranch(reg, f"{name}.b2", cfg)
        if cfg.ablation is Ablation.SUCCESSIVE:
            self.fuse = None
        elif cfg.ablation is Ablation.ADD_FUSION:
            self.fuse = _Conv3x3(reg, f"{name}.fuse", c, c)
        elif cfg.ablation is Ablation.CONCAT_NO_CONV:
            self.fuse = None
        else:
            self.fuse = _Conv3x3(reg, f"{name}.fuse", 2 * c, c)

    def __call__(self, x: Tensor) -> Tensor:
        if self.ablation is Ablation.SUCCESSIVE:
            return self.b2(self.b1(x))
        y1 = ad.add(self.b1(x), x)
        y2 = ad.add(self.b2(x), x)
        if self.ablation is Ablation.ADD_FUSION:
            return self.fuse(ad.add(y1, y2))
        if self.ablation is Ablation.CONCAT_NO_CONV:
            return ad.mul(ad.add(y1, y2), 0.5)
        return self.fuse(ad.concat([y1, y2], axis=1))


class _ResidualGroup:
    def __init__(self, reg: _Registry, name: str, cfg: ModelConfig, first_shift: int):
        self.blocks = [
            _DualBranchBlock(reg, f"{name}.unit{j}", cfg, shifted=bool((first_shift + j) % 2))
            for j in range(cfg.units_per_block)
        ]
        self.conv = _Conv3x3(reg, f"{name}.conv", cfg.embed_dim, cfg.embed_dim)

    def __call__(self, x: Tensor) -> Tensor:
        y = x
        for blk in self.blocks:
            y = blk(y)
        return ad.add(self.conv(y), x)


class _ColorHead:
    """Project Y/Cb/Cr maps, upsample chroma to the luma grid, fuse to C channels."""

    def __init__(self, reg: _Registry, cfg: ModelConfig):
        c, cin = cfg.embed_dim, cfg.in_channels
        self.s420 = cfg.subsampling is Subsampling.S420
        self.y = _Conv3x3(reg, "head.y", cin, c)
        self.cb = _Conv3x3(reg, "head.cb", cin, c)
        self.cr = _Conv3x3(reg, "head.cr", cin, c)
        if self.s420:
            self.up_cb = _TransposeConv2x2(reg, "head.up_cb", c, c)
            self.up_cr = _TransposeConv2x2(reg, "head.up_cr", c, c)
        else:
            self.up_cb = _Conv3x3(reg, "head.up_cb", c, c)
            self.up_cr = _Conv3x3(reg, "head.up_cr", c, c)
        self.fuse = _Conv3x3(reg, "head.fuse", 3 * c, c)

    def __call__(self, xy: Tensor, xcb: Tensor, xcr: Tensor) -> Tensor:
        fy = self.y(xy)
        fcb = self.up_cb(self.cb(xcb))
        fcr = self.up_cr(self.cr(xcr))
        if fy.shape != fcb.shape or fy.shape != fcr.shape:
            raise DimMismatch(
                f"aligned shapes disagree: {fy.shape} vs {fcb.shape} / {fcr.shape}"
            )
        return self.fuse(ad.concat([fy, fcb, fcr], axis=1))


class Model:
    """Builds the parameter set for a config and runs the recovery forward."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        reg = _Registry(np.random.default_rng(seed), self.dtype)
        c = config.embed_dim
        if config.grayscale:
            self.head = _Conv3x3(reg, "head.y", config.in_channels, c)
        else:
            self.head = _ColorHead(reg, config)
        self.shallow = _Conv3x3(reg, "shallow", c, c)
        self.groups = [
            _ResidualGroup(reg, f"block{i}", config, first_shift=i * config.units_per_block)
            for i in range(config.num_blocks)
        ]
        self.body_conv = _Conv3x3(reg, "body", c, c)
        self.proj = _Conv3x3(reg, "proj", c, config.out_channels, zero=True)
        self._registry = reg

    # -- parameter access --

    @property
    def params(self) -> list[Parameter]:
        return list(self._registry.params.values())

    def param(self, name: str) -> Parameter:
        return self._registry.params[name]

    def param_count(self) -> int:
        return sum(p.tensor.data.size for p in self.params)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.tensor.data.copy() for p in self.params}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        mine = self._registry.params
        if set(state) != set(mine):
            raise ConfigMismatch("parameter names do not match this model config")
        for name, arr in state.items():
            if mine[name].tensor.data.shape != arr.shape:
                raise ConfigMismatch(f"shape mismatch for {name}")
            mine[name].tensor.data = arr.astype(self.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = None

    def randomize(self, seed: int) -> None:
        """Random init for every weight including the output projection."""
        rng = np.random.default_rng(seed)
        for p in self.params:
            p.tensor.data = ad.trunc_normal(rng, p.tensor.data.shape).astype(self.dtype)

    # -- forward --

    def forward_batch(
        self, comps: list[Tensor], skips: list[np.ndarray] | None = None
    ) -> list[Tensor]:
        """Recovered coefficient maps from prepared input maps.

        comps: per-component network inputs (B, in_channels, h, w); chroma at
        half grid for 4:2:0. skips: per-component (B, 64, H, W) coefficient
        maps already at the luma grid; when None, the raw residual maps are
        returned instead (callers then add skips at their own precision).
        Returns per-component (B, 64, H, W).
        """
        cfg = self.config
        ncomp = 1 if cfg.grayscale else 3
        scaled = [ad.mul(t, INPUT_SCALE) for t in comps]
        if cfg.grayscale:
            if len(comps) != 1:
                raise ConfigMismatch("grayscale model expects a single component")
            feat = self.head(scaled[0])
        else:
            if len(comps) != 3:
                raise ConfigMismatch("color model expects three components")
            feat = self.head(scaled[0], scaled[1], scaled[2])
        shallow = self.shallow(feat)
        x = shallow
        for group in self.groups:
            x = group(x)
        x = ad.add(self.body_conv(x), shallow)
        resid = ad.mul(self.proj(x), 1.0 / INPUT_SCALE)
        outs = []
        for i in range(ncomp):
            part = ad.slice_axis(resid, 1, 64 * i, 64 * (i + 1))
            if skips is not None:
                part = ad.add(part, Tensor(np.asarray(skips[i], dtype=self.dtype)))
            outs.append(part)
        return outs


# --- quantized-image plumbing around the network ---


def component_maps(q: QuantizedImage, ablation: Ablation):
    """Network input maps and reconstruction skip maps for each component.

    The skip is always in the dequantized coefficient range except under
    NO_QM, where the table is withheld from the whole pipeline.
    """
    inputs = []
    skips = []
    for comp in q.components:
        kind = ComponentKind.LUMA if comp.qm_index == 0 else ComponentKind.CHROMA
        qm = QuantMatrix(q.table_for(comp), kind)
        raw = rearrange(comp.coefficients.astype(np.float64))
        if ablation is Ablation.NO_QM:
            inputs.append(raw)
            skips.append(raw)
            continue
        embedded = rearrange(qm_embed(comp.coefficients, qm))
        if ablation is Ablation.CONCAT_QM:
            qm_channels = np.broadcast_to(
                qm.table.reshape(64, 1, 1).astype(np.float64), embedded.shape
            ).copy()
            inputs.append(np.concatenate([raw, qm_channels], axis=0))
        else:
            inputs.append(embedded)
        skips.append(embedded)
    return inputs, skips


def _pad_grid(arr: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    ph = target[0] - arr.shape[-2]
    pw = target[1] - arr.shape[-1]
    if ph == 0 and pw == 0:
        return arr
    pad = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(arr, pad, mode="edge")


def model_forward(model: Model, q: QuantizedImage) -> dict[str, np.ndarray]:
    """Run recovery on one quantized image; returns full-resolution maps.

    Output maps are keyed "y", "cb", "cr" (or just "y" for grayscale), each
    (64, H/8, W/8) at the luma block grid.
    """
    cfg = model.config
    if cfg.grayscale != q.is_gray:
        raise ConfigMismatch(
            f"checkpoint is {'grayscale' if cfg.grayscale else 'color'} but input is "
            f"{'grayscale' if q.is_gray else 'color'}"
        )
    if not q.is_gray and q.subsampling is not cfg.subsampling:
        raise ConfigMismatch(
            f"checkpoint expects {cfg.subsampling.value} input, got {q.subsampling.value}"
        )
    inputs, skips = component_maps(q, cfg.ablation)
    gh, gw = inputs[0].shape[-2:]
    m = cfg.window_size
    ph, pw = gh + (-gh) % m, gw + (-gw) % m

    comp_tensors = []
    skip_maps = []
    for i, (inp, skip) in enumerate(zip(inputs, skips)):
        luma = i == 0 or q.subsampling is Subsampling.S444
        target = (ph, pw) if luma else (ph // 2, pw // 2)
        inp = _pad_grid(inp, target)
        skip = _pad_grid(skip, target)
        if not luma:
            kind = ComponentKind.CHROMA
            qm = QuantMatrix(q.table_for(q.components[i]), kind)
            skip = chroma_dct_upsample(CollocatedMap(skip, kind, qm), (ph, pw)).data
        comp_tensors.append(Tensor(inp[None].astype(model.dtype)))
        skip_maps.append(skip)
    residuals = model.forward_batch(comp_tensors)
    keys = ["y"] if q.is_gray else ["y", "cb", "cr"]
    return {
        k: (skip + r.data[0].astype(np.float64))[:, :gh, :gw]
        for k, skip, r in zip(keys, skip_maps, residuals)
    }


def reconstruct_image(maps: dict[str, np.ndarray], pixel_dims: tuple[int, int]) -> PixelImage:
    """Coefficient maps at the luma grid -> clamped, cropped pixel image."""
    h, w = pixel_dims
    planes = [idct_plane(inverse_rearrange(maps[k])) for k in (["y"] if "cb" not in maps else ["y", "cb", "cr"])]
    if len(planes) == 1:
        return PixelImage(np.clip(planes[0][:h, :w] + 128.0, 0, 255), Colorspace.GRAY)
    ycc = np.stack(planes) + 128.0
    rgb = ycbcr_planes_to_rgb(ycc)
    return PixelImage(np.clip(rgb[:, :h, :w], 0, 255), Colorspace.RGB)

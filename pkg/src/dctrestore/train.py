"""Training: dual-domain loss, warmup + cosine schedule, batch synthesis,
double-compression fine-tuning mode, and bit-exact checkpointing."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import blockdct as bd
from .autodiff import AdamState, Tensor
from .collocate import CollocatedMap, chroma_dct_upsample, rearrange
from .errors import (
    BadMagic,
    ConfigMismatch,
    ImageTooSmall,
    NonFiniteLoss,
    ShapeMismatch,
    StepOutOfRange,
    TruncatedFile,
    UsageError,
    VersionMismatch,
)
from .net import Ablation, Model, ModelConfig, component_maps


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 8
    crop: int = 64  # full-scale runs crop 256x256
    qf_min: int = 10
    qf_max: int = 100
    lr_start: float = 1e-4
    lr_peak: float = 4e-4  # tuned for large-batch multi-GPU runs; kept as-is
    lr_end: float = 1e-5
    warmup_fraction: float = 0.25
    clip: float = 0.2
    seed: int = 0
    double_jpeg: bool = False
    loss_lambda: float = 255.0
    charbonnier_eps: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (self.lr_end < self.lr_start <= self.lr_peak):
            raise UsageError("require lr_end < lr_start <= lr_peak")
        if self.crop % 16:
            raise UsageError("crop size must be a multiple of 16")
        if not (1 <= self.qf_min <= self.qf_max <= 100):
            raise UsageError("quality factor range must satisfy 1 <= min <= max <= 100")

    def to_text(self) -> str:
        return "\n".join(f"{k}={getattr(self, k)}" for k in self.__dataclass_fields__)


# --- losses ---


def charbonnier_loss(x_img: Tensor, y_img: Tensor, eps: float = 1e-3) -> Tensor:
    """Mean elementwise sqrt(diff^2 + eps^2); equals eps for identical inputs."""
    if x_img.shape != y_img.shape:
        raise ShapeMismatch(f"charbonnier shapes {x_img.shape} vs {y_img.shape}")
    d = ad.sub(x_img, y_img)
    return ad.mean(ad.sqrt(ad.add(ad.mul(d, d), eps * eps)))


def freq_l1_loss(x_coef: Tensor, y_coef: Tensor) -> Tensor:
    """Mean absolute coefficient difference."""
    if x_coef.shape != y_coef.shape:
        raise ShapeMismatch(f"freq loss shapes {x_coef.shape} vs {y_coef.shape}")
    return ad.mean(ad.abs_(ad.sub(x_coef, y_coef)))


_IDCT_T = bd._DCT_T  # orthonormal basis, used as a constant inside the graph


def maps_to_pixels01(maps: list[Tensor], gray: bool) -> Tensor:
    """Differentiable reconstruction: coefficient maps -> pixels scaled to [0, 1].

    No clamping, so gradients stay defined everywhere.
    """
    dtype = maps[0].dtype
    t_const = Tensor(_IDCT_T.astype(dtype))
    planes = []
    for m in maps:
        b, c, gh, gw = m.shape
        blocks = ad.permute(ad.reshape(m, (b, 8, 8, gh, gw)), (0, 3, 4, 1, 2))
        s1 = ad.matmul(blocks, t_const)  # sum over v
        s2 = ad.matmul(ad.permute(s1, (0, 1, 2, 4, 3)), t_const)  # sum over u
        blocks = ad.permute(s2, (0, 1, 2, 4, 3))  # (B, gh, gw, 8, 8)
        plane = ad.reshape(ad.permute(blocks, (0, 1, 3, 2, 4)), (b, 1, gh * 8, gw * 8))
        planes.append(plane)
    if gray:
        return ad.mul(ad.add(planes[0], 128.0), 1.0 / 255.0)
    ycc = ad.concat(planes, axis=1)
    ycc = ad.add(ycc, np.array([128.0, 0.0, 0.0], dtype=dtype).reshape(1, 3, 1, 1))
    b, _, h, w = ycc.shape
    tokens = ad.permute(ycc, (0, 2, 3, 1))
    minv = np.linalg.inv(bd._RGB_TO_YCC).T.astype(dtype)
    rgb = ad.matmul(ad.reshape(tokens, (b, h * w, 3)), Tensor(minv))
    rgb = ad.permute(ad.reshape(rgb, (b, h, w, 3)), (0, 3, 1, 2))
    return ad.mul(rgb, 1.0 / 255.0)


def dual_loss(
    recovered: list[Tensor],
    target_maps: list[Tensor],
    cfg: TrainConfig,
    gray: bool,
) -> tuple[Tensor, float, float]:
    """Coefficient L1 plus lambda-weighted Charbonnier on reconstructed pixels.

    Both sides of the pixel term pass through the same reconstruction, per
    the training objective. Returns (loss, freq part, pixel part).
    """
    lf = freq_l1_loss(ad.concat(recovered, 1), ad.concat(target_maps, 1))
    lp = charbonnier_loss(
        maps_to_pixels01(recovered, gray),
        maps_to_pixels01(target_maps, gray),
        cfg.charbonnier_eps,
    )
    total = ad.add(lf, ad.mul(lp, cfg.loss_lambda))
    return total, float(lf.data), float(lp.data)


# --- schedule ---


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak over the first quarter, then cosine to lr_end."""
    if not 0 <= step < cfg.steps:
        raise StepOutOfRange(f"step {step} outside 0..{cfg.steps - 1}")
    warm = int(round(cfg.steps * cfg.warmup_fraction))
    if step <= warm:
        if warm == 0:
            return cfg.lr_peak
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * step / warm
    span = max(cfg.steps - 1 - warm, 1)
    t = (step - warm) / span
    return cfg.lr_end + (cfg.lr_peak - cfg.lr_end) * 0.5 * (1.0 + np.cos(np.pi * t))


# --- batch synthesis ---


@dataclass
class Batch:
    inputs: list[np.ndarray]  # per component (B, ch, h, w)
    skips: list[np.ndarray]  # per component (B, 64, H, W) at luma grid
    target_maps: list[np.ndarray]  # lossless coefficient maps (B, 64, H, W)
    qfs: list


def _augment(planes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if rng.integers(2):
        planes = planes[:, :, ::-1]
    if rng.integers(2):
        planes = planes[:, ::-1, :]
    k = int(rng.integers(4))
    if k:
        planes = np.rot90(planes, k, axes=(1, 2))
    return np.ascontiguousarray(planes)


def _lossless_maps(img: bd.PixelImage) -> list[np.ndarray]:
    """Unquantized, unsubsampled DCT maps of each component."""
    if img.colorspace is bd.Colorspace.GRAY:
        planes = [img.planes[0]]
    else:
        planes = list(bd.rgb_to_ycbcr(img).planes)
    return [rearrange(bd.dct_plane(p - 128.0)) for p in planes]


def make_batch(
    corpus: list[bd.PixelImage],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    rng: np.random.Generator,
) -> Batch:
    """Quantized inputs paired with lossless coefficient targets."""
    gray = model_cfg.grayscale
    sub = model_cfg.subsampling
    inputs, skips, targets, qfs = None, None, [], []
    for _ in range(cfg.batch):
        idx = int(rng.integers(len(corpus)))
        img = corpus[idx]
        h, w = img.dims
        if h < cfg.crop or w < cfg.crop:
            raise ImageTooSmall(f"corpus image {idx} is {h}x{w}, need {cfg.crop}")
        y0 = int(rng.integers(h - cfg.crop + 1))
        x0 = int(rng.integers(w - cfg.crop + 1))
        planes = _augment(img.planes[:, y0 : y0 + cfg.crop, x0 : x0 + cfg.crop], rng)
        crop = bd.PixelImage(planes, img.colorspace)

        if cfg.double_jpeg:
            qf1 = int(rng.integers(cfg.qf_min, cfg.qf_max + 1))
            qf2 = int(rng.integers(cfg.qf_min, cfg.qf_max + 1))
            shift = (int(rng.choice([0, 4])), int(rng.choice([0, 4])))
            q = bd.degrade_double(crop, qf1, qf2, shift, sub)
            qfs.append((qf1, qf2, shift))
        else:
            qf = int(rng.integers(cfg.qf_min, cfg.qf_max + 1))
            q = bd.compress(crop, qf, sub)
            qfs.append(qf)

        comp_in, comp_skip = component_maps(q, model_cfg.ablation)
        full_skips = []
        for i, skip in enumerate(comp_skip):
            if i > 0 and q.subsampling is bd.Subsampling.S420:
                qm = bd.QuantMatrix(q.table_for(q.components[i]), bd.ComponentKind.CHROMA)
                target_grid = comp_skip[0].shape[-2:]
                skip = chroma_dct_upsample(
                    CollocatedMap(skip, bd.ComponentKind.CHROMA, qm), target_grid
                ).data
            full_skips.append(skip)
        tmaps = _lossless_maps(crop)

        if inputs is None:
            inputs = [[] for _ in comp_in]
            skips = [[] for _ in comp_in]
            targets = [[] for _ in comp_in]
        for i in range(len(comp_in)):
            inputs[i].append(comp_in[i])
            skips[i].append(full_skips[i])
            targets[i].append(tmaps[i])

    return Batch(
        inputs=[np.stack(x) for x in inputs],
        skips=[np.stack(x) for x in skips],
        target_maps=[np.stack(x) for x in targets],
        qfs=qfs,
    )


# --- checkpoint format ---

CHECKPOINT_MAGIC = b"DCTX"
CHECKPOINT_VERSION = 1


def _write_tensor_table(fh, table: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(table)))
    for name, arr in table.items():
        nb = name.encode()
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        fh.write(struct.pack("<H", len(nb)))
        fh.write(nb)
        fh.write(struct.pack("<BB", 0, arr32.ndim))  # dtype tag 0 = f32
        fh.write(struct.pack(f"<{arr32.ndim}I", *arr32.shape))
        fh.write(arr32.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFile(f"expected {n} bytes, got {len(data)}")
    return data


def _read_tensor_table(fh) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, nlen).decode()
        tag, ndim = struct.unpack("<BB", _read_exact(fh, 2))
        if tag != 0:
            raise VersionMismatch(f"unknown tensor dtype tag {tag}")
        shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(_read_exact(fh, 4 * n), dtype="<f4").reshape(shape)
        out[name] = arr.copy()
    return out


def save_checkpoint(
    path: str,
    model: Model,
    adam: AdamState,
    step: int,
    rng: np.random.Generator,
) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        cfg_text = model.config.to_text().encode()
        fh.write(struct.pack("<I", len(cfg_text)))
        fh.write(cfg_text)
        _write_tensor_table(fh, model.state_dict())
        fh.write(struct.pack("<Q", adam.step))
        _write_tensor_table(fh, adam.m)
        _write_tensor_table(fh, adam.v)
        fh.write(struct.pack("<Q", step))
        rng_state = json.dumps(rng.bit_generator.state).encode()
        fh.write(struct.pack("<I", len(rng_state)))
        fh.write(rng_state)


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    adam_step: int
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int
    rng_state: dict = field(repr=False, default=None)

    def build_model(self, dtype=np.float32) -> Model:
        model = Model(self.config, dtype=dtype)
        model.load_state(self.tensors)
        return model


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"not a checkpoint file: magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise VersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        (clen,) = struct.unpack("<I", _read_exact(fh, 4))
        config = ModelConfig.from_text(_read_exact(fh, clen).decode())
        tensors = _read_tensor_table(fh)
        (adam_step,) = struct.unpack("<Q", _read_exact(fh, 8))
        m = _read_tensor_table(fh)
        v = _read_tensor_table(fh)
        (step,) = struct.unpack("<Q", _read_exact(fh, 8))
        (rlen,) = struct.unpack("<I", _read_exact(fh, 4))
        rng_state = json.loads(_read_exact(fh, rlen).decode())
    return Checkpoint(config, tensors, adam_step, m, v, step, rng_state)


# --- training loop ---


def train_loop(
    model: Model,
    cfg: TrainConfig,
    corpus: list[bd.PixelImage],
    resume: Checkpoint | None = None,
    on_step=None,
) -> tuple[list[dict], AdamState, np.random.Generator]:
    """Optimize in place; returns (loss trace, optimizer state, rng).

    Each trace row: step, loss, freq/pixel parts, lr, grad norm before clip.
    """
    if not corpus:
        raise UsageError("empty training corpus")
    grid = cfg.crop // 8
    if grid % model.config.window_size:
        raise UsageError(
            f"crop {cfg.crop} gives grid {grid}, not divisible by window "
            f"{model.config.window_size}"
        )
    params = model.params
    if resume is not None:
        adam = AdamState(resume.adam_step, dict(resume.adam_m), dict(resume.adam_v))
        for name, arr in adam.m.items():
            adam.m[name] = arr.astype(model.dtype)
        for name, arr in adam.v.items():
            adam.v[name] = arr.astype(model.dtype)
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start = resume.step
    else:
        adam = AdamState.zeros(params)
        rng = np.random.default_rng(cfg.seed)
        start = 0

    gray = model.config.grayscale
    trace = []
    for step in range(start, cfg.steps):
        lr = lr_schedule(step, cfg)
        batch = make_batch(corpus, cfg, model.config, rng)
        comp_tensors = [Tensor(x.astype(model.dtype)) for x in batch.inputs]
        outs = model.forward_batch(comp_tensors, batch.skips)
        tmaps = [Tensor(t.astype(model.dtype)) for t in batch.target_maps]
        loss, lfreq, lpix = dual_loss(outs, tmaps, cfg, gray)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss became {value} at step {step} (qfs={batch.qfs})")
        model.zero_grad()
        ad.backward(loss)
        norm = ad.clip_grad_global_norm(params, cfg.clip)
        ad.adam_step(params, adam, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        row = {
            "step": step,
            "loss": value,
            "freq": lfreq,
            "pixel": lpix,
            "lr": lr,
            "grad_norm": norm,
        }
        trace.append(row)
        if on_step is not None:
            on_step(row)
    return trace, adam, rng

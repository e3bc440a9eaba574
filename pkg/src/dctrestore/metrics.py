"""Pixel-domain and DCT-domain quality metrics.

PSNR / SSIM / PSNR-B on decoded images, plus per-frequency Jensen-Shannon
divergence and Bhattacharyya distance between coefficient histograms taken
over the dequantized value range [-1024, 1024).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .blockdct import (
    Colorspace,
    ComponentKind,
    PixelImage,
    QuantizedImage,
    QuantMatrix,
    rgb_to_ycbcr,
)
from .collocate import qm_embed, rearrange
from .errors import BinMismatch, DimMismatch, EmptyInput, TooSmall, UsageError

HIST_RANGE = (-1024.0, 1024.0)


def _luma(img: PixelImage) -> np.ndarray:
    if img.colorspace is Colorspace.GRAY:
        return img.planes[0]
    rgb = img if img.colorspace is Colorspace.RGB else None
    if rgb is None:
        raise UsageError("metrics expect RGB or Gray images")
    return rgb_to_ycbcr(img).planes[0]


def _metric_planes(a: PixelImage, b: PixelImage, channel: str) -> tuple[np.ndarray, np.ndarray]:
    if a.dims != b.dims:
        raise DimMismatch(f"image dims {a.dims} vs {b.dims}")
    if channel == "y":
        return _luma(a)[None], _luma(b)[None]
    if a.planes.shape != b.planes.shape:
        raise DimMismatch("channel counts differ")
    return a.planes, b.planes


def psnr(a: PixelImage, b: PixelImage, channel: str = "rgb") -> float:
    """10 log10(255^2 / MSE); +inf for identical images."""
    pa, pb = _metric_planes(a, b, channel)
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    t = sliding_window_view(x, len(g), axis=0) @ g
    return sliding_window_view(t, len(g), axis=1) @ g


def ssim(a: PixelImage, b: PixelImage) -> float:
    """Single-scale SSIM on the luma channel: 11x11 Gaussian window,
    sigma 1.5, K1=0.01, K2=0.03, L=255, mean over the valid region."""
    x, y = _luma(a), _luma(b)
    if a.dims != b.dims:
        raise DimMismatch(f"image dims {a.dims} vs {b.dims}")
    if min(x.shape) < 11:
        raise TooSmall("SSIM needs dims >= 11")
    g = _gaussian_kernel()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    xx = _filter_valid(x * x, g) - mu_x * mu_x
    yy = _filter_valid(y * y, g) - mu_y * mu_y
    xy = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def blocking_effect_factor(plane: np.ndarray, block: int = 8) -> float:
    """Extra blocking energy at block-aligned boundaries of one channel."""
    h, w = plane.shape
    dh = plane[:, 1:] - plane[:, :-1]
    mask_h = (np.arange(1, w) % block) == 0
    dv = plane[1:, :] - plane[:-1, :]
    mask_v = (np.arange(1, h) % block) == 0

    sq_b = float((dh[:, mask_h] ** 2).sum() + (dv[mask_v, :] ** 2).sum())
    n_b = dh[:, mask_h].size + dv[mask_v, :].size
    sq_c = float((dh[:, ~mask_h] ** 2).sum() + (dv[~mask_v, :] ** 2).sum())
    n_c = dh[:, ~mask_h].size + dv[~mask_v, :].size
    if n_b == 0 or n_c == 0:
        return 0.0
    d_b = sq_b / n_b
    d_c = sq_c / n_c
    if d_b <= d_c:
        return 0.0
    eta = math.log2(block) / math.log2(min(h, w))
    return eta * (d_b - d_c)


def psnr_b(reference: PixelImage, test: PixelImage, channel: str = "rgb") -> float:
    """PSNR with the test image's blocking-effect factor added to the MSE."""
    pa, pb = _metric_planes(reference, test, channel)
    mse = float(np.mean((pa - pb) ** 2))
    bef = float(np.mean([blocking_effect_factor(p) for p in pb]))
    mse_b = mse + bef
    if mse_b == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse_b)


# --- DCT-domain metrics ---


@dataclass
class HistogramSet:
    """64 normalized per-frequency distributions over shared bins."""

    probs: np.ndarray  # (64, n_bins)
    n_bins: int = field(default=0)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[0] != 64:
            raise BinMismatch(f"histogram set must be (64, n), got {self.probs.shape}")
        self.n_bins = self.probs.shape[1]


def dct_histograms(coeff_map: np.ndarray, n_bins: int = 256) -> HistogramSet:
    """Histogram each frequency channel of a (64, h, w) coefficient map."""
    if n_bins < 2:
        raise UsageError("n_bins must be >= 2")
    coeff_map = np.asarray(coeff_map, dtype=np.float64)
    if coeff_map.ndim != 3 or coeff_map.shape[0] != 64 or coeff_map[0].size == 0:
        raise EmptyInput(f"expected non-empty (64, h, w) map, got {coeff_map.shape}")
    lo, hi = HIST_RANGE
    flat = coeff_map.reshape(64, -1)
    clipped = np.clip(flat, lo, np.nextafter(hi, lo))
    idx = np.minimum(((clipped - lo) / (hi - lo) * n_bins).astype(np.int64), n_bins - 1)
    probs = np.zeros((64, n_bins))
    for c in range(64):
        probs[c] = np.bincount(idx[c], minlength=n_bins)
    probs /= flat.shape[1]
    return HistogramSet(probs)


def _check_bins(x: HistogramSet, y: HistogramSet) -> None:
    if x.n_bins != y.n_bins:
        raise BinMismatch(f"bin counts differ: {x.n_bins} vs {y.n_bins}")


def js_divergence(x: HistogramSet, y: HistogramSet) -> float:
    """Mean over frequencies of the Jensen-Shannon divergence (natural log)."""
    _check_bins(x, y)
    p, q = x.probs, y.probs
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_pm = np.where(p > 0, p * np.log(p / m), 0.0)
        kl_qm = np.where(q > 0, q * np.log(q / m), 0.0)
    per_freq = 0.5 * (np.nansum(kl_pm, axis=1) + np.nansum(kl_qm, axis=1))
    return float(per_freq.mean())


def bhattacharyya(x: HistogramSet, y: HistogramSet, floor: float = 1e-12) -> float:
    """Mean over frequencies of -log sum sqrt(P*Q), overlap floored at 1e-12."""
    _check_bins(x, y)
    overlap = np.sqrt(x.probs * y.probs).sum(axis=1)
    return float(np.mean(-np.log(np.maximum(overlap, floor))))


# --- coefficient extraction for DCT-domain evaluation ---


def lossless_luma_map(img: PixelImage) -> np.ndarray:
    """(64, h, w) unquantized DCT map of the luma channel; whole blocks only."""
    from .blockdct import dct_plane

    plane = _luma(img)
    h, w = plane.shape
    bh, bw = (h // 8) * 8, (w // 8) * 8
    if bh == 0 or bw == 0:
        raise EmptyInput("image smaller than one block")
    return rearrange(dct_plane(plane[:bh, :bw] - 128.0))


def embedded_luma_map(q: QuantizedImage) -> np.ndarray:
    """(64, h, w) dequantized luma coefficients, cropped to whole true blocks."""
    comp = q.components[0]
    h, w = q.pixel_dims
    bh, bw = (h // 8) * 8, (w // 8) * 8
    qm = QuantMatrix(q.table_for(comp), ComponentKind.LUMA)
    return rearrange(qm_embed(comp.coefficients[:bh, :bw], qm))


def crop_map_to_image(coeff_map: np.ndarray, pixel_dims: tuple[int, int]) -> np.ndarray:
    """Keep only map positions whose blocks lie fully inside the image."""
    h, w = pixel_dims
    return coeff_map[:, : h // 8, : w // 8]


@dataclass
class MetricsRow:
    image: str
    qf: str
    method: str
    psnr: float
    ssim: float
    psnr_b: float
    js: float = math.nan
    bha: float = math.nan


@dataclass
class MetricsReport:
    rows: list[MetricsRow]

    def mean_over(self, method: str | None = None) -> dict[str, float]:
        rows = [r for r in self.rows if method is None or r.method == method]
        out = {}
        for key in ("psnr", "ssim", "psnr_b", "js", "bha"):
            vals = [getattr(r, key) for r in rows]
            vals = [v for v in vals if not math.isnan(v)]
            out[key] = float(np.mean(vals)) if vals else math.nan
        return out

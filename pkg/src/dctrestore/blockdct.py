"""Block-DCT arithmetic of baseline JPEG.

Color transform, 8x8 orthonormal DCT, quality-factor scaling of the
standard quantization tables, chroma resampling, and the compression /
decompression / double-compression pipelines operating on quantized
coefficient planes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    BadDims,
    OddDims,
    QfOutOfRange,
    ShiftOutOfRange,
    WrongColorspace,
)


class Colorspace(Enum):
    RGB = "rgb"
    YCBCR = "ycbcr"
    GRAY = "gray"


class Subsampling(Enum):
    S444 = "444"
    S420 = "420"


class ComponentKind(Enum):
    LUMA = "luma"
    CHROMA = "chroma"


@dataclass
class PixelImage:
    """Per-channel sample planes in [0, 255], shape (channels, H, W)."""

    planes: np.ndarray
    colorspace: Colorspace

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim == 2:
            self.planes = self.planes[None]
        expected = 1 if self.colorspace is Colorspace.GRAY else 3
        if self.planes.shape[0] != expected:
            raise BadDims(
                f"{self.colorspace.value} image needs {expected} planes, "
                f"got {self.planes.shape[0]}"
            )

    @property
    def dims(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]


@dataclass
class QuantMatrix:
    """8x8 integer divisors, strictly positive, in [1, 255]."""

    table: np.ndarray
    component_kind: ComponentKind

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.int32)
        if self.table.shape != (8, 8):
            raise BadDims("quantization matrix must be 8x8")
        if np.any(self.table < 1) or np.any(self.table > 255):
            raise BadDims("quantization matrix entries must lie in [1, 255]")


@dataclass
class ComponentPlane:
    """One component's quantized coefficients, dims padded to multiples of 8."""

    comp_id: int
    coefficients: np.ndarray  # int32, raster block order
    qm_index: int

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.int32)
        h, w = self.coefficients.shape
        if h % 8 or w % 8:
            raise BadDims("coefficient plane dims must be multiples of 8")


@dataclass
class QuantizedImage:
    """Quantized DCT coefficient planes plus the tables that produced them."""

    components: list[ComponentPlane]
    quant_tables: list[np.ndarray]  # up to 4, each 8x8 int in [1, 255]
    subsampling: Subsampling
    pixel_dims: tuple[int, int]  # (height, width) before padding
    restart_interval: int = field(default=0, compare=False)

    def __post_init__(self):
        self.quant_tables = [np.asarray(t, dtype=np.int32) for t in self.quant_tables]

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedImage):
            return NotImplemented
        if (
            self.subsampling is not other.subsampling
            or self.pixel_dims != other.pixel_dims
            or len(self.components) != len(other.components)
            or len(self.quant_tables) != len(other.quant_tables)
        ):
            return False
        for a, b in zip(self.quant_tables, other.quant_tables):
            if not np.array_equal(a, b):
                return False
        for a, b in zip(self.components, other.components):
            if a.comp_id != b.comp_id or a.qm_index != b.qm_index:
                return False
            if not np.array_equal(a.coefficients, b.coefficients):
                return False
        return True

    @property
    def is_gray(self) -> bool:
        return len(self.components) == 1

    def table_for(self, comp: ComponentPlane) -> np.ndarray:
        return self.quant_tables[comp.qm_index]


# --- color transform (full-range BT.601, the JPEG convention) ---

_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCC_OFFSET = np.array([0.0, 128.0, 128.0])


def rgb_to_ycbcr(img: PixelImage) -> PixelImage:
    if img.colorspace is not Colorspace.RGB:
        raise WrongColorspace("rgb_to_ycbcr expects an RGB image")
    ycc = np.einsum("ij,jhw->ihw", _RGB_TO_YCC, img.planes)
    ycc += _YCC_OFFSET[:, None, None]
    return PixelImage(np.clip(ycc, 0.0, 255.0), Colorspace.YCBCR)


def ycbcr_to_rgb(img: PixelImage) -> PixelImage:
    if img.colorspace is not Colorspace.YCBCR:
        raise WrongColorspace("ycbcr_to_rgb expects a YCbCr image")
    centered = img.planes - _YCC_OFFSET[:, None, None]
    rgb = np.einsum("ij,jhw->ihw", np.linalg.inv(_RGB_TO_YCC), centered)
    return PixelImage(np.clip(rgb, 0.0, 255.0), Colorspace.RGB)


def ycbcr_planes_to_rgb(planes: np.ndarray) -> np.ndarray:
    """Unclamped linear YCbCr->RGB on a (3, H, W) array."""
    centered = planes - _YCC_OFFSET[:, None, None]
    return np.einsum("ij,jhw->ihw", np.linalg.inv(_RGB_TO_YCC), centered)


# --- 8x8 orthonormal DCT-II ---

def _dct_matrix() -> np.ndarray:
    i = np.arange(8)
    u = np.arange(8)[:, None]
    t = np.cos((2 * i + 1) * u * np.pi / 16.0)
    t[0] *= np.sqrt(1.0 / 8.0)
    t[1:] *= np.sqrt(2.0 / 8.0)
    return t


_DCT_T = _dct_matrix()


def dct2_8x8(block: np.ndarray) -> np.ndarray:
    """2-D orthonormal DCT of one level-shifted 8x8 block."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (8, 8):
        raise BadDims("dct2_8x8 expects an 8x8 block")
    return _DCT_T @ block @ _DCT_T.T


def idct2_8x8(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (8, 8):
        raise BadDims("idct2_8x8 expects an 8x8 block")
    return _DCT_T.T @ coeffs @ _DCT_T


def plane_to_blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) -> (H/8, W/8, 8, 8) raster block view."""
    h, w = plane.shape
    if h % 8 or w % 8:
        raise BadDims("plane dims must be multiples of 8")
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def blocks_to_plane(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(bh * 8, bw * 8)


def dct_plane(plane: np.ndarray) -> np.ndarray:
    """Blockwise DCT of a level-shifted plane, result in the same layout."""
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    out = np.einsum("ui,...ij,vj->...uv", _DCT_T, blocks, _DCT_T)
    return blocks_to_plane(out)


def idct_plane(plane: np.ndarray) -> np.ndarray:
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    out = np.einsum("ui,...uv,vj->...ij", _DCT_T, blocks, _DCT_T)
    return blocks_to_plane(out)


# --- quality-factor scaling (IJG convention) over the standard base tables ---

BASE_LUMA_QM = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)

BASE_CHROMA_QM = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)


def qf_to_qm(qf: int, kind: ComponentKind) -> QuantMatrix:
    """Scale the standard base table for a quality factor in 1..100."""
    if not (1 <= qf <= 100):
        raise QfOutOfRange(f"quality factor {qf} outside 1..100")
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    base = BASE_LUMA_QM if kind is ComponentKind.LUMA else BASE_CHROMA_QM
    table = (base * scale + 50) // 100
    return QuantMatrix(np.clip(table, 1, 255), kind)


# --- quantization ---

def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(coeffs: np.ndarray, qm: QuantMatrix) -> np.ndarray:
    """Divide by the table and round half away from zero; int result."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    table = np.tile(qm.table, (coeffs.shape[0] // 8, coeffs.shape[1] // 8))
    return _round_half_away(coeffs / table).astype(np.int32)


def dequantize(q: np.ndarray, qm: QuantMatrix) -> np.ndarray:
    q = np.asarray(q)
    table = np.tile(qm.table, (q.shape[0] // 8, q.shape[1] // 8))
    return q.astype(np.float64) * table


# --- chroma resampling ---

def chroma_downsample(plane: np.ndarray) -> np.ndarray:
    """2x2 box mean; both dims must be even."""
    h, w = plane.shape
    if h % 2 or w % 2:
        raise OddDims("downsample input dims must be even")
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _upsample2_axis(plane: np.ndarray, axis: int) -> np.ndarray:
    # Linear x2 with half-sample alignment: output i maps to (i + 0.5)/2 - 0.5.
    src = np.moveaxis(plane, axis, 0)
    n = src.shape[0]
    lo = np.concatenate([src[:1], src[:-1]], axis=0)  # src[k-1], edge-clamped
    hi = np.concatenate([src[1:], src[-1:]], axis=0)  # src[k+1], edge-clamped
    out = np.empty((2 * n,) + src.shape[1:], dtype=np.float64)
    out[0::2] = 0.25 * lo + 0.75 * src
    out[1::2] = 0.75 * src + 0.25 * hi
    return np.moveaxis(out, 0, axis)


def chroma_upsample(plane: np.ndarray) -> np.ndarray:
    """Bilinear x2 with half-sample alignment and edge clamping."""
    return _upsample2_axis(_upsample2_axis(np.asarray(plane, np.float64), 0), 1)


# --- padding / cropping ---

def pad_to_multiple(plane: np.ndarray, multiple: int) -> np.ndarray:
    h, w = plane.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return plane
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


# --- compression pipeline ---

def compress(img: PixelImage, qf: int, subsampling: Subsampling = Subsampling.S420) -> QuantizedImage:
    """Color transform, pad, subsample, blockwise DCT and quantize."""
    if img.colorspace is Colorspace.YCBCR:
        raise WrongColorspace("compress expects RGB or Gray input")
    h, w = img.dims

    luma_qm = qf_to_qm(qf, ComponentKind.LUMA)
    if img.colorspace is Colorspace.GRAY:
        plane = pad_to_multiple(img.planes[0], 8)
        coeffs = dct_plane(plane - 128.0)
        comp = ComponentPlane(1, quantize(coeffs, luma_qm), 0)
        return QuantizedImage([comp], [luma_qm.table], Subsampling.S444, (h, w))

    chroma_qm = qf_to_qm(qf, ComponentKind.CHROMA)
    ycc = rgb_to_ycbcr(img).planes
    multiple = 16 if subsampling is Subsampling.S420 else 8
    padded = [pad_to_multiple(p, multiple) for p in ycc]
    if subsampling is Subsampling.S420:
        padded[1] = chroma_downsample(padded[1])
        padded[2] = chroma_downsample(padded[2])

    components = []
    for idx, plane in enumerate(padded):
        qm = luma_qm if idx == 0 else chroma_qm
        coeffs = dct_plane(plane - 128.0)
        components.append(ComponentPlane(idx + 1, quantize(coeffs, qm), 0 if idx == 0 else 1))
    return QuantizedImage(components, [luma_qm.table, chroma_qm.table], subsampling, (h, w))


def decompress(q: QuantizedImage) -> PixelImage:
    """Dequantize, inverse DCT, upsample chroma, convert, clamp, crop.

    Clamping happens once after color conversion so the decode equals the
    coefficient-domain reconstruction used by the recovery model.
    """
    h, w = q.pixel_dims
    planes = []
    for comp in q.components:
        qm = QuantMatrix(q.table_for(comp), ComponentKind.LUMA)
        planes.append(idct_plane(dequantize(comp.coefficients, qm)))

    if q.is_gray:
        out = np.clip(planes[0][:h, :w] + 128.0, 0.0, 255.0)
        return PixelImage(out[None], Colorspace.GRAY)

    if q.subsampling is Subsampling.S420:
        planes[1] = chroma_upsample(planes[1])
        planes[2] = chroma_upsample(planes[2])
    ycc = np.stack(planes) + 128.0
    rgb = ycbcr_planes_to_rgb(ycc)
    return PixelImage(np.clip(rgb[:, :h, :w], 0.0, 255.0), Colorspace.RGB)


def translate_with_edge_fill(img: PixelImage, dx: int, dy: int) -> PixelImage:
    """Shift content toward bottom-right by (dx, dy), edge-replicating the gap."""
    h, w = img.dims
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return PixelImage(img.planes[:, ys][:, :, xs], img.colorspace)


def degrade_double(
    img: PixelImage,
    qf1: int,
    qf2: int,
    shift: tuple[int, int] = (0, 0),
    subsampling: Subsampling = Subsampling.S420,
) -> QuantizedImage:
    """Compress, decode, shift by (dx, dy), compress again."""
    dx, dy = shift
    if not (0 <= dx <= 7 and 0 <= dy <= 7):
        raise ShiftOutOfRange(f"shift {shift} outside 0..7")
    once = decompress(compress(img, qf1, subsampling))
    shifted = translate_with_edge_fill(once, dx, dy) if (dx or dy) else once
    return compress(shifted, qf2, subsampling)


def coefficient_sparsity(q: QuantizedImage) -> float:
    """Fraction of quantized coefficients equal to zero."""
    total = 0
    zeros = 0
    for comp in q.components:
        total += comp.coefficients.size
        zeros += int(np.count_nonzero(comp.coefficients == 0))
    return zeros / total


def to_uint8(img: PixelImage) -> np.ndarray:
    """Round samples to the 8-bit grid, shape (C, H, W)."""
    return np.clip(_round_half_away(img.planes), 0, 255).astype(np.uint8)

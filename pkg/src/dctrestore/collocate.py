"""Coefficient pre-processing: table embedding and collocated DCT maps.

A quantized plane is first multiplied blockwise by its quantization table
(so values re-enter the natural DCT range of roughly [-1024, 1023]), then
rearranged so the 64 in-block frequencies become 64 channels collocated
over the block grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockdct import (
    ComponentKind,
    QuantMatrix,
    chroma_upsample,
    dct_plane,
    idct_plane,
)
from .errors import BadDims


@dataclass
class CollocatedMap:
    """(64, H/8, W/8) tensor; channel k holds frequency (k // 8, k % 8)."""

    data: np.ndarray
    component_kind: ComponentKind
    qm: QuantMatrix

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] != 64:
            raise BadDims(f"collocated map must be (64, h, w), got {self.data.shape}")

    @property
    def grid(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]


def qm_embed(plane: np.ndarray, qm: QuantMatrix) -> np.ndarray:
    """Multiply each 8x8 block entrywise by the quantization table."""
    plane = np.asarray(plane)
    h, w = plane.shape
    if h % 8 or w % 8:
        raise BadDims("plane dims must be multiples of 8")
    tiled = np.tile(qm.table, (h // 8, w // 8))
    return plane.astype(np.float64) * tiled


def rearrange(plane: np.ndarray) -> np.ndarray:
    """(H, W) -> (64, H/8, W/8); channel index is raster order k = 8u + v."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if h % 8 or w % 8:
        raise BadDims("plane dims must be multiples of 8")
    blocks = plane.reshape(h // 8, 8, w // 8, 8)
    return blocks.transpose(1, 3, 0, 2).reshape(64, h // 8, w // 8)


def inverse_rearrange(cmap: np.ndarray) -> np.ndarray:
    """(64, h, w) -> (8h, 8w); exact inverse of :func:`rearrange`."""
    cmap = np.asarray(cmap, dtype=np.float64)
    if cmap.ndim != 3 or cmap.shape[0] != 64:
        raise BadDims(f"expected (64, h, w), got {cmap.shape}")
    _, gh, gw = cmap.shape
    blocks = cmap.reshape(8, 8, gh, gw).transpose(2, 0, 3, 1)
    return blocks.reshape(gh * 8, gw * 8)


def embed_and_rearrange(plane: np.ndarray, qm: QuantMatrix, kind: ComponentKind) -> CollocatedMap:
    return CollocatedMap(rearrange(qm_embed(plane, qm)), kind, qm)


def chroma_dct_upsample(cmap: CollocatedMap, target_grid: tuple[int, int]) -> CollocatedMap:
    """Double a chroma map's spatial grid entirely within the DCT domain.

    Equivalent to bilinear x2 of the component's samples: inverse
    rearrangement, inverse DCT, bilinear upsampling, forward DCT,
    rearrangement. Deterministic and linear.
    """
    gh, gw = cmap.grid
    if target_grid != (2 * gh, 2 * gw):
        raise BadDims(f"target grid {target_grid} is not 2x source grid {(gh, gw)}")
    samples = idct_plane(inverse_rearrange(cmap.data))
    up = chroma_upsample(samples)
    return CollocatedMap(rearrange(dct_plane(up)), cmap.component_kind, cmap.qm)

"""Deterministic synthetic test images.

Low-pass textures with edges and gradients: enough natural-image statistics
(energy concentrated at low frequencies) that quantized coefficients go
sparse at low quality factors, while staying fully reproducible without any
dataset on disk. The smoothness knobs trade detail for learnability; the
smooth profile is what the toy training demos use.
"""

from __future__ import annotations

import numpy as np

from .blockdct import Colorspace, PixelImage


def _smooth_noise(rng: np.random.Generator, h: int, w: int, sigma: float) -> np.ndarray:
    """Gaussian-filtered white noise via FFT blur, zero mean, unit-ish std."""
    noise = rng.standard_normal((h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    kernel = np.exp(-2.0 * (np.pi * sigma) ** 2 * (fy**2 + fx**2))
    out = np.fft.ifft2(np.fft.fft2(noise) * kernel).real
    std = out.std()
    return out / std if std > 1e-9 else out


def synth_image(
    seed: int,
    height: int = 96,
    width: int = 96,
    gray: bool = False,
    detail: float = 0.12,
    base_sigma: float = 3.0,
    edge_sharpness: float = 60.0,
) -> PixelImage:
    """One synthetic photo-like image, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height - 1, 1)
    xx = xx / max(width - 1, 1)

    channels = 1 if gray else 3
    planes = np.empty((channels, height, width))
    # Shared structure so color channels correlate like natural photos.
    base = _smooth_noise(rng, height, width, base_sigma)
    fine = _smooth_noise(rng, height, width, 1.0)
    gx, gy = rng.uniform(-1, 1, size=2)
    ramp = gx * xx + gy * yy
    # A couple of soft-edged discs for step content.
    shapes = np.zeros((height, width))
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        r = rng.uniform(0.08, 0.25)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        shapes += rng.uniform(-0.8, 0.8) / (1.0 + np.exp((np.sqrt(d2) - r) * edge_sharpness))

    for c in range(channels):
        tint = _smooth_noise(rng, height, width, 6.0)
        img = 0.55 * base + detail * fine + 0.45 * ramp + 0.8 * shapes + 0.35 * tint
        lo, hi = img.min(), img.max()
        planes[c] = 20.0 + 215.0 * (img - lo) / (hi - lo + 1e-12)

    return PixelImage(planes, Colorspace.GRAY if gray else Colorspace.RGB)


def synth_corpus(seed: int, count: int, height: int = 96, width: int = 96, gray: bool = False):
    """List of deterministic images; seeds are seed, seed+1, ..."""
    return [synth_image(seed + i, height, width, gray) for i in range(count)]


def smooth_corpus(seed: int, count: int, height: int = 64, width: int = 64, gray: bool = True):
    """Low-detail corpus for toy training runs: artifacts stay recoverable."""
    return [
        synth_image(seed + i, height, width, gray, detail=0.0, base_sigma=5.0, edge_sharpness=20.0)
        for i in range(count)
    ]

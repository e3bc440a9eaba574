import math

import numpy as np
import pytest

from dctrestore import blockdct as bd
from dctrestore import metrics as mx
from dctrestore import synth
from dctrestore.errors import BinMismatch, DimMismatch, EmptyInput, TooSmall


def gray_img(arr):
    return bd.PixelImage(np.asarray(arr, dtype=float), bd.Colorspace.GRAY)


class TestPsnr:
    def test_identical_inf_sentinel(self, natural_image):
        assert math.isinf(mx.psnr(natural_image, natural_image))

    def test_full_scale_error_zero_db(self):
        a = gray_img(np.zeros((16, 16)))
        b = gray_img(np.full((16, 16), 255.0))
        assert mx.psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_random_pair_two_line_oracle(self, rng):
        a = gray_img(rng.uniform(0, 255, (24, 24)))
        b = gray_img(rng.uniform(0, 255, (24, 24)))
        mse = np.mean((a.planes - b.planes) ** 2)
        expected = 10 * np.log10(255.0**2 / mse)
        assert mx.psnr(a, b) == pytest.approx(expected, rel=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            mx.psnr(gray_img(np.zeros((8, 8))), gray_img(np.zeros((8, 16))))

    def test_luma_channel_mode(self, rng):
        a = bd.PixelImage(rng.uniform(0, 255, (3, 16, 16)), bd.Colorspace.RGB)
        b = bd.PixelImage(rng.uniform(0, 255, (3, 16, 16)), bd.Colorspace.RGB)
        ya = bd.rgb_to_ycbcr(a).planes[0]
        yb = bd.rgb_to_ycbcr(b).planes[0]
        expected = 10 * np.log10(255.0**2 / np.mean((ya - yb) ** 2))
        assert mx.psnr(a, b, channel="y") == pytest.approx(expected, rel=1e-12)


class TestSsim:
    def test_identical_one(self, natural_gray):
        assert mx.ssim(natural_gray, natural_gray) == pytest.approx(1.0, abs=1e-12)

    def test_inversion_low_similarity(self, natural_gray):
        inverted = gray_img(255.0 - natural_gray.planes[0])
        assert mx.ssim(natural_gray, inverted) < 0.3

    def test_too_small(self):
        with pytest.raises(TooSmall):
            mx.ssim(gray_img(np.zeros((8, 8))), gray_img(np.zeros((8, 8))))

    def test_matches_skimage_reference(self, rng):
        skimage = pytest.importorskip("skimage.metrics")
        for _ in range(10):
            base = synth.synth_image(int(rng.integers(1 << 30)), 48, 40, gray=True)
            noisy = np.clip(base.planes[0] + rng.normal(0, 12, base.planes[0].shape), 0, 255)
            ours = mx.ssim(base, gray_img(noisy))
            ref = skimage.structural_similarity(
                base.planes[0],
                noisy,
                gaussian_weights=True,
                sigma=1.5,
                use_sample_covariance=False,
                data_range=255,
            )
            assert ours == pytest.approx(ref, abs=1e-6)


class TestPsnrB:
    def test_no_blockiness_equals_psnr(self, rng):
        # smooth gradient: boundary and interior differences agree
        ramp = np.tile(np.arange(32, dtype=float), (32, 1))
        a = gray_img(ramp)
        b = gray_img(ramp + rng.normal(0, 1e-3, ramp.shape))
        assert mx.blocking_effect_factor(ramp) == 0.0
        assert mx.psnr_b(a, b) <= mx.psnr(a, b)

    def test_hand_computed_single_boundary_step(self):
        # 16x16, left half 100, right half 110: one vertical block boundary.
        # Horizontal boundary pairs: 16 with diff 10 -> sum 1600; vertical
        # boundary pairs: 16 with diff 0. D_B = 1600/32 = 50. All other pair
        # differences are 0 -> D_C = 0. eta = log2(8)/log2(16) = 0.75, so
        # BEF = 37.5 and PSNR-B(x, x) = 10*log10(255^2 / 37.5).
        img = np.full((16, 16), 100.0)
        img[:, 8:] = 110.0
        assert mx.blocking_effect_factor(img) == pytest.approx(37.5, abs=1e-12)
        expected = 10 * np.log10(255.0**2 / 37.5)
        assert mx.psnr_b(gray_img(img), gray_img(img)) == pytest.approx(expected, rel=1e-12)

    def test_blocked_decode_scores_below_psnr(self, natural_gray):
        decoded = bd.decompress(bd.compress(natural_gray, 10))
        assert mx.psnr_b(natural_gray, decoded) < mx.psnr(natural_gray, decoded)

    def test_never_exceeds_psnr(self, rng):
        for seed in range(3):
            a = synth.synth_image(seed, 32, 32, gray=True)
            b = bd.decompress(bd.compress(a, int(rng.integers(5, 95))))
            assert mx.psnr_b(a, b) <= mx.psnr(a, b) + 1e-12


class TestHistograms:
    def test_single_block_one_hot(self):
        cmap = np.full((64, 1, 1), 8.0)
        hist = mx.dct_histograms(cmap)
        assert np.all(hist.probs.sum(axis=1) == 1.0)
        assert np.all((hist.probs == 0).sum(axis=1) == hist.n_bins - 1)

    def test_normalization(self, rng):
        cmap = rng.uniform(-1024, 1023, (64, 4, 6))
        hist = mx.dct_histograms(cmap)
        assert np.allclose(hist.probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(hist.probs >= 0)

    def test_matches_bruteforce_binning(self, rng):
        cmap = rng.uniform(-1100, 1100, (64, 3, 3))  # includes out-of-range values
        n = 32
        hist = mx.dct_histograms(cmap, n_bins=n)
        edges = np.linspace(-1024, 1024, n + 1)
        for c in range(64):
            counts = np.zeros(n)
            for v in cmap[c].ravel():
                v = min(max(v, -1024.0), np.nextafter(1024.0, -1024.0))
                for b in range(n):
                    if edges[b] <= v < edges[b + 1]:
                        counts[b] += 1
                        break
            assert np.allclose(hist.probs[c], counts / cmap[c].size)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            mx.dct_histograms(np.zeros((64, 0, 4)))


class TestDivergences:
    def _hists(self, rng):
        a = mx.dct_histograms(rng.uniform(-500, 500, (64, 4, 4)))
        b = mx.dct_histograms(rng.uniform(-500, 500, (64, 4, 4)))
        return a, b

    def test_identical_zero(self, rng):
        h, _ = self._hists(rng)
        assert mx.js_divergence(h, h) == pytest.approx(0.0, abs=1e-12)
        assert mx.bhattacharyya(h, h) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_supports(self):
        a = mx.dct_histograms(np.full((64, 2, 2), -512.0))
        b = mx.dct_histograms(np.full((64, 2, 2), 512.0))
        assert mx.js_divergence(a, b) == pytest.approx(math.log(2), rel=1e-12)
        assert mx.bhattacharyya(a, b) == pytest.approx(-math.log(1e-12), rel=1e-9)

    def test_symmetry(self, rng):
        a, b = self._hists(rng)
        assert mx.js_divergence(a, b) == pytest.approx(mx.js_divergence(b, a), rel=1e-12)
        assert mx.bhattacharyya(a, b) == pytest.approx(mx.bhattacharyya(b, a), rel=1e-12)

    def test_js_range(self, rng):
        a, b = self._hists(rng)
        val = mx.js_divergence(a, b)
        assert 0.0 <= val <= math.log(2) + 1e-12

    def test_bin_mismatch(self, rng):
        a = mx.dct_histograms(rng.uniform(-1, 1, (64, 2, 2)), n_bins=16)
        b = mx.dct_histograms(rng.uniform(-1, 1, (64, 2, 2)), n_bins=32)
        with pytest.raises(BinMismatch):
            mx.js_divergence(a, b)
        with pytest.raises(BinMismatch):
            mx.bhattacharyya(a, b)


class TestQfOrdering:
    def test_divergences_decrease_with_quality(self, natural_gray):
        # JPEG-vs-lossless distances shrink as QF rises (Table-4 direction)
        ref = mx.dct_histograms(mx.lossless_luma_map(natural_gray))
        js_vals, bha_vals = [], []
        for qf in (10, 30, 50):
            q = bd.compress(natural_gray, qf)
            h = mx.dct_histograms(mx.embedded_luma_map(q))
            js_vals.append(mx.js_divergence(h, ref))
            bha_vals.append(mx.bhattacharyya(h, ref))
        assert js_vals[0] > js_vals[1] > js_vals[2]
        assert bha_vals[0] > bha_vals[1] > bha_vals[2]

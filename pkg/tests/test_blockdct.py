import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dctrestore import blockdct as bd
from dctrestore import synth
from dctrestore.errors import OddDims, QfOutOfRange, ShiftOutOfRange, WrongColorspace
from dctrestore.metrics import psnr


def dct_double_sum(block):
    """O(N^4) direct evaluation of the orthonormal 2-D DCT-II."""
    out = np.zeros((8, 8))
    for u in range(8):
        for v in range(8):
            au = np.sqrt(1 / 8) if u == 0 else np.sqrt(2 / 8)
            av = np.sqrt(1 / 8) if v == 0 else np.sqrt(2 / 8)
            acc = 0.0
            for i in range(8):
                for j in range(8):
                    acc += (
                        block[i, j]
                        * np.cos((2 * i + 1) * u * np.pi / 16)
                        * np.cos((2 * j + 1) * v * np.pi / 16)
                    )
            out[u, v] = au * av * acc
    return out


class TestDct:
    def test_constant_128_all_zero(self):
        coeffs = bd.dct2_8x8(np.zeros((8, 8)))  # 128 level-shifted
        assert np.abs(coeffs).max() < 1e-12

    def test_constant_129_dc_eight(self):
        coeffs = bd.dct2_8x8(np.ones((8, 8)))
        assert coeffs[0, 0] == pytest.approx(8.0, abs=1e-12)
        coeffs[0, 0] = 0.0
        assert np.abs(coeffs).max() < 1e-12

    def test_impulse_blocks_match_double_sum_oracle(self, rng):
        for _ in range(4):
            block = np.zeros((8, 8))
            block[rng.integers(8), rng.integers(8)] = rng.uniform(-128, 127)
            assert np.abs(bd.dct2_8x8(block) - dct_double_sum(block)).max() <= 1e-9

    def test_random_blocks_match_double_sum_oracle(self, rng):
        for _ in range(3):
            block = rng.uniform(-128, 127, (8, 8))
            assert np.abs(bd.dct2_8x8(block) - dct_double_sum(block)).max() <= 1e-9

    def test_idct_inverts_dct(self, rng):
        blocks = rng.uniform(-128, 127, (200, 8, 8))
        for block in blocks:
            rec = bd.idct2_8x8(bd.dct2_8x8(block))
            assert np.abs(rec - block).max() <= 1e-10

    def test_orthonormal_energy(self, rng):
        block = rng.uniform(-128, 127, (8, 8))
        assert np.linalg.norm(bd.dct2_8x8(block)) == pytest.approx(
            np.linalg.norm(block), abs=1e-9
        )

    def test_plane_dct_matches_blockwise(self, rng):
        plane = rng.uniform(-128, 127, (16, 24))
        full = bd.dct_plane(plane)
        assert np.allclose(full[0:8, 8:16], bd.dct2_8x8(plane[0:8, 8:16]), atol=1e-12)
        assert np.abs(bd.idct_plane(full) - plane).max() <= 1e-10


class TestColor:
    def test_black(self):
        img = bd.PixelImage(np.zeros((3, 2, 2)), bd.Colorspace.RGB)
        ycc = bd.rgb_to_ycbcr(img).planes
        assert np.allclose(ycc[:, 0, 0], [0.0, 128.0, 128.0])

    def test_white(self):
        img = bd.PixelImage(np.full((3, 2, 2), 255.0), bd.Colorspace.RGB)
        ycc = bd.rgb_to_ycbcr(img).planes
        assert np.allclose(ycc[:, 0, 0], [255.0, 128.0, 128.0], atol=1e-9)

    def test_pure_red_bt601(self):
        img = bd.PixelImage(np.array([[[255.0]], [[0.0]], [[0.0]]]), bd.Colorspace.RGB)
        ycc = bd.rgb_to_ycbcr(img).planes.ravel()
        assert ycc[0] == pytest.approx(76.245, abs=1e-3)
        assert ycc[1] == pytest.approx(84.972, abs=1e-3)
        assert ycc[2] == pytest.approx(255.0, abs=1e-9)  # clamped from 255.5

    def test_roundtrip_integer_images(self, rng):
        img = bd.PixelImage(rng.integers(0, 256, (3, 8, 8)).astype(float), bd.Colorspace.RGB)
        back = bd.ycbcr_to_rgb(bd.rgb_to_ycbcr(img))
        assert np.abs(back.planes - img.planes).max() <= 1.0

    def test_wrong_colorspace(self):
        img = bd.PixelImage(np.zeros((3, 2, 2)), bd.Colorspace.RGB)
        with pytest.raises(WrongColorspace):
            bd.ycbcr_to_rgb(img)


class TestQuantization:
    def test_qf50_is_base_table(self):
        qm = bd.qf_to_qm(50, bd.ComponentKind.LUMA)
        assert np.array_equal(qm.table, bd.BASE_LUMA_QM)
        assert qm.table[0, 0] == 16

    def test_qf100_all_ones(self):
        for kind in bd.ComponentKind:
            assert np.all(bd.qf_to_qm(100, kind).table == 1)

    def test_qf10_scaling(self):
        assert bd.qf_to_qm(10, bd.ComponentKind.LUMA).table[0, 0] == 80

    def test_qf_out_of_range(self):
        for qf in (0, 101, -3):
            with pytest.raises(QfOutOfRange):
                bd.qf_to_qm(qf, bd.ComponentKind.LUMA)

    def test_round_half_away(self):
        qm = bd.QuantMatrix(np.full((8, 8), 80), bd.ComponentKind.LUMA)
        block = np.zeros((8, 8))
        block[0, 0] = 80.0
        block[0, 1] = 39.0
        block[0, 2] = -40.0  # exact half tie, away from zero
        q = bd.quantize(block, qm)
        assert q[0, 0] == 1 and q[0, 1] == 0 and q[0, 2] == -1
        assert bd.dequantize(q, qm)[0, 0] == 80.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 100), st.integers(0, 2**32 - 1))
    def test_quantization_error_bound(self, qf, seed):
        # |c - dequantize(quantize(c))| <= qm/2 entrywise
        rng = np.random.default_rng(seed)
        qm = bd.qf_to_qm(qf, bd.ComponentKind.LUMA)
        coeffs = rng.uniform(-1024, 1023, (8, 8))
        err = np.abs(coeffs - bd.dequantize(bd.quantize(coeffs, qm), qm))
        assert np.all(err <= qm.table / 2.0 + 1e-9)


class TestChromaResampling:
    def test_constant_roundtrip(self):
        plane = np.full((16, 24), 100.0)
        down = bd.chroma_downsample(plane)
        assert np.allclose(down, 100.0)
        assert np.allclose(bd.chroma_upsample(down), 100.0)

    def test_checkerboard_mean(self):
        plane = np.indices((8, 8)).sum(axis=0) % 2 * 255.0
        assert np.allclose(bd.chroma_downsample(plane), 127.5)

    def test_odd_dims(self):
        with pytest.raises(OddDims):
            bd.chroma_downsample(np.zeros((7, 8)))

    def test_upsample_matches_naive_bilinear_oracle(self, rng):
        src = rng.uniform(0, 255, (6, 5))
        up = bd.chroma_upsample(src)

        h, w = src.shape
        naive = np.zeros((2 * h, 2 * w))
        for i in range(2 * h):
            for j in range(2 * w):
                sy = (i + 0.5) / 2.0 - 0.5
                sx = (j + 0.5) / 2.0 - 0.5
                y0 = int(np.floor(sy))
                x0 = int(np.floor(sx))
                fy, fx = sy - y0, sx - x0

                def at(y, x):
                    return src[min(max(y, 0), h - 1), min(max(x, 0), w - 1)]

                naive[i, j] = (
                    (1 - fy) * (1 - fx) * at(y0, x0)
                    + (1 - fy) * fx * at(y0, x0 + 1)
                    + fy * (1 - fx) * at(y0 + 1, x0)
                    + fy * fx * at(y0 + 1, x0 + 1)
                )
        assert np.abs(up - naive).max() < 1e-12


class TestPipelines:
    def test_constant_gray_dc_only(self):
        img = bd.PixelImage(np.full((1, 24, 24), 128.0), bd.Colorspace.GRAY)
        q = bd.compress(img, 30)
        assert np.all(q.components[0].coefficients == 0)

    def test_constant_color_dc_only(self):
        img = bd.PixelImage(np.full((3, 32, 32), 200.0), bd.Colorspace.RGB)
        q = bd.compress(img, 75, bd.Subsampling.S420)
        for comp in q.components:
            ac = comp.coefficients.copy()
            ac[0::8, 0::8] = 0
            assert np.all(ac == 0)

    def test_qf10_sparsity(self, natural_image):
        q = bd.compress(natural_image, 10, bd.Subsampling.S420)
        assert bd.coefficient_sparsity(q) >= 0.90

    def test_sparsity_monotone_in_qf(self, natural_image):
        rates = [
            bd.coefficient_sparsity(bd.compress(natural_image, qf, bd.Subsampling.S420))
            for qf in (10, 30, 50, 70, 90)
        ]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_near_lossless_qf100(self, natural_image):
        rec = bd.decompress(bd.compress(natural_image, 100, bd.Subsampling.S444))
        assert psnr(natural_image, rec) >= 50.0

    def test_all_zero_planes_decode_mid_gray(self):
        img = bd.PixelImage(np.full((1, 16, 16), 128.0), bd.Colorspace.GRAY)
        q = bd.compress(img, 50)
        rec = bd.decompress(q)
        assert np.allclose(rec.planes, 128.0, atol=1e-9)

    def test_quality_monotonicity(self, natural_image):
        hi = psnr(natural_image, bd.decompress(bd.compress(natural_image, 90)))
        lo = psnr(natural_image, bd.decompress(bd.compress(natural_image, 10)))
        assert hi > lo

    def test_padding_cropped(self):
        img = synth.synth_image(4, 50, 70)
        rec = bd.decompress(bd.compress(img, 80, bd.Subsampling.S420))
        assert rec.dims == (50, 70)


class TestDoubleCompression:
    def test_aligned_pairs(self, natural_image):
        for pair in ((10, 90), (90, 10), (75, 95), (95, 75)):
            q = bd.degrade_double(natural_image, *pair, (0, 0))
            assert q.pixel_dims == natural_image.dims

    def test_shift_4_4(self, natural_image):
        q = bd.degrade_double(natural_image, 75, 95, (4, 4))
        rec = bd.decompress(q)
        assert rec.dims == natural_image.dims

    def test_shift_out_of_range(self, natural_image):
        with pytest.raises(ShiftOutOfRange):
            bd.degrade_double(natural_image, 10, 90, (9, 9))

    def test_unit_quantizer_near_idempotent(self, natural_image):
        single = bd.decompress(bd.compress(natural_image, 100, bd.Subsampling.S444))
        double = bd.decompress(
            bd.degrade_double(natural_image, 100, 100, (0, 0), bd.Subsampling.S444)
        )
        assert np.abs(single.planes - double.planes).max() <= 2.0

    def test_translate_edge_fill(self):
        img = bd.PixelImage(np.arange(16, dtype=float).reshape(1, 4, 4), bd.Colorspace.GRAY)
        out = bd.translate_with_edge_fill(img, 1, 1).planes[0]
        assert out[0, 0] == img.planes[0, 0, 0]  # replicated corner
        assert out[1, 1] == img.planes[0, 0, 0]
        assert out[3, 3] == img.planes[0, 2, 2]

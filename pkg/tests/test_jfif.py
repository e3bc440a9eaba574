import io

import numpy as np
import pytest

from dctrestore import blockdct as bd
from dctrestore import jfif
from dctrestore.errors import (
    CorruptEntropyStream,
    MissingMarker,
    RangeOverflow,
    UnsupportedProcess,
    UnsupportedSampling,
)

from conftest import random_quantized_image


class TestRoundtrip:
    def test_random_images_bit_exact(self, rng):
        for i in range(30):
            gray = i % 3 == 0
            sub = bd.Subsampling.S420 if i % 2 == 0 else bd.Subsampling.S444
            h = int(rng.integers(8, 49))
            w = int(rng.integers(8, 49))
            q = random_quantized_image(rng, h, w, sub, gray=gray)
            back = jfif.parse_jpeg(jfif.encode_jpeg(q))
            assert back == q

    def test_all_zero_planes(self, rng):
        q = random_quantized_image(rng, 16, 16, bd.Subsampling.S444)
        for comp in q.components:
            comp.coefficients[...] = 0
        back = jfif.parse_jpeg(jfif.encode_jpeg(q))
        assert back == q

    def test_encode_deterministic(self, rng):
        q = random_quantized_image(rng, 24, 40, bd.Subsampling.S420)
        assert jfif.encode_jpeg(q) == jfif.encode_jpeg(q)

    def test_compressed_image_roundtrip(self, natural_image):
        q = bd.compress(natural_image, 35, bd.Subsampling.S420)
        assert jfif.parse_jpeg(jfif.encode_jpeg(q)) == q

    def test_dc_deltas_telescope(self, rng):
        # Sum of DC differences per component equals the final raw DC value.
        q = random_quantized_image(rng, 32, 32, bd.Subsampling.S444)
        for comp in q.components:
            dcs = comp.coefficients[0::8, 0::8].ravel()
            deltas = np.diff(np.concatenate([[0], dcs]))
            assert deltas.sum() == dcs[-1]


class TestExamples:
    def test_single_midgray_block_qf100(self):
        img = bd.PixelImage(np.full((1, 8, 8), 128.0), bd.Colorspace.GRAY)
        q = bd.compress(img, 100)
        data = jfif.encode_jpeg(q)
        back = jfif.parse_jpeg(data)
        assert np.all(back.components[0].coefficients == 0)
        assert np.all(back.quant_tables[0] == 1)

    def test_missing_soi(self):
        with pytest.raises(MissingMarker):
            jfif.parse_jpeg(b"\x00\x01\x02\x03")

    def test_truncated_entropy_stream(self, rng):
        q = random_quantized_image(rng, 24, 24, bd.Subsampling.S444)
        data = jfif.encode_jpeg(q)
        with pytest.raises(CorruptEntropyStream):
            jfif.parse_jpeg(data[: len(data) // 2])

    def test_progressive_rejected(self, rng):
        data = bytearray(jfif.encode_jpeg(random_quantized_image(rng, 16, 16, bd.Subsampling.S444)))
        idx = data.find(b"\xff\xc0")
        data[idx + 1] = 0xC2  # rewrite SOF0 to SOF2
        with pytest.raises(UnsupportedProcess):
            jfif.parse_jpeg(bytes(data))

    def test_unsupported_sampling_rejected(self, rng):
        q = random_quantized_image(rng, 16, 16, bd.Subsampling.S444)
        data = bytearray(jfif.encode_jpeg(q))
        idx = data.find(b"\xff\xc0")
        # component 0 sampling byte lives at SOF payload offset 7
        data[idx + 4 + 7] = 0x21  # 2x1: 4:2:2-style, unsupported
        with pytest.raises(UnsupportedSampling):
            jfif.parse_jpeg(bytes(data))

    def test_range_overflow(self):
        plane = np.zeros((8, 8), dtype=np.int32)
        plane[0, 1] = 2000  # AC magnitude needs 11 bits
        q = bd.QuantizedImage(
            [bd.ComponentPlane(1, plane, 0)],
            [np.ones((8, 8), dtype=np.int32)],
            bd.Subsampling.S444,
            (8, 8),
        )
        with pytest.raises(RangeOverflow):
            jfif.encode_jpeg(q)

    def test_unknown_app_segments_skipped(self, rng):
        q = random_quantized_image(rng, 16, 16, bd.Subsampling.S444)
        data = jfif.encode_jpeg(q)
        extra = b"\xff\xe7" + (10).to_bytes(2, "big") + b"whatever"
        patched = data[:2] + extra + data[2:]
        assert jfif.parse_jpeg(patched) == q


class TestInterop:
    def test_pil_accepts_and_matches_gray(self, natural_gray):
        from PIL import Image

        q = bd.compress(natural_gray, 40)
        pil = Image.open(io.BytesIO(jfif.encode_jpeg(q)))
        pil.load()
        ours = bd.to_uint8(bd.decompress(q))[0].astype(np.int64)
        theirs = np.asarray(pil).astype(np.int64)
        assert np.abs(ours - theirs).max() <= 1

    def test_pil_parse_matches_our_compressor(self, natural_gray):
        # PIL (libjpeg) encodes; we read its quantized coefficients.
        from PIL import Image

        buf = io.BytesIO()
        arr = bd.to_uint8(natural_gray)[0]
        Image.fromarray(arr, mode="L").save(buf, format="JPEG", quality=90)
        q = jfif.parse_jpeg(buf.getvalue())
        assert q.is_gray
        assert q.pixel_dims == natural_gray.dims
        rec = bd.decompress(q)
        assert np.abs(rec.planes[0] - arr.astype(float)).mean() < 4.0

    def test_restart_markers(self, natural_gray):
        from PIL import Image

        buf = io.BytesIO()
        arr = bd.to_uint8(natural_gray)[0]
        try:
            Image.fromarray(arr, mode="L").save(
                buf, format="JPEG", quality=75, restart_marker_blocks=2
            )
        except TypeError:
            pytest.skip("Pillow without restart marker support")
        data = buf.getvalue()
        if b"\xff\xdd" not in data:
            pytest.skip("encoder ignored restart request")
        q = jfif.parse_jpeg(data)
        assert q.restart_interval == 2
        buf2 = io.BytesIO()
        Image.fromarray(arr, mode="L").save(buf2, format="JPEG", quality=75)
        q_plain = jfif.parse_jpeg(buf2.getvalue())
        assert q == q_plain  # same coefficients with or without restarts

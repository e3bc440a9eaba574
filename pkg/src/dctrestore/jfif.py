"""Baseline sequential JFIF bitstream reader and writer.

Operates at the quantized-coefficient level: the decoder undoes entropy
coding, DC prediction and zigzag only, so a file round-trips bit-exactly
through ``QuantizedImage``. The encoder always emits the "typical" Huffman
tables of ITU-T T.81 Annex K; the decoder accepts arbitrary DHT tables,
DRI/RSTn intervals, and skips unknown APPn/COM segments.
"""

from __future__ import annotations

import math

import numpy as np

from .blockdct import ComponentPlane, QuantizedImage, Subsampling
from .errors import (
    BadDims,
    CorruptEntropyStream,
    MissingMarker,
    RangeOverflow,
    UnsupportedProcess,
    UnsupportedSampling,
)

# Marker codes (second byte after 0xFF)
_SOI, _EOI, _SOS, _DQT, _DHT, _SOF0, _DRI, _COM = 0xD8, 0xD9, 0xDA, 0xDB, 0xC4, 0xC0, 0xDD, 0xFE
_SOF_FAMILY = {0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF}

# Zigzag position -> raster index within an 8x8 block.
ZIGZAG = np.array([
    0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
])

# Annex K "typical" Huffman tables: (BITS[1..16], HUFFVAL)
_DC_LUMA_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
_DC_LUMA_VALS = list(range(12))
_DC_CHROMA_BITS = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
_DC_CHROMA_VALS = list(range(12))
_AC_LUMA_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125]
_AC_LUMA_VALS = [
    1, 2, 3, 0, 4, 17, 5, 18, 33, 49, 65, 6, 19, 81, 97, 7, 34, 113,
    20, 50, 129, 145, 161, 8, 35, 66, 177, 193, 21, 82, 209, 240, 36, 51, 98, 114,
    130, 9, 10, 22, 23, 24, 25, 26, 37, 38, 39, 40, 41, 42, 52, 53, 54, 55,
    56, 57, 58, 67, 68, 69, 70, 71, 72, 73, 74, 83, 84, 85, 86, 87, 88, 89,
    90, 99, 100, 101, 102, 103, 104, 105, 106, 115, 116, 117, 118, 119, 120, 121, 122, 131,
    132, 133, 134, 135, 136, 137, 138, 146, 147, 148, 149, 150, 151, 152, 153, 154, 162, 163,
    164, 165, 166, 167, 168, 169, 170, 178, 179, 180, 181, 182, 183, 184, 185, 186, 194, 195,
    196, 197, 198, 199, 200, 201, 202, 210, 211, 212, 213, 214, 215, 216, 217, 218, 225, 226,
    227, 228, 229, 230, 231, 232, 233, 234, 241, 242, 243, 244, 245, 246, 247, 248, 249, 250,
]
_AC_CHROMA_BITS = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 119]
_AC_CHROMA_VALS = [
    0, 1, 2, 3, 17, 4, 5, 33, 49, 6, 18, 65, 81, 7, 97, 113, 19, 34,
    50, 129, 8, 20, 66, 145, 161, 177, 193, 9, 35, 51, 82, 240, 21, 98, 114, 209,
    10, 22, 36, 52, 225, 37, 241, 23, 24, 25, 26, 38, 39, 40, 41, 42, 53, 54,
    55, 56, 57, 58, 67, 68, 69, 70, 71, 72, 73, 74, 83, 84, 85, 86, 87, 88,
    89, 90, 99, 100, 101, 102, 103, 104, 105, 106, 115, 116, 117, 118, 119, 120, 121, 122,
    130, 131, 132, 133, 134, 135, 136, 137, 138, 146, 147, 148, 149, 150, 151, 152, 153, 154,
    162, 163, 164, 165, 166, 167, 168, 169, 170, 178, 179, 180, 181, 182, 183, 184, 185, 186,
    194, 195, 196, 197, 198, 199, 200, 201, 202, 210, 211, 212, 213, 214, 215, 216, 217, 218,
    226, 227, 228, 229, 230, 231, 232, 233, 234, 242, 243, 244, 245, 246, 247, 248, 249, 250,
]


def _canonical_codes(bits: list[int], vals: list[int]) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length) per the canonical assignment of T.81."""
    codes = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[vals[k]] = (code, length)
            k += 1
            code += 1
        code <<= 1
    return codes


class _HuffDecoder:
    """16-bit prefix lookup table: peek 16 bits -> (symbol, code length)."""

    def __init__(self, bits: list[int], vals: list[int]):
        if sum(bits) != len(vals):
            raise CorruptEntropyStream("DHT counts do not match value list")
        self.symbol = np.zeros(1 << 16, dtype=np.uint8)
        self.length = np.zeros(1 << 16, dtype=np.uint8)
        for sym, (code, length) in _canonical_codes(bits, vals).items():
            start = code << (16 - length)
            span = 1 << (16 - length)
            self.symbol[start : start + span] = sym
            self.length[start : start + span] = length


class _BitReader:
    """MSB-first bit reader over one destuffed entropy segment."""

    __slots__ = ("data", "pos", "nbits")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.nbits = len(data) * 8

    def read(self, k: int) -> int:
        if k == 0:
            return 0
        if self.pos + k > self.nbits:
            raise CorruptEntropyStream("entropy data exhausted (premature EOI?)")
        byte0 = self.pos >> 3
        window = self.data[byte0 : byte0 + 4]
        chunk = int.from_bytes(window + b"\x00" * (4 - len(window)), "big")
        out = (chunk >> (32 - (self.pos & 7) - k)) & ((1 << k) - 1)
        self.pos += k
        return out

    def decode(self, table: _HuffDecoder) -> int:
        byte0 = self.pos >> 3
        window = self.data[byte0 : byte0 + 4]
        chunk = int.from_bytes(window + b"\xff" * (4 - len(window)), "big")
        peek = (chunk >> (16 - (self.pos & 7))) & 0xFFFF
        length = int(table.length[peek])
        if length == 0:
            raise CorruptEntropyStream("invalid Huffman code")
        if self.pos + length > self.nbits:
            raise CorruptEntropyStream("Huffman code crosses segment end")
        self.pos += length
        return int(table.symbol[peek])


def _extend(value: int, size: int) -> int:
    # Sign extension of T.81 "EXTEND": low values encode negatives.
    if size and value < (1 << (size - 1)):
        return value - (1 << size) + 1
    return value


def _be16(data: bytes, pos: int) -> int:
    if pos + 2 > len(data):
        raise CorruptEntropyStream("segment header past end of data")
    return (data[pos] << 8) | data[pos + 1]


def canonical_plane_dims(
    pixel_dims: tuple[int, int], subsampling: Subsampling, ncomps: int
) -> list[tuple[int, int]]:
    """MCU-padded plane dims for each component, in frame order."""
    h, w = pixel_dims
    if ncomps == 1:
        return [(8 * math.ceil(h / 8), 8 * math.ceil(w / 8))]
    if subsampling is Subsampling.S444:
        d = (8 * math.ceil(h / 8), 8 * math.ceil(w / 8))
        return [d, d, d]
    luma = (16 * math.ceil(h / 16), 16 * math.ceil(w / 16))
    chroma = (luma[0] // 2, luma[1] // 2)
    return [luma, chroma, chroma]


def _split_entropy(data: bytes, pos: int) -> tuple[list[bytes], list[int], int]:
    """Destuff entropy-coded bytes into segments split at RSTn markers.

    Returns (segments, restart marker low bits, offset of terminating marker).
    """
    segments: list[bytes] = []
    cur = bytearray()
    rst = []
    i = pos
    n = len(data)
    while True:
        nxt = data.find(b"\xff", i)
        if nxt < 0 or nxt + 1 >= n:
            raise CorruptEntropyStream("entropy-coded data missing terminating marker")
        cur += data[i:nxt]
        m = data[nxt + 1]
        if m == 0x00:
            cur += b"\xff"
            i = nxt + 2
        elif m == 0xFF:
            i = nxt + 1  # fill byte
        elif 0xD0 <= m <= 0xD7:
            segments.append(bytes(cur))
            cur = bytearray()
            rst.append(m & 7)
            i = nxt + 2
        else:
            segments.append(bytes(cur))
            return segments, rst, nxt


def parse_jpeg(data: bytes) -> QuantizedImage:
    """Decode a baseline JFIF stream into quantized coefficient planes."""
    if len(data) < 2 or data[0] != 0xFF or data[1] != _SOI:
        raise MissingMarker("stream does not start with SOI")
    pos = 2
    qtables: dict[int, np.ndarray] = {}
    dc_tables: dict[int, _HuffDecoder] = {}
    ac_tables: dict[int, _HuffDecoder] = {}
    frame = None
    restart_interval = 0
    result = None

    while pos < len(data):
        if data[pos] != 0xFF:
            raise MissingMarker(f"expected marker at offset {pos}")
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data):
            raise MissingMarker("truncated marker")
        marker = data[pos]
        pos += 1
        if marker == _EOI:
            break
        if marker == 0x01 or 0xD0 <= marker <= 0xD7:
            continue  # standalone markers outside a scan
        length = _be16(data, pos)
        seg = data[pos + 2 : pos + length]
        if len(seg) != length - 2:
            raise CorruptEntropyStream("segment truncated")
        seg_end = pos + length

        if marker in _SOF_FAMILY:
            raise UnsupportedProcess(f"SOF marker 0xFF{marker:02X}: not baseline sequential")
        elif marker == _SOF0:
            if frame is not None:
                raise UnsupportedProcess("multiple frames")
            frame = _parse_sof(seg)
        elif marker == _DQT:
            _parse_dqt(seg, qtables)
        elif marker == _DHT:
            _parse_dht(seg, dc_tables, ac_tables)
        elif marker == _DRI:
            restart_interval = _be16(seg, 0)
        elif marker == _SOS:
            if frame is None:
                raise MissingMarker("SOS before SOF0")
            if result is not None:
                raise UnsupportedProcess("multiple scans")
            planes, term = _decode_scan(
                data, seg_end, seg, frame, dc_tables, ac_tables, restart_interval
            )
            result = planes
            pos = term
            continue
        # APPn, COM, DNL and anything else with a length: skipped silently
        pos = seg_end

    if result is None:
        raise MissingMarker("no SOS/entropy data found")
    comps = []
    max_tq = max(c["tq"] for c in frame["comps"])
    tables = []
    for tq in range(max_tq + 1):
        if tq in qtables:
            tables.append(qtables[tq])
        else:
            tables.append(np.ones((8, 8), dtype=np.int32))
    for c, plane in zip(frame["comps"], result):
        comps.append(ComponentPlane(c["id"], plane, c["tq"]))
    out = QuantizedImage(comps, tables, frame["subsampling"], (frame["h"], frame["w"]))
    out.restart_interval = restart_interval
    return out


def _parse_sof(seg: bytes) -> dict:
    precision = seg[0]
    if precision != 8:
        raise UnsupportedProcess(f"{precision}-bit samples")
    h = (seg[1] << 8) | seg[2]
    w = (seg[3] << 8) | seg[4]
    n = seg[5]
    if n not in (1, 3):
        raise UnsupportedSampling(f"{n} components")
    comps = []
    for i in range(n):
        cid, hv, tq = seg[6 + 3 * i : 9 + 3 * i]
        comps.append({"id": cid, "hs": hv >> 4, "vs": hv & 15, "tq": tq})
    if n == 1:
        sub = Subsampling.S444
    else:
        factors = [(c["hs"], c["vs"]) for c in comps]
        if factors == [(1, 1), (1, 1), (1, 1)]:
            sub = Subsampling.S444
        elif factors == [(2, 2), (1, 1), (1, 1)]:
            sub = Subsampling.S420
        else:
            raise UnsupportedSampling(f"sampling factors {factors}")
    return {"h": h, "w": w, "comps": comps, "subsampling": sub}


def _parse_dqt(seg: bytes, qtables: dict) -> None:
    i = 0
    while i < len(seg):
        pq, tq = seg[i] >> 4, seg[i] & 15
        i += 1
        if pq != 0:
            raise UnsupportedProcess("16-bit quantization table")
        if i + 64 > len(seg):
            raise CorruptEntropyStream("DQT payload truncated")
        raster = np.zeros(64, dtype=np.int32)
        raster[ZIGZAG] = np.frombuffer(seg[i : i + 64], dtype=np.uint8)
        qtables[tq] = raster.reshape(8, 8)
        i += 64


def _parse_dht(seg: bytes, dc_tables: dict, ac_tables: dict) -> None:
    i = 0
    while i < len(seg):
        tc, th = seg[i] >> 4, seg[i] & 15
        i += 1
        if i + 16 > len(seg):
            raise CorruptEntropyStream("DHT header truncated")
        bits = list(seg[i : i + 16])
        i += 16
        count = sum(bits)
        if i + count > len(seg):
            raise CorruptEntropyStream("DHT values truncated")
        vals = list(seg[i : i + count])
        i += count
        table = _HuffDecoder(bits, vals)
        if tc == 0:
            dc_tables[th] = table
        elif tc == 1:
            ac_tables[th] = table
        else:
            raise UnsupportedProcess("arithmetic coding conditioning table")


def _decode_block(reader: _BitReader, dc: _HuffDecoder, ac: _HuffDecoder, pred: int):
    blk = np.zeros(64, dtype=np.int32)
    size = reader.decode(dc)
    if size > 11:
        raise CorruptEntropyStream("DC size out of range")
    pred += _extend(reader.read(size), size)
    blk[0] = pred
    k = 1
    while k < 64:
        rs = reader.decode(ac)
        run, size = rs >> 4, rs & 15
        if size == 0:
            if rs == 0x00:
                break
            if rs == 0xF0:
                k += 16
                continue
            raise CorruptEntropyStream(f"invalid AC symbol 0x{rs:02X}")
        k += run
        if k > 63:
            raise CorruptEntropyStream("coefficient run past end of block")
        blk[ZIGZAG[k]] = _extend(reader.read(size), size)
        k += 1
    return blk, pred


def _decode_scan(data, pos, seg, frame, dc_tables, ac_tables, restart_interval):
    ns = seg[0]
    if ns != len(frame["comps"]):
        raise UnsupportedProcess("scan does not cover all frame components")
    scan = []
    by_id = {c["id"]: i for i, c in enumerate(frame["comps"])}
    for i in range(ns):
        cs, tt = seg[1 + 2 * i], seg[2 + 2 * i]
        if cs not in by_id:
            raise CorruptEntropyStream(f"scan references unknown component {cs}")
        td, ta = tt >> 4, tt & 15
        if td not in dc_tables or ta not in ac_tables:
            raise CorruptEntropyStream("scan references undefined Huffman table")
        scan.append((by_id[cs], dc_tables[td], ac_tables[ta]))

    sub = frame["subsampling"]
    dims = canonical_plane_dims((frame["h"], frame["w"]), sub, ns)
    planes = [np.zeros(d, dtype=np.int32) for d in dims]
    if ns == 3 and sub is Subsampling.S420:
        mcu_h, mcu_w = dims[0][0] // 16, dims[0][1] // 16
        layout = [[(0, 0), (0, 1), (1, 0), (1, 1)], [(0, 0)], [(0, 0)]]
        span = [2, 1, 1]
    else:
        mcu_h, mcu_w = dims[0][0] // 8, dims[0][1] // 8
        layout = [[(0, 0)]] * ns
        span = [1] * ns

    segments, rst_seq, term = _split_entropy(data, pos)
    seg_idx = 0
    reader = _BitReader(segments[0])
    preds = [0] * ns
    mcus = 0
    for my in range(mcu_h):
        for mx in range(mcu_w):
            if restart_interval and mcus and mcus % restart_interval == 0:
                seg_idx += 1
                if seg_idx >= len(segments):
                    raise CorruptEntropyStream("missing restart marker")
                if rst_seq[seg_idx - 1] != (seg_idx - 1) % 8:
                    raise CorruptEntropyStream("restart marker out of sequence")
                reader = _BitReader(segments[seg_idx])
                preds = [0] * ns
            for si, (ci, dct, act) in enumerate(scan):
                plane = planes[ci]
                for by, bx in layout[si]:
                    blk, preds[si] = _decode_block(reader, dct, act, preds[si])
                    r0 = (my * span[si] + by) * 8
                    c0 = (mx * span[si] + bx) * 8
                    plane[r0 : r0 + 8, c0 : c0 + 8] = blk.reshape(8, 8)
            mcus += 1
    return planes, term


# --- encoder ---


class _BitWriter:
    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nacc = 0

    def write(self, value: int, nbits: int) -> None:
        self.acc = (self.acc << nbits) | (value & ((1 << nbits) - 1))
        self.nacc += nbits
        while self.nacc >= 8:
            self.nacc -= 8
            b = (self.acc >> self.nacc) & 0xFF
            self.buf.append(b)
            if b == 0xFF:
                self.buf.append(0x00)  # byte stuffing
        self.acc &= (1 << self.nacc) - 1

    def flush(self) -> None:
        if self.nacc:
            pad = 8 - self.nacc
            self.write((1 << pad) - 1, pad)


def _size_of(v: int) -> int:
    return abs(v).bit_length()


def _encode_block(w, zz, pred, dc_codes, ac_codes) -> int:
    dc = int(zz[0])
    diff = dc - pred
    size = _size_of(diff)
    if size > 11:
        raise RangeOverflow(f"DC difference {diff} needs more than 11 bits")
    code, length = dc_codes[size]
    w.write(code, length)
    if size:
        w.write(diff if diff > 0 else diff + (1 << size) - 1, size)
    run = 0
    for k in range(1, 64):
        v = int(zz[k])
        if v == 0:
            run += 1
            continue
        while run >= 16:
            code, length = ac_codes[0xF0]
            w.write(code, length)
            run -= 16
        size = _size_of(v)
        if size > 10:
            raise RangeOverflow(f"AC coefficient {v} needs more than 10 bits")
        code, length = ac_codes[(run << 4) | size]
        w.write(code, length)
        w.write(v if v > 0 else v + (1 << size) - 1, size)
        run = 0
    if run:
        code, length = ac_codes[0x00]
        w.write(code, length)
    return dc


def _plane_zigzag_blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) int plane -> (H/8, W/8, 64) blocks in zigzag order."""
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(h // 8, w // 8, 64)
    return blocks[:, :, ZIGZAG]


def _segment(marker: int, payload: bytes) -> bytes:
    return bytes([0xFF, marker]) + (len(payload) + 2).to_bytes(2, "big") + payload


def encode_jpeg(img: QuantizedImage) -> bytes:
    """Emit a baseline JFIF stream using the Annex-K typical Huffman tables."""
    ncomps = len(img.components)
    if ncomps not in (1, 3):
        raise UnsupportedSampling(f"{ncomps} components")
    dims = canonical_plane_dims(img.pixel_dims, img.subsampling, ncomps)
    for comp, d in zip(img.components, dims):
        if comp.coefficients.shape != d:
            raise BadDims(
                f"component {comp.comp_id} plane {comp.coefficients.shape} != canonical {d}"
            )

    out = bytearray(b"\xff\xd8")
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    for tq, table in enumerate(img.quant_tables):
        zz = np.asarray(table, dtype=np.int32).reshape(64)[ZIGZAG].astype(np.uint8)
        out += _segment(_DQT, bytes([tq]) + zz.tobytes())

    h, w = img.pixel_dims
    sof = bytearray([8, h >> 8, h & 0xFF, w >> 8, w & 0xFF, ncomps])
    if ncomps == 1:
        factors = [0x11]
    elif img.subsampling is Subsampling.S420:
        factors = [0x22, 0x11, 0x11]
    else:
        factors = [0x11, 0x11, 0x11]
    for comp, f in zip(img.components, factors):
        sof += bytes([comp.comp_id, f, comp.qm_index])
    out += _segment(_SOF0, bytes(sof))

    dht = bytearray([0x00]) + bytes(_DC_LUMA_BITS) + bytes(_DC_LUMA_VALS)
    dht += bytes([0x10]) + bytes(_AC_LUMA_BITS) + bytes(_AC_LUMA_VALS)
    if ncomps == 3:
        dht += bytes([0x01]) + bytes(_DC_CHROMA_BITS) + bytes(_DC_CHROMA_VALS)
        dht += bytes([0x11]) + bytes(_AC_CHROMA_BITS) + bytes(_AC_CHROMA_VALS)
    out += _segment(_DHT, bytes(dht))

    sos = bytearray([ncomps])
    for i, comp in enumerate(img.components):
        sos += bytes([comp.comp_id, 0x00 if i == 0 else 0x11])
    sos += bytes([0, 63, 0])
    out += _segment(_SOS, bytes(sos))

    luma_dc = _canonical_codes(_DC_LUMA_BITS, _DC_LUMA_VALS)
    luma_ac = _canonical_codes(_AC_LUMA_BITS, _AC_LUMA_VALS)
    chroma_dc = _canonical_codes(_DC_CHROMA_BITS, _DC_CHROMA_VALS)
    chroma_ac = _canonical_codes(_AC_CHROMA_BITS, _AC_CHROMA_VALS)
    tables = [(luma_dc, luma_ac)] + [(chroma_dc, chroma_ac)] * (ncomps - 1)

    zz_planes = [_plane_zigzag_blocks(c.coefficients) for c in img.components]
    writer = _BitWriter()
    preds = [0] * ncomps
    if ncomps == 3 and img.subsampling is Subsampling.S420:
        mcu_h, mcu_w = dims[0][0] // 16, dims[0][1] // 16
        layout = [[(0, 0), (0, 1), (1, 0), (1, 1)], [(0, 0)], [(0, 0)]]
        span = [2, 1, 1]
    else:
        mcu_h, mcu_w = dims[0][0] // 8, dims[0][1] // 8
        layout = [[(0, 0)]] * ncomps
        span = [1] * ncomps
    for my in range(mcu_h):
        for mx in range(mcu_w):
            for ci in range(ncomps):
                dc_codes, ac_codes = tables[ci]
                for by, bx in layout[ci]:
                    zz = zz_planes[ci][my * span[ci] + by, mx * span[ci] + bx]
                    preds[ci] = _encode_block(writer, zz, preds[ci], dc_codes, ac_codes)
    writer.flush()
    out += writer.buf
    out += b"\xff\xd9"
    return bytes(out)

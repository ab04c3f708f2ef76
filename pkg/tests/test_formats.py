from __future__ import annotations

import gzip
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from speckle_interp.errors import BadMagicError, DimensionOverflowError, FormatError, TruncatedError
from speckle_interp.optics import PhaseObject, SpecklePattern
from speckle_interp.pipeline.formats import (
    PHASE_MAGIC, SPECKLE_MAGIC, load_pattern, load_phase, parse_raster, pgm_bytes, raster_bytes,
    read_pgm, read_raster, save_pattern, save_phase, side_by_side, write_pgm, write_raster,
)
from speckle_interp.pipeline.idx import IMAGES_MAGIC, LABELS_MAGIC, idx_bytes, load_idx, parse_idx

f32 = st.floats(0, 1e6, width=32, allow_nan=False)


@given(arrays(np.float32, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=f32),
       st.floats(0.5, 500, width=32), st.integers(-1, 7))
def test_raster_round_trip_is_bit_exact(data, pitch, index):
    buf = raster_bytes(data, pitch, index)
    out, p, i, magic = parse_raster(buf)
    assert out.tobytes() == data.tobytes()
    assert (p, i, magic) == (pitch, index, SPECKLE_MAGIC)
    assert raster_bytes(out, p, i) == buf


def test_raster_header_layout():
    buf = raster_bytes(np.zeros((2, 3), dtype=np.float32), 2.5, 4)
    assert buf[:4] == b"SPK1"
    assert struct.unpack_from("<IIfi", buf, 4) == (3, 2, 2.5, 4)
    assert len(buf) == 20 + 4 * 6


def test_raster_errors():
    buf = raster_bytes(np.ones((4, 4), dtype=np.float32), 2.5, 0)
    with pytest.raises(BadMagicError):
        parse_raster(b"NOPE" + buf[4:])
    with pytest.raises(BadMagicError):
        parse_raster(buf, expect=PHASE_MAGIC)
    with pytest.raises(TruncatedError) as err:
        parse_raster(buf[:-1])
    assert (err.value.expected, err.value.actual) == (len(buf), len(buf) - 1)
    with pytest.raises(TruncatedError):
        parse_raster(buf[:10])
    with pytest.raises(FormatError):
        parse_raster(buf + b"\0")
    with pytest.raises(ValueError):
        raster_bytes(np.zeros(4), 1.0, 0)


def test_pattern_and_phase_files(tmp_path, rng):
    p = SpecklePattern(rng.random((8, 8)).astype(np.float32), 5.0, 1)
    back = load_pattern(save_pattern(tmp_path / "a.spk", p))
    assert back.intensity.tobytes() == p.intensity.tobytes()
    assert back.pixel_pitch_um == 5.0 and back.pitch_index == 1
    obj = PhaseObject(np.full((4, 4), np.pi))
    path = save_phase(tmp_path / "a.pho", obj)
    assert read_raster(path)[2:] == (-1, PHASE_MAGIC)
    assert load_phase(path, 7).phase.max() <= np.pi and load_phase(path, 7).source_label == 7
    with pytest.raises(BadMagicError):
        load_pattern(path)
    write_raster(tmp_path / "b.spk", np.ones((2, 2)), 1.0, 0)
    assert read_raster(tmp_path / "b.spk")[0].dtype == np.float32


def test_pgm_format(tmp_path):
    x = np.array([[0.0, 1.0], [2.0, 4.0]])
    buf = pgm_bytes(x)
    assert buf.startswith(b"P5\n2 2\n65535\n")
    assert np.frombuffer(buf[-8:], ">u2").tolist() == [0, 16384, 32768, 65535]
    assert pgm_bytes(np.ones((2, 2))).endswith(b"\0" * 8)
    np.testing.assert_array_equal(read_pgm(write_pgm(tmp_path / "x.pgm", x)), [[0, 16384], [32768, 65535]])


def test_pgm_payload_starting_with_whitespace_bytes(tmp_path):
    # 0x0a0a as the first sample must not be mistaken for header whitespace
    x = np.array([[0x0A0A, 0], [65535, 0x2020]], dtype=float)
    np.testing.assert_array_equal(read_pgm(write_pgm(tmp_path / "w.pgm", x)), x)


def test_pgm_errors(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(BadMagicError):
        read_pgm(tmp_path / "bad.pgm")
    (tmp_path / "short.pgm").write_bytes(pgm_bytes(np.eye(3))[:-1])
    with pytest.raises(TruncatedError):
        read_pgm(tmp_path / "short.pgm")


def test_side_by_side_tiles():
    out = side_by_side([np.eye(4), np.eye(2)], gap=1)
    assert out.shape == (4, 9)
    assert (out[:, 4] == 1).all()
    np.testing.assert_array_equal(out[:, 5:], np.repeat(np.repeat(np.eye(2), 2, 0), 2, 1))


def test_idx_images_example():
    payload = bytes(range(256)) * 6 + bytes(1568 - 1536)
    images = parse_idx(struct.pack(">IIII", IMAGES_MAGIC, 2, 28, 28) + payload)
    assert images.shape == (2, 28, 28)
    assert images[0, 0, :5].tolist() == [0, 1, 2, 3, 4]


def test_idx_labels_example():
    labels = parse_idx(struct.pack(">II", LABELS_MAGIC, 5) + bytes([0, 1, 2, 3, 4]))
    assert labels.tolist() == [0, 1, 2, 3, 4]


def test_idx_errors():
    good = struct.pack(">IIII", IMAGES_MAGIC, 2, 28, 28) + bytes(1568)
    with pytest.raises(TruncatedError) as err:
        parse_idx(good[:-1])
    assert (err.value.expected, err.value.actual) == (len(good), len(good) - 1)
    with pytest.raises(BadMagicError):
        parse_idx(struct.pack(">II", 0x0802, 1) + b"\0")
    with pytest.raises(TruncatedError):
        parse_idx(b"\0\0")
    with pytest.raises(TruncatedError):
        parse_idx(struct.pack(">II", IMAGES_MAGIC, 1))
    with pytest.raises(DimensionOverflowError):
        parse_idx(struct.pack(">IIII", IMAGES_MAGIC, 0xFFFFFFFF, 0xFFFF, 0xFFFF))


@given(arrays(np.uint8, st.tuples(st.integers(0, 4), st.integers(1, 5), st.integers(1, 5))))
def test_idx_round_trip(images):
    assert np.array_equal(parse_idx(idx_bytes(images)), images)


def test_gzipped_idx(tmp_path):
    labels = np.arange(10, dtype=np.uint8)
    (tmp_path / "l.idx1-ubyte.gz").write_bytes(gzip.compress(idx_bytes(labels)))
    assert load_idx(tmp_path / "l.idx1-ubyte.gz").tolist() == list(range(10))

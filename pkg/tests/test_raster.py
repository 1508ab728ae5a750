import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cpburn.raster import (C2Raster, FormatError, RasterGrid, SizeMismatchError, TemporalStack,
                           decode_raster, encode_raster, read_raster, validate_c2, write_raster)


def test_read_small_raster(tmp_path):
    g = RasterGrid(np.array([[1, 2], [3, 4]], dtype=np.float32))
    write_raster(g, tmp_path / "a.cpr")
    back = read_raster(tmp_path / "a.cpr")
    assert (back.width, back.height, back.bands) == (2, 2, 1)
    assert back.data.ravel().tolist() == [1, 2, 3, 4]
    assert back.valid.all()


def test_truncated_payload_is_size_mismatch(tmp_path):
    g = RasterGrid(np.arange(4, dtype=np.float32).reshape(2, 2))
    buf = encode_raster(g)
    (tmp_path / "t.cpr").write_bytes(buf[:-4])
    with pytest.raises(SizeMismatchError):
        read_raster(tmp_path / "t.cpr")


@pytest.mark.parametrize("field,value", [
    ("width", -1), ("height", "2"), ("bands", 1.5), ("band_names", "x"), ("has_mask", 1),
    ("orbit", "sideways"), ("beam_mode", "SC50"),
])
def test_malformed_header_names_field(field, value):
    hdr = {"width": 2, "height": 2, "bands": 1, "band_names": ["a"], "has_mask": False}
    hdr[field] = value
    raw = repr(hdr).replace("'", '"').replace("False", "false").encode()
    buf = b"CPR1" + struct.pack("<I", len(raw)) + raw + bytes(16)
    with pytest.raises(FormatError, match=field):
        decode_raster(buf)


def test_missing_field_and_bad_magic():
    raw = b'{"width":1,"height":1,"bands":1,"band_names":["a"]}'
    with pytest.raises(FormatError, match="has_mask"):
        decode_raster(b"CPR1" + struct.pack("<I", len(raw)) + raw + bytes(4))
    with pytest.raises(FormatError, match="magic"):
        decode_raster(b"TIFF" + bytes(8))


def test_empty_grid_is_header_only(tmp_path):
    g = RasterGrid(np.zeros((1, 0, 0), dtype=np.float32))
    write_raster(g, tmp_path / "e.cpr")
    buf = (tmp_path / "e.cpr").read_bytes()
    (hlen,) = struct.unpack("<I", buf[4:8])
    assert len(buf) == 8 + hlen
    assert read_raster(tmp_path / "e.cpr") == g


def test_writes_are_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    g = RasterGrid(rng.normal(size=(2, 5, 7)), band_names=["x", "y"], geo_tag="EPSG:32611")
    write_raster(g, tmp_path / "1.cpr")
    write_raster(g, tmp_path / "2.cpr")
    assert (tmp_path / "1.cpr").read_bytes() == (tmp_path / "2.cpr").read_bytes()


def test_nodata_writes_mask_plane():
    valid = np.ones((3, 4), bool)
    valid[1, 2] = False
    g = RasterGrid(np.ones((2, 3, 4)), valid)
    buf = encode_raster(g)
    assert b'"has_mask":true' in buf
    assert buf[-12:] == valid.astype(np.uint8).tobytes()
    unmasked = encode_raster(RasterGrid(np.ones((2, 3, 4))))
    assert b'"has_mask":false' in unmasked
    # "false" is one byte longer than "true"
    assert len(unmasked) == len(buf) - 12 + 1
    assert decode_raster(buf) == g


def test_band_sequential_index():
    h, w, b = 3, 4, 2
    flat = np.arange(b * h * w, dtype=np.float32)
    g = decode_raster(encode_raster(RasterGrid(flat.reshape(b, h, w))))
    payload = np.frombuffer(encode_raster(g)[-4 * flat.size:], "<f4")
    for band in range(b):
        for r in range(h):
            for c in range(w):
                assert payload[(band * h + r) * w + c] == g.data[band, r, c]


@st.composite
def rasters(draw):
    b = draw(st.integers(1, 3))
    h = draw(st.integers(0, 6))
    w = draw(st.integers(0, 6))
    data = draw(hnp.arrays(np.float32, (b, h, w), elements=st.floats(width=32, allow_nan=False)))
    valid = draw(hnp.arrays(bool, (h, w)))
    meta = draw(st.fixed_dictionaries({}, optional={
        "geo_tag": st.text(max_size=12),
        "orbit": st.sampled_from(["ascending", "descending"]),
        "beam_mode": st.sampled_from(["SC30MCPA", "SC30MCPD"]),
        "timestamps": st.just(["2023-06-01"]),
    }))
    return RasterGrid(data, valid, [f"b{i}" for i in range(b)], **meta)


@settings(max_examples=200, deadline=None)
@given(rasters())
def test_round_trip_property(g):
    buf = encode_raster(g)
    back = decode_raster(buf)
    assert back == g
    assert encode_raster(back) == buf


def test_validate_c2_examples():
    ones = np.ones((4, 4))
    zero = np.zeros((4, 4))
    assert validate_c2(C2Raster(ones, ones, zero, zero)) == 0

    c11 = ones.copy()
    c11[2, 3] = -0.1
    assert validate_c2(C2Raster(c11, ones, zero, zero)) == 1

    c12 = zero.copy()
    c12[0, 0] = 1.5
    c2 = C2Raster(ones, ones, c12, zero)
    assert validate_c2(c2) == 1
    assert c2.valid.all()
    assert validate_c2(c2, repair=True) == 1
    assert not c2.valid[0, 0] and c2.valid.sum() == 15
    assert validate_c2(c2) == 0


def test_validate_c2_tolerates_float_noise_on_rank_one():
    # rank-1 C2 from a single scatterer sits exactly on the Cauchy-Schwarz bound
    h, v = 0.3 + 0.4j, -0.2 + 0.9j
    c12 = h * np.conj(v) * (1 + 2e-7)
    c2 = C2Raster([[abs(h) ** 2]], [[abs(v) ** 2]], [[c12.real]], [[c12.imag]])
    assert validate_c2(c2) == 0


def test_c2_grid_round_trip():
    rng = np.random.default_rng(3)
    c2 = C2Raster(*rng.random((4, 5, 6)), meta={"orbit": "descending"})
    back = C2Raster.from_grid(decode_raster(encode_raster(c2.to_grid())))
    assert back.meta == {"orbit": "descending"}
    np.testing.assert_allclose(back.c12_im, c2.c12_im.astype(np.float32))


def test_temporal_stack_invariants():
    g = RasterGrid(np.ones((1, 2, 2)))
    TemporalStack([g, g], ["2023-05-01", "2023-05-13"], "SC30MCPA", "ascending")
    with pytest.raises(ValueError, match="increasing"):
        TemporalStack([g, g], ["2023-05-13", "2023-05-01"], "SC30MCPA", "ascending")
    with pytest.raises(ValueError, match="shape"):
        TemporalStack([g, RasterGrid(np.ones((1, 3, 2)))], ["2023-05-01", "2023-05-13"],
                      "SC30MCPA", "ascending")
    other = RasterGrid(np.ones((1, 2, 2)), orbit="descending")
    with pytest.raises(ValueError, match="acquired"):
        TemporalStack([g, other], ["2023-05-01", "2023-05-13"], "SC30MCPA", "ascending")
    with pytest.raises(ValueError):
        TemporalStack([g], ["2023-05-01"], "SC30MCPX", "ascending")

"""Raster containers and the CPR1 on-disk format.

A CPR1 file is laid out as::

    b"CPR1" | u32 LE header length | UTF-8 JSON header | float32 LE payload | [u8 mask]

The payload is band-sequential, so band ``b``, row ``r``, column ``c`` lives at
flat index ``(b * height + r) * width + c``. The mask plane (1 = valid) is only
written when at least one pixel is nodata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MAGIC = b"CPR1"
BEAM_MODES = ("SC30MCPA", "SC30MCPB", "SC30MCPC", "SC30MCPD")
ORBITS = ("ascending", "descending")

C2_BANDS = ("c11", "c22", "c12_re", "c12_im")


class FormatError(ValueError):
    """Raised when a CPR1 file is malformed."""


class SizeMismatchError(FormatError):
    """Raised when the payload size disagrees with the header."""


@dataclass(eq=False)
class RasterGrid:
    """Multi-band float32 raster with a validity mask.

    ``data`` has shape ``(bands, height, width)``; ``valid`` has shape
    ``(height, width)`` and is True where the pixel carries data.
    """

    data: np.ndarray
    valid: Optional[np.ndarray] = None
    band_names: Optional[list[str]] = None
    timestamps: Optional[list[str]] = None
    beam_mode: Optional[str] = None
    orbit: Optional[str] = None
    geo_tag: Optional[str] = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise ValueError(f"raster data must be 2-D or 3-D, got shape {data.shape}")
        self.data = np.ascontiguousarray(data, dtype="<f4")
        if self.valid is None:
            self.valid = np.ones(self.data.shape[1:], dtype=bool)
        else:
            self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if self.valid.shape != self.data.shape[1:]:
            raise ValueError(
                f"mask shape {self.valid.shape} does not match raster {self.data.shape[1:]}"
            )
        if self.band_names is None:
            self.band_names = [f"band{i + 1}" for i in range(self.bands)]
        else:
            self.band_names = [str(n) for n in self.band_names]
        if len(self.band_names) != self.bands:
            raise ValueError(f"{len(self.band_names)} band names for {self.bands} bands")
        if len(set(self.band_names)) != len(self.band_names):
            raise ValueError(f"duplicate band names: {self.band_names}")
        if self.beam_mode is not None and self.beam_mode not in BEAM_MODES:
            raise ValueError(f"unknown beam mode {self.beam_mode!r}")
        if self.orbit is not None and self.orbit not in ORBITS:
            raise ValueError(f"unknown orbit {self.orbit!r}")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def band(self, name: str) -> np.ndarray:
        try:
            return self.data[self.band_names.index(name)]
        except ValueError:
            raise KeyError(f"no band named {name!r} (have {self.band_names})") from None

    def header(self) -> dict:
        hdr = {
            "width": self.width,
            "height": self.height,
            "bands": self.bands,
            "band_names": list(self.band_names),
            "has_mask": not bool(self.valid.all()),
        }
        for key in ("timestamps", "beam_mode", "orbit", "geo_tag"):
            value = getattr(self, key)
            if value is not None:
                hdr[key] = list(value) if key == "timestamps" else value
        return hdr

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (
            self.header() == other.header()
            and np.array_equal(self.valid, other.valid)
            and self.data.tobytes() == other.data.tobytes()
        )


def encode_raster(grid: RasterGrid) -> bytes:
    hdr = json.dumps(grid.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(hdr)), hdr, grid.data.astype("<f4").tobytes()]
    if not grid.valid.all():
        parts.append(grid.valid.astype(np.uint8).tobytes())
    return b"".join(parts)


def _field(hdr: dict, name: str, kind, optional: bool = False):
    if name not in hdr:
        if optional:
            return None
        raise FormatError(f"header field {name!r} is missing")
    value = hdr[name]
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool) and value >= 0
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise FormatError(f"header field {name!r} has invalid value {value!r}")
    return value


def decode_raster(buf: bytes) -> RasterGrid:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("header field 'magic' is not b'CPR1'")
    (hlen,) = struct.unpack("<I", buf[4:8])
    if 8 + hlen > len(buf):
        raise SizeMismatchError(f"header length {hlen} exceeds file size {len(buf)}")
    try:
        hdr = json.loads(buf[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header field 'json' cannot be parsed: {exc}") from None
    if not isinstance(hdr, dict):
        raise FormatError("header field 'json' is not an object")

    width = _field(hdr, "width", int)
    height = _field(hdr, "height", int)
    bands = _field(hdr, "bands", int)
    names = _field(hdr, "band_names", list)
    has_mask = _field(hdr, "has_mask", bool)
    timestamps = _field(hdr, "timestamps", list, optional=True)
    beam_mode = _field(hdr, "beam_mode", str, optional=True)
    orbit = _field(hdr, "orbit", str, optional=True)
    geo_tag = _field(hdr, "geo_tag", str, optional=True)
    if len(names) != bands or not all(isinstance(n, str) for n in names):
        raise FormatError(f"header field 'band_names' has invalid value {names!r}")
    if beam_mode is not None and beam_mode not in BEAM_MODES:
        raise FormatError(f"header field 'beam_mode' has invalid value {beam_mode!r}")
    if orbit is not None and orbit not in ORBITS:
        raise FormatError(f"header field 'orbit' has invalid value {orbit!r}")

    npix = width * height
    expected = 4 * npix * bands + (npix if has_mask else 0)
    payload = buf[8 + hlen :]
    if len(payload) != expected:
        raise SizeMismatchError(
            f"payload has {len(payload)} bytes, header implies {expected} "
            f"({width}x{height}x{bands}, has_mask={has_mask})"
        )
    data = np.frombuffer(payload, dtype="<f4", count=npix * bands).reshape(bands, height, width)
    if has_mask:
        raw = np.frombuffer(payload, dtype=np.uint8, offset=4 * npix * bands)
        if np.any(raw > 1):
            raise FormatError("header field 'has_mask' points at a mask with values other than 0/1")
        valid = raw.reshape(height, width).astype(bool)
    else:
        valid = np.ones((height, width), dtype=bool)
    return RasterGrid(
        data=data.copy(),
        valid=valid,
        band_names=names,
        timestamps=timestamps,
        beam_mode=beam_mode,
        orbit=orbit,
        geo_tag=geo_tag,
    )


def write_raster(grid: RasterGrid, path) -> None:
    """Write ``grid`` to ``path`` in CPR1 format."""
    Path(path).write_bytes(encode_raster(grid))


def read_raster(path) -> RasterGrid:
    """Read a CPR1 file.

    Raises:
        FormatError: the header is malformed; the message names the field.
        SizeMismatchError: the payload is shorter or longer than declared.
    """
    return decode_raster(Path(path).read_bytes())


@dataclass(eq=False)
class C2Raster:
    """Per-pixel Hermitian 2x2 covariance ``[[c11, c12], [conj(c12), c22]]``."""

    c11: np.ndarray
    c22: np.ndarray
    c12_re: np.ndarray
    c12_im: np.ndarray
    valid: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.c11 = np.asarray(self.c11, dtype=np.float64)
        self.c22 = np.asarray(self.c22, dtype=np.float64)
        self.c12_re = np.asarray(self.c12_re, dtype=np.float64)
        self.c12_im = np.asarray(self.c12_im, dtype=np.float64)
        shape = self.c11.shape
        for plane in (self.c22, self.c12_re, self.c12_im):
            if plane.shape != shape:
                raise ValueError("C2 planes must share one shape")
        if self.valid is None:
            self.valid = np.ones(shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c11.shape

    @property
    def c12(self) -> np.ndarray:
        return self.c12_re + 1j * self.c12_im

    def scaled(self, k: float) -> "C2Raster":
        return C2Raster(k * self.c11, k * self.c22, k * self.c12_re, k * self.c12_im,
                        self.valid.copy(), dict(self.meta))

    def to_grid(self) -> RasterGrid:
        data = np.stack([self.c11, self.c22, self.c12_re, self.c12_im])
        return RasterGrid(data, self.valid, list(C2_BANDS), **self.meta)

    @classmethod
    def from_grid(cls, grid: RasterGrid) -> "C2Raster":
        planes = [grid.band(name) for name in C2_BANDS]
        meta = {k: getattr(grid, k) for k in ("timestamps", "beam_mode", "orbit", "geo_tag")
                if getattr(grid, k) is not None}
        return cls(*planes, valid=grid.valid.copy(), meta=meta)


def validate_c2(c2: C2Raster, repair: bool = False, rel_eps: float = 1e-6) -> int:
    """Count valid pixels that are not a physical covariance.

    A pixel violates when a diagonal power is negative or non-finite, or when
    ``|c12|^2 > c11*c22*(1 + rel_eps)``. With ``repair=True`` the offending
    pixels are marked nodata in ``c2.valid`` (in place).
    """
    with np.errstate(invalid="ignore", over="ignore"):
        finite = (np.isfinite(c2.c11) & np.isfinite(c2.c22)
                  & np.isfinite(c2.c12_re) & np.isfinite(c2.c12_im))
        prod = c2.c11 * c2.c22
        cs_ok = (c2.c12_re**2 + c2.c12_im**2) <= prod * (1.0 + rel_eps)
        ok = finite & (c2.c11 >= 0) & (c2.c22 >= 0) & cs_ok
    bad = c2.valid & ~ok
    if repair:
        c2.valid &= ok
    return int(bad.sum())


def _check_iso_date(ts: str) -> str:
    from datetime import date, datetime

    try:
        return str(date.fromisoformat(ts))
    except ValueError:
        return datetime.fromisoformat(ts).isoformat()


@dataclass(eq=False)
class TemporalStack:
    """Co-registered acquisitions sharing beam mode and orbit direction."""

    epochs: Sequence[RasterGrid]
    timestamps: Sequence[str]
    beam_mode: str
    orbit: str

    def __post_init__(self) -> None:
        self.epochs = list(self.epochs)
        self.timestamps = [str(t) for t in self.timestamps]
        if len(self.epochs) != len(self.timestamps):
            raise ValueError("one timestamp per epoch required")
        if self.beam_mode not in BEAM_MODES:
            raise ValueError(f"unknown beam mode {self.beam_mode!r}")
        if self.orbit not in ORBITS:
            raise ValueError(f"unknown orbit {self.orbit!r}")
        parsed = [_check_iso_date(t) for t in self.timestamps]
        if any(b <= a for a, b in zip(parsed, parsed[1:])):
            raise ValueError(f"timestamps must be strictly increasing: {self.timestamps}")
        if self.epochs:
            ref = self.epochs[0]
            for i, ep in enumerate(self.epochs):
                if ep.data.shape != ref.data.shape:
                    raise ValueError(f"epoch {i} has shape {ep.data.shape}, expected {ref.data.shape}")
                if ep.beam_mode not in (None, self.beam_mode) or ep.orbit not in (None, self.orbit):
                    raise ValueError(
                        f"epoch {i} acquired as {ep.beam_mode}/{ep.orbit}, "
                        f"stack is {self.beam_mode}/{self.orbit}"
                    )

    def __len__(self) -> int:
        return len(self.epochs)

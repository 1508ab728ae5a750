"""Compact-pol radar vegetation index (CpRVI)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polarimetry import G0_FLOOR, StokesRaster, stokes_from_c2
from .raster import C2Raster, RasterGrid


@dataclass(eq=False)
class CpRVIRaster:
    cprvi: np.ndarray
    gd: np.ndarray
    valid: np.ndarray

    def to_grid(self) -> RasterGrid:
        return RasterGrid(np.stack([self.cprvi, self.gd]), self.valid, ["cprvi", "gd"])


def geodesic_distance(c2: C2Raster, g0_floor: float = G0_FLOOR):
    """Normalized angle between the covariance and the ideal depolarizer.

    With the real Frobenius inner product and the identity as reference,
    ``gd = (2/pi) * arccos(tr(C) / (sqrt(2) * ||C||_F))``. The angle is taken
    as ``atan2`` of the traceless and trace components of ``C`` so that pixels
    close to ``k*I`` keep full precision. ``gd`` lies in ``[0, 0.5]`` for
    positive semidefinite ``C``.

    Returns ``(gd, valid)``.
    """
    trace = c2.c11 + c2.c22
    # ||C - tr(C)/2 * I||_F
    dev = np.sqrt(0.5 * (c2.c11 - c2.c22) ** 2 + 2.0 * (c2.c12_re**2 + c2.c12_im**2))
    along = trace / np.sqrt(2.0)
    valid = c2.valid & np.isfinite(trace) & np.isfinite(dev) & (trace > g0_floor)
    gd = np.where(valid, np.arctan2(dev, along) * (2.0 / np.pi), 0.0)
    return np.clip(gd, 0.0, 1.0), valid


def cprvi(s: StokesRaster, gd: np.ndarray, gd_valid=None) -> CpRVIRaster:
    """``(min(p, q) / max(p, q)) ** (3 gd) * max(1 - 1.5 gd, 0)``.

    ``p`` and ``q`` are the two circular power components ``(g0 -/+ g3) / 2``.
    Pixels whose larger component is not positive are nodata.
    """
    valid = s.valid.copy()
    if gd_valid is not None:
        valid &= gd_valid
    p = 0.5 * (s.g0 - s.g3)
    q = 0.5 * (s.g0 + s.g3)
    lo = np.maximum(np.minimum(p, q), 0.0)
    hi = np.maximum(p, q)
    valid &= np.isfinite(hi) & (hi > 0) & (s.g0 > G0_FLOOR)
    ratio = np.where(valid, lo / np.where(valid, hi, 1.0), 0.0)
    gd = np.where(valid, gd, 0.0)
    value = np.power(ratio, 3.0 * gd) * np.maximum(1.0 - 1.5 * gd, 0.0)
    value = np.where(valid, np.clip(value, 0.0, 1.0), 0.0)
    return CpRVIRaster(value, gd, valid)


def cprvi_from_c2(c2: C2Raster, sign_convention: int = 1) -> CpRVIRaster:
    gd, gd_valid = geodesic_distance(c2)
    return cprvi(stokes_from_c2(c2, sign_convention), gd, gd_valid)

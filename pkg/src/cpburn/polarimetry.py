"""Stokes vector, Barakat degree of polarization and the m-chi decomposition."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .raster import C2Raster, RasterGrid

logger = logging.getLogger(__name__)

G0_FLOOR = 1e-10
MCHI_BANDS = ("mchi_r", "mchi_g", "mchi_b")


@dataclass(eq=False)
class StokesRaster:
    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    valid: np.ndarray

    def scaled(self, k: float) -> "StokesRaster":
        return StokesRaster(k * self.g0, k * self.g1, k * self.g2, k * self.g3, self.valid.copy())


@dataclass(eq=False)
class MChiProducts:
    m: np.ndarray
    sin2chi: np.ndarray
    rgb: RasterGrid
    valid: np.ndarray

    def to_grid(self) -> RasterGrid:
        """Five-band raster ``(m, sin2chi, mchi_r, mchi_g, mchi_b)``."""
        data = np.concatenate([np.stack([self.m, self.sin2chi]), self.rgb.data])
        return RasterGrid(data, self.valid, ["m", "sin2chi", *MCHI_BANDS], geo_tag=self.rgb.geo_tag)


def stokes_from_c2(c2: C2Raster, sign_convention: int = 1) -> StokesRaster:
    """Stokes vector of the received wave.

    ``g3 = sign * j(C12 - C21)``; for a Hermitian matrix ``C12 - C21 = 2j Im(c12)``
    so ``g3 = -2 * sign * Im(c12)``. ``sign_convention`` selects the transmit
    helicity.
    """
    if sign_convention not in (1, -1):
        raise ValueError("sign_convention must be +1 or -1")
    g0 = c2.c11 + c2.c22
    g1 = c2.c11 - c2.c22
    g2 = 2.0 * c2.c12_re
    g3 = -2.0 * sign_convention * c2.c12_im
    return StokesRaster(g0, g1, g2, g3, c2.valid.copy())


def barakat_m_chi(s: StokesRaster, g0_floor: float = G0_FLOOR):
    """Degree of polarization ``m`` and ``sin(2 chi)``.

    Returns ``(m, sin2chi, valid)``. Pixels with ``g0 <= g0_floor`` become
    nodata; where ``m == 0`` the ellipticity is undefined and ``sin2chi`` is 0.
    """
    valid = s.valid & np.isfinite(s.g0) & (s.g0 > g0_floor)
    g0 = np.where(valid, s.g0, 1.0)
    pol = np.sqrt(s.g1**2 + s.g2**2 + s.g3**2)
    m = np.clip(np.where(valid, pol / g0, 0.0), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sin2chi = np.where(pol > 0, -s.g3 / np.where(pol > 0, pol, 1.0), 0.0)
    # -g3/(m*g0) == -g3/|g_pol| before m is clipped; keeps |sin2chi| <= 1 when m saturates
    sin2chi = np.clip(np.where(valid, sin2chi, 0.0), -1.0, 1.0)
    return m, sin2chi, valid


def mchi_rgb(s: StokesRaster, m: np.ndarray, sin2chi: np.ndarray,
             valid: Optional[np.ndarray] = None) -> RasterGrid:
    """RGB composite ``(R, G, B)`` with ``R^2 + G^2 + B^2 == g0``."""
    if valid is None:
        valid = s.valid
    g0 = np.where(valid, s.g0, 0.0)
    radicands = np.stack([
        m * g0 * (1.0 + sin2chi) / 2.0,
        g0 * (1.0 - m),
        m * g0 * (1.0 - sin2chi) / 2.0,
    ])
    negative = int(np.count_nonzero(radicands < 0))
    if negative:
        logger.debug("clamped %d negative m-chi radicands to 0", negative)
    rgb = np.sqrt(np.maximum(radicands, 0.0))
    rgb[:, ~valid] = 0.0
    return RasterGrid(rgb, valid, list(MCHI_BANDS))


def mchi_decompose(c2: C2Raster, sign_convention: int = 1) -> MChiProducts:
    s = stokes_from_c2(c2, sign_convention)
    m, sin2chi, valid = barakat_m_chi(s)
    rgb = mchi_rgb(s, m, sin2chi, valid)
    rgb.geo_tag = c2.meta.get("geo_tag")
    return MChiProducts(np.where(valid, m, 0.0), sin2chi, rgb, valid)

"""Speckle filtering, temporal compositing, log-ratio imaging and burn masks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .raster import C2Raster, RasterGrid, TemporalStack

PROVENANCES = ("pseudo_label", "optical_nbr", "synthetic_truth", "model_prediction")


@dataclass(eq=False)
class LogRatioImage:
    channels: RasterGrid
    post_timestamp: Optional[str] = None
    prefire_epoch_count: int = 1


@dataclass(eq=False)
class BurnMask:
    """Binary burn map. ``mask`` is forced to 0 wherever ``valid`` is False."""

    mask: np.ndarray
    valid: np.ndarray
    provenance: str

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self.valid = np.asarray(self.valid, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool) & self.valid
        if self.mask.shape != self.valid.shape:
            raise ValueError("mask and validity planes differ in shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def to_grid(self) -> RasterGrid:
        return RasterGrid(self.mask.astype(np.float32), self.valid, [self.provenance])

    @classmethod
    def from_grid(cls, grid: RasterGrid, provenance: Optional[str] = None) -> "BurnMask":
        if grid.bands != 1:
            raise ValueError(f"a burn mask raster has one band, got {grid.bands}")
        if provenance is None:
            name = grid.band_names[0]
            provenance = name if name in PROVENANCES else "synthetic_truth"
        return cls(grid.data[0] > 0.5, grid.valid.copy(), provenance)

    @classmethod
    def ones_like(cls, shape, provenance: str = "optical_nbr") -> "BurnMask":
        return cls(np.ones(shape, bool), np.ones(shape, bool), provenance)


def _window_sum(x: np.ndarray, window: int) -> np.ndarray:
    # zero padding outside the image turns the mean into a sum over in-bounds pixels
    return uniform_filter(x, size=window, mode="constant", cval=0.0) * float(window * window)


def speckle_filter(grid: RasterGrid, method: str = "boxcar", window: int = 5,
                   looks: float = 1.0) -> RasterGrid:
    """Nodata-aware boxcar or Lee filter, per band.

    Statistics use only valid, in-bounds pixels of the window, so the window
    shrinks at image edges and around nodata. Output validity equals input
    validity.

    Args:
        grid: input raster, linear power units.
        method: ``"boxcar"`` (local mean) or ``"lee"`` (local-statistics Lee).
        window: odd window side, at least 3.
        looks: equivalent number of looks of the input; Lee only.
    """
    if window < 3 or window % 2 != 1:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if method not in ("boxcar", "lee"):
        raise ValueError(f"unknown filter method {method!r}")
    if looks <= 0:
        raise ValueError("looks must be positive")
    w = grid.valid.astype(np.float64)
    count = _window_sum(w, window)
    safe = np.where(count > 0.5, count, 1.0)
    out = np.empty(grid.data.shape, dtype=np.float64)
    for b in range(grid.bands):
        x = np.where(grid.valid, grid.data[b].astype(np.float64), 0.0)
        mean = _window_sum(x, window) / safe
        if method == "boxcar":
            out[b] = mean
            continue
        var = np.maximum(_window_sum(x * x, window) / safe - mean**2, 0.0)
        cu2 = 1.0 / looks
        # signal variance estimate under multiplicative noise
        var_x = np.maximum((var - mean**2 * cu2) / (1.0 + cu2), 0.0)
        k = np.where(var > 0, var_x / np.where(var > 0, var, 1.0), 0.0)
        out[b] = mean + k * (x - mean)
    out[:, ~grid.valid] = 0.0
    return RasterGrid(out, grid.valid.copy(), list(grid.band_names), grid.timestamps,
                      grid.beam_mode, grid.orbit, grid.geo_tag)


def median_composite(stack: TemporalStack) -> RasterGrid:
    """Per-pixel temporal median over the valid epochs of ``stack``."""
    if len(stack) == 0:
        raise ValueError("cannot composite an empty stack")
    cube = np.stack([np.where(ep.valid, ep.data.astype(np.float64), np.nan) for ep in stack.epochs])
    valid = np.any([ep.valid for ep in stack.epochs], axis=0)
    with warnings.catch_warnings():
        # all-NaN pixels are expected; they are masked below
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(cube, axis=0)
    med[:, ~valid] = 0.0
    ref = stack.epochs[0]
    return RasterGrid(med, valid, list(ref.band_names), beam_mode=stack.beam_mode,
                      orbit=stack.orbit, geo_tag=ref.geo_tag)


def intensity_grid(c2: C2Raster) -> RasterGrid:
    """Detected CH and CV intensities (the diagonal of C2) as a 2-band raster."""
    meta = {k: c2.meta.get(k) for k in ("timestamps", "beam_mode", "orbit", "geo_tag")}
    return RasterGrid(np.stack([c2.c11, c2.c22]), c2.valid, ["ch", "cv"], **meta)


def log_ratio(post: RasterGrid, pre_median: RasterGrid, post_timestamp: Optional[str] = None,
              prefire_epoch_count: int = 1) -> LogRatioImage:
    """Per-band ``log10(post / pre_median)``; non-positive inputs become nodata."""
    if post.data.shape != pre_median.data.shape:
        raise ValueError(f"post {post.data.shape} and pre {pre_median.data.shape} differ in shape")
    a = post.data.astype(np.float64)
    b = pre_median.data.astype(np.float64)
    ok = (a > 0) & (b > 0) & np.isfinite(a) & np.isfinite(b)
    valid = post.valid & pre_median.valid & ok.all(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(valid, np.log10(np.where(ok, a, 1.0) / np.where(ok, b, 1.0)), 0.0)
    names = [f"lr_{n}" for n in post.band_names]
    if post_timestamp is None and post.timestamps:
        post_timestamp = post.timestamps[-1]
    grid = RasterGrid(lr, valid, names, timestamps=[post_timestamp] if post_timestamp else None,
                      geo_tag=post.geo_tag)
    return LogRatioImage(grid, post_timestamp, prefire_epoch_count)


def pseudo_label(lr: LogRatioImage, th: float = 0.05, m: Optional[BurnMask] = None,
                 aggregate: str = "max") -> BurnMask:
    """Binarize ``|I| > th`` and intersect with the optical mask ``m``.

    ``aggregate`` chooses how the channels form ``|I|``: ``"max"`` takes the
    largest per-channel magnitude, ``"mean"`` the magnitude of the channel mean.
    """
    if th <= 0:
        raise ValueError("threshold must be positive")
    data = lr.channels.data.astype(np.float64)
    if aggregate == "max":
        mag = np.abs(data).max(axis=0)
    elif aggregate == "mean":
        mag = np.abs(data.mean(axis=0))
    else:
        raise ValueError(f"unknown aggregate {aggregate!r}")
    valid = lr.channels.valid.copy()
    burned = mag > th
    if m is not None:
        if m.shape != valid.shape:
            raise ValueError("optical mask is not co-registered with the log-ratio image")
        burned &= m.mask
        valid &= m.valid
    return BurnMask(burned, valid, "pseudo_label")


def nbr_mask(nir: RasterGrid, swir: RasterGrid, th: float = 0.1) -> BurnMask:
    """Burned where ``(NIR - SWIR) / (NIR + SWIR) < th``."""
    if nir.shape != swir.shape or nir.bands != 1 or swir.bands != 1:
        raise ValueError("NIR and SWIR must be co-registered single-band rasters")
    a = nir.data[0].astype(np.float64)
    b = swir.data[0].astype(np.float64)
    den = a + b
    valid = nir.valid & swir.valid & np.isfinite(den) & (den != 0)
    nbr = np.where(valid, (a - b) / np.where(valid, den, 1.0), 0.0)
    return BurnMask(nbr < th, valid, "optical_nbr")

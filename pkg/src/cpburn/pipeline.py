"""End-to-end chain from C2 stacks to feature rasters and pseudo-labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .change import (BurnMask, LogRatioImage, intensity_grid, log_ratio, median_composite,
                     nbr_mask, pseudo_label, speckle_filter)
from .polarimetry import MChiProducts, mchi_decompose
from .raster import C2Raster, RasterGrid, TemporalStack
from .synth import Scene
from .vegindex import CpRVIRaster, cprvi_from_c2


@dataclass(eq=False)
class PostFireProducts:
    logratio: LogRatioImage
    mchi: MChiProducts
    cprvi: CpRVIRaster

    def sources(self) -> list[RasterGrid]:
        """Feature rasters with band names ``lr_ch, lr_cv, mchi_*, cprvi``."""
        return [self.logratio.channels, self.mchi.rgb, self.cprvi.to_grid()]


def filtered_c2(grid: RasterGrid, method: str = "boxcar", window: int = 5,
                looks: float = 1.0) -> C2Raster:
    """Speckle-filter the four C2 planes of an epoch.

    Filtering the covariance before any non-linear product keeps the m-chi and
    CpRVI estimates consistent with the intensities used for the log-ratio.
    """
    return C2Raster.from_grid(speckle_filter(grid, method, window, looks))


def post_fire_products(pre: TemporalStack, post: RasterGrid, method: str = "boxcar",
                       window: int = 5, looks: float = 1.0, sign_convention: int = 1,
                       pre_median: Optional[RasterGrid] = None) -> PostFireProducts:
    if pre_median is None:
        pre_median = prefire_median(pre, method, window, looks)
    c2 = filtered_c2(post, method, window, looks)
    ts = post.timestamps[-1] if post.timestamps else None
    lr = log_ratio(intensity_grid(c2), pre_median, ts, len(pre))
    return PostFireProducts(lr, mchi_decompose(c2, sign_convention), cprvi_from_c2(c2, sign_convention))


def prefire_median(pre: TemporalStack, method: str = "boxcar", window: int = 5,
                   looks: float = 1.0) -> RasterGrid:
    intensities = [intensity_grid(filtered_c2(ep, method, window, looks)) for ep in pre.epochs]
    return median_composite(TemporalStack(intensities, pre.timestamps, pre.beam_mode, pre.orbit))


def scene_products(scene: Scene, method: str = "boxcar", window: int = 5,
                   sign_convention: int = 1) -> list[PostFireProducts]:
    """Products for every post-fire epoch of a synthetic scene."""
    looks = scene.spec.looks or 1.0
    med = prefire_median(scene.pre, method, window, looks)
    return [post_fire_products(scene.pre, ep, method, window, looks, sign_convention, med)
            for ep in scene.post.epochs]


def scene_pseudo_label(scene: Scene, products: PostFireProducts, th: float = 0.05,
                       nbr_th: float = 0.1, use_optical: bool = True,
                       aggregate: str = "max") -> BurnMask:
    m = nbr_mask(scene.nir, scene.swir, nbr_th) if use_optical else None
    return pseudo_label(products.logratio, th, m, aggregate)

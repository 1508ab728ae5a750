"""Burned-area mapping from compact-polarimetry SAR covariance images."""

from .change import (BurnMask, LogRatioImage, log_ratio, median_composite, nbr_mask,
                     pseudo_label, speckle_filter)
from .classifier import (FeatureStack, PixelModel, TrainConfig, assemble_features,
                         gradient_check, predict, soft_dice_loss, train)
from .metrics import ConfusionCounts, EventReport, aggregate, confusion, f1_iou
from .polarimetry import MChiProducts, StokesRaster, barakat_m_chi, mchi_rgb, stokes_from_c2
from .raster import (C2Raster, FormatError, RasterGrid, SizeMismatchError, TemporalStack,
                     read_raster, validate_c2, write_raster)
from .synth import SceneSpec, generate_scene
from .vegindex import CpRVIRaster, cprvi, geodesic_distance

__version__ = "0.1.0"

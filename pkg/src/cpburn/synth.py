"""Synthetic compact-pol wildfire scenes with known burn extent."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import binary_dilation

from .change import BurnMask
from .raster import BEAM_MODES, C2_BANDS, ORBITS, RasterGrid, TemporalStack, write_raster

# pre-fire forest: bright, strongly depolarized volume return
UNBURNED_C2 = {"c11": 0.10, "c22": 0.09, "c12_re": 0.005, "c12_im": 0.003}
# burned ground: darker and more polarized surface-like return
BURNED_C2 = {"c11": 0.045, "c22": 0.040, "c12_re": 0.018, "c12_im": -0.012}

DEFAULT_POLYGON = [
    (120.0, 90.0), (300.0, 70.0), (410.0, 160.0), (400.0, 300.0),
    (330.0, 400.0), (200.0, 420.0), (110.0, 330.0), (150.0, 220.0),
]


@dataclass
class SceneSpec:
    """Parameters of a synthetic scene. Polygon vertices are ``(x, y)`` pixel coordinates."""

    width: int = 512
    height: int = 512
    burn_polygon: list = field(default_factory=lambda: list(DEFAULT_POLYGON))
    unburned_c2: dict = field(default_factory=lambda: dict(UNBURNED_C2))
    burned_c2: dict = field(default_factory=lambda: dict(BURNED_C2))
    looks: Optional[float] = 4.0
    pre_epochs: int = 3
    post_epochs: int = 1
    seed: int = 42
    # second burn region whose burned covariance is multiplied by bright_gain
    bright_polygon: Optional[list] = None
    bright_gain: float = 1.0
    beam_mode: str = "SC30MCPB"
    orbit: str = "ascending"
    start_date: str = "2023-05-02"
    revisit_days: int = 12
    optical_buffer: int = 6
    optical_noise: float = 0.02

    def __post_init__(self) -> None:
        self.burn_polygon = [tuple(map(float, v)) for v in self.burn_polygon]
        if self.bright_polygon is not None:
            self.bright_polygon = [tuple(map(float, v)) for v in self.bright_polygon]
        if self.width < 1 or self.height < 1:
            raise ValueError("scene must be at least 1x1")
        if self.looks is not None and self.looks < 1:
            raise ValueError("looks must be >= 1 (or None for a noiseless scene)")
        if self.pre_epochs < 1 or self.post_epochs < 1:
            raise ValueError("need at least one pre-fire and one post-fire epoch")
        if self.beam_mode not in BEAM_MODES or self.orbit not in ORBITS:
            raise ValueError(f"bad acquisition geometry {self.beam_mode}/{self.orbit}")
        for name in ("unburned_c2", "burned_c2"):
            _check_psd(name, getattr(self, name))
        for poly in (self.burn_polygon, self.bright_polygon):
            if poly is not None and not is_simple_polygon(poly):
                raise ValueError(f"polygon {poly} is not simple")

    @classmethod
    def ablation(cls, **overrides) -> "SceneSpec":
        """Two burn scars; the second is brighter after the fire than before."""
        kw = dict(
            burn_polygon=[(40.0, 60.0), (230.0, 50.0), (240.0, 300.0), (60.0, 420.0)],
            bright_polygon=[(290.0, 80.0), (470.0, 110.0), (460.0, 440.0), (300.0, 400.0)],
            bright_gain=6.0,
        )
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["burn_polygon"] = [list(v) for v in self.burn_polygon]
        if self.bright_polygon is not None:
            d["bright_polygon"] = [list(v) for v in self.bright_polygon]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _check_psd(name: str, p: dict) -> None:
    try:
        c11, c22 = float(p["c11"]), float(p["c22"])
        c12 = complex(float(p.get("c12_re", 0.0)), float(p.get("c12_im", 0.0)))
    except (KeyError, TypeError, ValueError):
        raise ValueError(f"{name} needs numeric c11, c22, c12_re, c12_im") from None
    if c11 < 0 or c22 < 0 or abs(c12) ** 2 > c11 * c22:
        raise ValueError(f"{name} = {p} is not Hermitian positive semidefinite")


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def is_simple_polygon(vertices) -> bool:
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def rasterize_polygon(vertices, height: int, width: int) -> np.ndarray:
    """Even-odd fill of pixel centres ``(col + 0.5, row + 0.5)``."""
    y, x = np.mgrid[0:height, 0:width] + 0.5
    inside = np.zeros((height, width), dtype=bool)
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > y) != (y2 > y)
        x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < x_at)
    return inside


@dataclass(eq=False)
class Scene:
    spec: SceneSpec
    pre: TemporalStack
    post: TemporalStack
    truth: BurnMask
    nir: RasterGrid
    swir: RasterGrid


def _rng(seed: int, stream: int) -> np.random.Generator:
    # counter-based generator keyed by (seed, stream): draws do not depend on call order
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2**64) + (stream << 64)))


def _c2_epoch(params: np.ndarray, looks: Optional[float], rng) -> np.ndarray:
    """Apply multiplicative gamma speckle to a (4, H, W) parameter cube."""
    if looks is None:
        return params.copy()
    shape = params.shape[1:]
    a = rng.gamma(looks, 1.0 / looks, size=shape)
    b = rng.gamma(looks, 1.0 / looks, size=shape)
    g = np.sqrt(a * b)
    return np.stack([params[0] * a, params[1] * b, params[2] * g, params[3] * g])


def _param_cube(p: dict, shape) -> np.ndarray:
    return np.stack([np.full(shape, float(p.get(k, 0.0))) for k in C2_BANDS])


def generate_scene(spec: SceneSpec, noiseless: bool = False) -> Scene:
    """Draw pre- and post-fire C2 stacks, the burn truth and optical NIR/SWIR.

    ``noiseless=True`` (or ``spec.looks is None``) disables speckle and optical noise.
    """
    shape = (spec.height, spec.width)
    looks = None if noiseless else spec.looks
    burn = rasterize_polygon(spec.burn_polygon, *shape)
    bright = (rasterize_polygon(spec.bright_polygon, *shape)
              if spec.bright_polygon is not None else np.zeros(shape, bool))
    bright &= ~burn
    truth = burn | bright

    unburned = _param_cube(spec.unburned_c2, shape)
    post_params = unburned.copy()
    burned = _param_cube(spec.burned_c2, shape)
    post_params[:, burn] = burned[:, burn]
    post_params[:, bright] = spec.bright_gain * burned[:, bright]

    t0 = date.fromisoformat(spec.start_date)
    dates = [str(t0 + timedelta(days=spec.revisit_days * i))
             for i in range(spec.pre_epochs + spec.post_epochs)]
    meta = {"beam_mode": spec.beam_mode, "orbit": spec.orbit}

    def epoch(params, i):
        cube = _c2_epoch(params, looks, _rng(spec.seed, i))
        return RasterGrid(cube, None, list(C2_BANDS), timestamps=[dates[i]], **meta)

    pre = [epoch(unburned, i) for i in range(spec.pre_epochs)]
    post = [epoch(post_params, spec.pre_epochs + i) for i in range(spec.post_epochs)]

    # optical fire perimeter: a coarse polygon around the scar, as burn polygons
    # digitized from optical imagery usually are
    if spec.optical_buffer > 0:
        yy, xx = np.mgrid[-spec.optical_buffer:spec.optical_buffer + 1,
                          -spec.optical_buffer:spec.optical_buffer + 1]
        disk = xx**2 + yy**2 <= spec.optical_buffer**2
        perimeter = binary_dilation(truth, structure=disk)
    else:
        perimeter = truth.copy()
    orng = _rng(spec.seed, 1 << 20)
    sigma = 0.0 if (noiseless or spec.looks is None) else spec.optical_noise
    nir = np.where(perimeter, 0.15, 0.35) + sigma * orng.standard_normal(shape)
    swir = np.where(perimeter, 0.25, 0.12) + sigma * orng.standard_normal(shape)
    nir, swir = np.clip(nir, 1e-3, None), np.clip(swir, 1e-3, None)
    post_date = [dates[spec.pre_epochs]]

    return Scene(
        spec=spec,
        pre=TemporalStack(pre, dates[: spec.pre_epochs], spec.beam_mode, spec.orbit),
        post=TemporalStack(post, dates[spec.pre_epochs :], spec.beam_mode, spec.orbit),
        truth=BurnMask(truth, np.ones(shape, bool), "synthetic_truth"),
        nir=RasterGrid(nir, None, ["nir"], timestamps=post_date),
        swir=RasterGrid(swir, None, ["swir"], timestamps=post_date),
    )


def write_scene(scene: Scene, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for prefix, stack in (("pre", scene.pre), ("post", scene.post)):
        for i, grid in enumerate(stack.epochs):
            path = out / f"{prefix}_{i:02d}.cpr"
            write_raster(grid, path)
            written.append(path)
    for name, grid in (("truth", scene.truth.to_grid()), ("nir", scene.nir), ("swir", scene.swir)):
        path = out / f"{name}.cpr"
        write_raster(grid, path)
        written.append(path)
    scene.spec.save(out / "scene.json")
    return written

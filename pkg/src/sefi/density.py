"""Per-gene density maps: rasterize detections onto a grid and smooth them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .io import FeatureTensor, PointCloud
from .validation import check_positive

DEFAULT_RESOLUTION = 4.0  # image pixels per grid bin
DEFAULT_SIGMA = 2.0       # smoothing bandwidth in bins
DEFAULT_EPSILON = 1e-3    # foreground threshold on total density


@dataclass
class GridSpec:
    """Analysis grid: bin size in image pixels plus smoothing bandwidth in bins."""

    resolution: float
    sigma: float
    height_bins: int
    width_bins: int

    def __post_init__(self):
        check_positive(self.resolution, "resolution")
        check_positive(self.sigma, "sigma")
        if self.height_bins < 1 or self.width_bins < 1:
            raise ValueError("grid must have at least one bin per axis")

    @classmethod
    def from_extent(cls, height_px, width_px, resolution=DEFAULT_RESOLUTION,
                    sigma=DEFAULT_SIGMA) -> "GridSpec":
        resolution = check_positive(resolution, "resolution")
        return cls(
            resolution=resolution,
            sigma=sigma,
            height_bins=max(1, math.ceil(height_px / resolution)),
            width_bins=max(1, math.ceil(width_px / resolution)),
        )

    @classmethod
    def from_points(cls, pc: PointCloud, resolution=DEFAULT_RESOLUTION,
                    sigma=DEFAULT_SIGMA) -> "GridSpec":
        resolution = check_positive(resolution, "resolution")
        if pc.n_points == 0:
            raise ValueError("cannot derive a grid from an empty point cloud")
        return cls(
            resolution=resolution,
            sigma=sigma,
            height_bins=int(np.floor(pc.y.max() / resolution)) + 1,
            width_bins=int(np.floor(pc.x.max() / resolution)) + 1,
        )


@dataclass
class GeneExpressionMap:
    """Per-gene density raster; channel names are the gene panel."""

    tensor: FeatureTensor
    grid: GridSpec

    @property
    def gene_panel(self) -> list[str]:
        return self.tensor.channel_names


def rasterize_points(pc: PointCloud, grid: GridSpec) -> GeneExpressionMap:
    """Histogram detections per gene: bin index = floor(coord / resolution).

    Every point must land inside the grid extent; offenders are reported by
    point index.
    """
    bx = np.floor(pc.x / grid.resolution).astype(np.int64)
    by = np.floor(pc.y / grid.resolution).astype(np.int64)
    bad = np.nonzero(
        (bx < 0) | (bx >= grid.width_bins) | (by < 0) | (by >= grid.height_bins)
    )[0]
    if len(bad) > 0:
        shown = ", ".join(str(i) for i in bad[:20])
        more = f" (+{len(bad) - 20} more)" if len(bad) > 20 else ""
        raise ValueError(f"points outside grid extent at indices: {shown}{more}")

    g = pc.n_genes
    data = np.zeros((grid.height_bins, grid.width_bins, g), dtype=np.float32)
    np.add.at(data, (by, bx, pc.gene_index), 1.0)
    tensor = FeatureTensor.from_array(data, channel_names=list(pc.gene_panel))
    return GeneExpressionMap(tensor=tensor, grid=grid)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Gaussian taps at integer offsets, truncated at ceil(4*sigma), sum 1."""
    sigma = check_positive(sigma, "sigma")
    radius = math.ceil(4.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_smooth(m: GeneExpressionMap) -> GeneExpressionMap:
    """Separable Gaussian smoothing per channel, zero-padded at the borders."""
    kernel = gaussian_kernel1d(m.grid.sigma)
    data = m.tensor.data.astype(np.float64)
    data = convolve1d(data, kernel, axis=0, mode="constant", cval=0.0)
    data = convolve1d(data, kernel, axis=1, mode="constant", cval=0.0)
    tensor = FeatureTensor.from_array(
        data.astype(np.float32), channel_names=list(m.tensor.channel_names)
    )
    return GeneExpressionMap(tensor=tensor, grid=m.grid)


def foreground_mask(m: GeneExpressionMap, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Boolean mask of bins whose total density exceeds epsilon."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return m.tensor.data.sum(axis=2, dtype=np.float64) > epsilon


def compose_normalize(m: GeneExpressionMap) -> GeneExpressionMap:
    """Optional mode: divide each bin's channel vector by its total density.

    Turns densities into local composition fractions; bins with zero total
    stay zero.
    """
    data = m.tensor.data.astype(np.float64)
    total = data.sum(axis=2, keepdims=True)
    out = np.divide(data, total, out=np.zeros_like(data), where=total > 0)
    tensor = FeatureTensor.from_array(
        out.astype(np.float32), channel_names=list(m.tensor.channel_names)
    )
    return GeneExpressionMap(tensor=tensor, grid=m.grid)

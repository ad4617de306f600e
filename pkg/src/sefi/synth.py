"""Synthetic tissues with known niches: Voronoi regions, gene points, textures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .io import GrayImage, LabelMap, PointCloud

# texture bandwidth range: niche i smooths shared white noise with
# sigma_base * sigma_spread ** (morph_signal * t_i), t_i in [-1, 1];
# the wide spread keeps adjacent niche bandwidths separable by window stats
_TEXTURE_SIGMA_BASE = 2.5
_TEXTURE_SIGMA_SPREAD = 12.0
_TEXTURE_CONTRAST = 0.22


@dataclass
class SynthConfig:
    seed: int = 0
    height: int = 512
    width: int = 512
    n_niches: int = 6
    n_genes: int = 33
    density: float = 0.02           # points per pixel^2
    alpha: float = 0.3              # Dirichlet concentration of gene profiles
    morph_signal: float = 0.8       # 0 = niche-independent texture
    tied_pairs: tuple = field(default_factory=tuple)  # 1-based (a, b) niche pairs

    def validate(self):
        if self.n_niches < 2:
            raise ValueError(f"n_niches must be >= 2, got {self.n_niches}")
        if self.n_genes < 2:
            raise ValueError(f"n_genes must be >= 2, got {self.n_genes}")
        if self.density <= 0:
            raise ValueError(f"density must be > 0, got {self.density}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not (0.0 <= self.morph_signal <= 1.0):
            raise ValueError(f"morph_signal must be in [0, 1], got {self.morph_signal}")
        if self.height < 8 or self.width < 8:
            raise ValueError("image must be at least 8x8")
        for pair in self.tied_pairs:
            a, b = pair
            if not (1 <= a <= self.n_niches and 1 <= b <= self.n_niches) or a == b:
                raise ValueError(f"bad tied niche pair {pair!r}")

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "height": self.height,
            "width": self.width,
            "n_niches": self.n_niches,
            "n_genes": self.n_genes,
            "density": self.density,
            "alpha": self.alpha,
            "morph_signal": self.morph_signal,
            "tied_pairs": ";".join(f"{a}:{b}" for a, b in self.tied_pairs),
        }


def _gene_token(i: int) -> str:
    return f"g{i + 1:03d}"


def niche_texture(white, niche, n_niches, morph_signal):
    """Standardized band-limited texture field, bandwidth keyed to niche index.

    All niches share the underlying white-noise field; at morph_signal 0 every
    niche gets the same bandwidth, so the output is niche-independent.
    """
    pixels = np.empty_like(white)
    for i in range(n_niches):
        t = 0.0 if n_niches == 1 else (i / (n_niches - 1) - 0.5) * 2.0
        sigma = _TEXTURE_SIGMA_BASE * _TEXTURE_SIGMA_SPREAD ** (morph_signal * t)
        band = gaussian_filter(white, sigma, mode="reflect")
        band = (band - band.mean()) / band.std()
        sel = niche == i
        pixels[sel] = band[sel]
    return pixels


def generate(cfg: SynthConfig):
    """Build one synthetic tissue; same seed gives bit-identical outputs.

    Returns (truth: LabelMap, points: PointCloud, image: GrayImage). Niche
    regions come from a seeded Voronoi tessellation; each niche samples gene
    tokens from its own Dirichlet profile; tied niche pairs share a profile
    so only the image texture distinguishes them. The texture is band-limited
    noise whose bandwidth varies with niche index, scaled by morph_signal.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    h, w, n = cfg.height, cfg.width, cfg.n_niches

    # Voronoi niche map over pixel centers
    sites_x = rng.uniform(0.0, w, size=n)
    sites_y = rng.uniform(0.0, h, size=n)
    cols = np.arange(w) + 0.5
    rows = np.arange(h) + 0.5
    d2 = (rows[:, None, None] - sites_y) ** 2 + (cols[None, :, None] - sites_x) ** 2
    niche = np.argmin(d2, axis=2)  # (H, W) 0-based

    # per-niche gene profiles; tied pairs share one
    profiles = rng.dirichlet(np.full(cfg.n_genes, cfg.alpha), size=n)
    for a, b in cfg.tied_pairs:
        profiles[b - 1] = profiles[a - 1]

    # uniform points over the tissue; each inherits its location's niche
    n_points = int(round(cfg.density * h * w))
    px = rng.uniform(0.0, w, size=n_points)
    py = rng.uniform(0.0, h, size=n_points)
    point_niche = niche[np.floor(py).astype(np.int64), np.floor(px).astype(np.int64)]
    cdfs = np.cumsum(profiles, axis=1)
    cdfs[:, -1] = 1.0
    u = rng.random(n_points)
    gene_idx = (u[:, None] > cdfs[point_niche]).sum(axis=1).astype(np.int64)

    points = PointCloud(
        x=px,
        y=py,
        gene_index=gene_idx,
        gene_panel=[_gene_token(i) for i in range(cfg.n_genes)],
    )

    # textures: one shared white-noise field, smoothed per niche bandwidth
    white = rng.standard_normal((h, w))
    pixels = niche_texture(white, niche, n, cfg.morph_signal)
    image = GrayImage(
        height=h,
        width=w,
        pixels=np.clip(0.5 + _TEXTURE_CONTRAST * pixels, 0.0, 1.0).astype(np.float32),
    )

    truth = LabelMap(
        labels=(niche + 1).astype(np.int32),
        n_clusters=n,
        provenance={f"synth_{k}": v for k, v in cfg.as_dict().items()},
    )
    return truth, points, image

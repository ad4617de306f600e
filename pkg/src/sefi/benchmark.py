"""Gene-dropout benchmark: how much morphology compensates for missing genes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import DEFAULT_MORPH_WEIGHT, cluster_pixels
from .density import (
    DEFAULT_EPSILON,
    GridSpec,
    foreground_mask,
    gaussian_smooth,
    rasterize_points,
)
from .io import PointCloud
from .metrics import adjusted_rand_index
from .morphology import ReducedFeatures

DROPOUT_CSV_HEADER = "fraction,rep,seed,ari_genes,ari_joint"


@dataclass
class DropoutRow:
    fraction: float
    rep: int
    seed: int
    ari_genes: float
    ari_joint: float


@dataclass
class DropoutResult:
    rows: list[DropoutRow]

    def to_csv(self) -> str:
        lines = [DROPOUT_CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.fraction:g},{r.rep},{r.seed},{r.ari_genes:.6f},{r.ari_joint:.6f}"
            )
        return "\n".join(lines) + "\n"

    def by_fraction(self):
        """Per fraction: (mean, sd) of each arm, in input fraction order."""
        seen = []
        for r in self.rows:
            if r.fraction not in seen:
                seen.append(r.fraction)
        stats = {}
        for f in seen:
            genes = np.array([r.ari_genes for r in self.rows if r.fraction == f])
            joint = np.array([r.ari_joint for r in self.rows if r.fraction == f])
            stats[f] = {
                "genes_mean": float(genes.mean()),
                "genes_sd": float(genes.std()),
                "joint_mean": float(joint.mean()),
                "joint_sd": float(joint.std()),
            }
        return stats


def _replicate_seed(seed: int, fraction_index: int, rep: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(fraction_index, rep))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _gene_map(pc: PointCloud, grid: GridSpec):
    return gaussian_smooth(rasterize_points(pc, grid))


def dropout_benchmark(pc: PointCloud, morph: ReducedFeatures, grid: GridSpec,
                      fractions, reps: int, seed: int,
                      final_k: int | None = None,
                      merge_threshold: float | None = None,
                      w: float = DEFAULT_MORPH_WEIGHT,
                      epsilon: float = DEFAULT_EPSILON) -> DropoutResult:
    """Progressively drop genes; score both arms against the all-genes run.

    The reference partition is the full pipeline on every gene WITHOUT
    morphology. For each (fraction, rep), ceil(fraction * G) genes are kept
    (uniform, without replacement, replicate-seeded) and two pipelines run on
    the same kept set: genes only and genes plus morphology, both with
    k = kept gene count and the shared pipeline seed. Each is scored by ARI
    against the reference over commonly-foreground pixels.
    """
    fractions = [float(f) for f in fractions]
    for f in fractions:
        if not (0.0 < f <= 1.0):
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    g = pc.n_genes
    if morph is not None and (morph.tensor.height, morph.tensor.width) != (
        grid.height_bins, grid.width_bins,
    ):
        raise ValueError("morphology tensor does not match the analysis grid")

    genes_full = _gene_map(pc, grid)
    mask_full = foreground_mask(genes_full, epsilon)
    reference, _, _ = cluster_pixels(
        genes_full, None, mask_full, k=g, final_k=final_k,
        merge_threshold=merge_threshold, seed=seed,
    )

    rows = []
    for fi, fraction in enumerate(fractions):
        n_keep = math.ceil(fraction * g)
        if n_keep < 1:
            raise ValueError(f"fraction {fraction} keeps zero genes")
        for rep in range(reps):
            rep_seed = _replicate_seed(seed, fi, rep)
            rng = np.random.default_rng(rep_seed)
            kept = np.sort(rng.choice(g, size=n_keep, replace=False))
            sub = pc.subset_genes(kept)

            genes_sub = _gene_map(sub, grid)
            mask_sub = foreground_mask(genes_sub, epsilon)

            genes_only, _, _ = cluster_pixels(
                genes_sub, None, mask_sub, k=n_keep, final_k=final_k,
                merge_threshold=merge_threshold, seed=seed,
            )
            joint, _, _ = cluster_pixels(
                genes_sub, morph, mask_sub, w=w, k=n_keep, final_k=final_k,
                merge_threshold=merge_threshold, seed=seed,
            )
            rows.append(DropoutRow(
                fraction=fraction,
                rep=rep,
                seed=rep_seed,
                ari_genes=adjusted_rand_index(genes_only, reference).value,
                ari_joint=adjusted_rand_index(joint, reference).value,
            ))
    return DropoutResult(rows=rows)


def dropout_svg(result: DropoutResult, width: int = 560, height: int = 400) -> str:
    """Line plot (mean +- sd per fraction, both arms) as a standalone SVG."""
    stats = result.by_fraction()
    fracs = sorted(stats, reverse=True)  # full panel on the left
    left, right, top, bottom = 60, 20, 20, 50
    plot_w = width - left - right
    plot_h = height - top - bottom

    def sx(f):
        if len(fracs) == 1:
            return left + plot_w / 2
        return left + (fracs[0] - f) / (fracs[0] - fracs[-1]) * plot_w

    def sy(v):
        return top + (1.0 - max(0.0, min(1.0, v))) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="black"/>',
        f'<text x="{left - 45}" y="{top + plot_h / 2:.1f}" font-size="12" '
        f'transform="rotate(-90 {left - 45} {top + plot_h / 2:.1f})">ARI</text>',
        f'<text x="{left + plot_w / 2 - 40:.1f}" y="{height - 10}" font-size="12">'
        "fraction of genes kept</text>",
    ]
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{left - 35}" y="{sy(v) + 4:.1f}" font-size="10">{v:g}</text>'
        )
        parts.append(
            f'<line x1="{left - 4}" y1="{sy(v):.1f}" x2="{left}" y2="{sy(v):.1f}" '
            'stroke="black"/>'
        )
    for f in fracs:
        parts.append(
            f'<text x="{sx(f) - 8:.1f}" y="{top + plot_h + 16}" font-size="10">{f:g}</text>'
        )
    for arm, color, label, offset in (
        ("genes", "#888888", "genes only", 0),
        ("joint", "#d62728", "genes + morphology", 16),
    ):
        pts = " ".join(f"{sx(f):.1f},{sy(stats[f][arm + '_mean']):.1f}" for f in fracs)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for f in fracs:
            m, sd = stats[f][arm + "_mean"], stats[f][arm + "_sd"]
            parts.append(
                f'<line x1="{sx(f):.1f}" y1="{sy(m - sd):.1f}" x2="{sx(f):.1f}" '
                f'y2="{sy(m + sd):.1f}" stroke="{color}"/>'
            )
            parts.append(
                f'<circle cx="{sx(f):.1f}" cy="{sy(m):.1f}" r="3" fill="{color}"/>'
            )
        parts.append(
            f'<rect x="{left + 10}" y="{top + 6 + offset}" width="10" height="3" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{left + 26}" y="{top + 12 + offset}" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

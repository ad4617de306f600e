"""Partition agreement (adjusted Rand index) and per-cluster expression tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import GeneExpressionMap
from .io import LabelMap
from .validation import check_same_grid


@dataclass
class AriScore:
    value: float
    n: int  # pixels foreground in both maps


def adjusted_rand_index(a: LabelMap, b: LabelMap) -> AriScore:
    """Chance-corrected partition agreement over commonly-foreground pixels.

    ARI = (sum_ij C(n_ij,2) - E) / (0.5 * (sum_i C(a_i,2) + sum_j C(b_j,2)) - E)
    with E = sum_i C(a_i,2) * sum_j C(b_j,2) / C(n,2), computed on the
    contingency table of the two label maps. If both partitions are
    degenerate (denominator 0), returns 1 when they are identical up to
    relabeling and 0 otherwise.
    """
    check_same_grid(a.labels.shape, b.labels.shape, what="label maps")
    common = (a.labels > 0) & (b.labels > 0)
    n = int(common.sum())
    if n < 2:
        raise ValueError(f"need >= 2 commonly-foreground pixels, got {n}")

    la = a.labels[common]
    lb = b.labels[common]
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    rows = int(ia.max()) + 1
    cols = int(ib.max()) + 1
    table = np.bincount(ia * cols + ib, minlength=rows * cols).reshape(rows, cols)

    pairs = lambda v: int(v) * (int(v) - 1) // 2  # noqa: E731
    sum_ij = sum(pairs(v) for v in table.ravel() if v > 1)
    sum_a = sum(pairs(v) for v in table.sum(axis=1))
    sum_b = sum(pairs(v) for v in table.sum(axis=0))
    total_pairs = pairs(n)

    # scale by 2 * C(n,2) so both sides stay exact integers; one division at the end
    numerator = 2 * total_pairs * sum_ij - 2 * sum_a * sum_b
    denominator = total_pairs * (sum_a + sum_b) - 2 * sum_a * sum_b
    if denominator == 0:
        identical = np.all((table > 0).sum(axis=0) <= 1) and np.all(
            (table > 0).sum(axis=1) <= 1
        )
        return AriScore(value=1.0 if identical else 0.0, n=n)
    return AriScore(value=numerator / denominator, n=n)


def cluster_mean_expression(labels: LabelMap, genes: GeneExpressionMap):
    """Mean gene density per cluster.

    Returns (cluster_ids, gene_panel, matrix) where matrix[i, g] is the mean
    of gene g over pixels labeled cluster_ids[i].
    """
    check_same_grid(
        labels.labels.shape,
        (genes.tensor.height, genes.tensor.width),
        what="label map and gene map",
    )
    cluster_ids = [c for c in np.unique(labels.labels) if c > 0]
    matrix = np.zeros((len(cluster_ids), genes.tensor.channels), dtype=np.float64)
    for i, c in enumerate(cluster_ids):
        matrix[i] = genes.tensor.data[labels.labels == c].mean(axis=0, dtype=np.float64)
    return [int(c) for c in cluster_ids], list(genes.gene_panel), matrix


def expression_table_csv(labels: LabelMap, genes: GeneExpressionMap) -> str:
    """CSV rendering of cluster_mean_expression: header `cluster,<genes...>`."""
    ids, panel, matrix = cluster_mean_expression(labels, genes)
    lines = ["cluster," + ",".join(panel)]
    for i, c in enumerate(ids):
        lines.append(str(c) + "," + ",".join(f"{v:.9g}" for v in matrix[i]))
    return "\n".join(lines) + "\n"

"""Fuse gene and morphology blocks per pixel, k-means them, merge clusters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .density import GeneExpressionMap
from .io import LabelMap
from .morphology import ReducedFeatures
from .validation import as_float_matrix, check_mask, check_same_grid

DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-4
DEFAULT_MORPH_WEIGHT = 1.0

# tolerated relative round-off when asserting the Lloyd descent property
_DESCENT_SLACK = 1e-9


@dataclass
class FusedMatrix:
    """Per-foreground-pixel feature rows: z-scored genes then weighted morphology."""

    values: np.ndarray       # (N, G + D) float64
    pixel_index: np.ndarray  # (N, 2) int64 rows of (y, x)
    n_genes: int
    n_morph: int
    morph_weight: float
    height: int
    width: int


@dataclass
class KMeansResult:
    centroids: np.ndarray    # (k, F)
    assignment: np.ndarray   # (N,) labels in 1..k
    inertia: float
    iterations: int
    seed: int
    inertia_history: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class MergeTree:
    """Ordered merge events (cluster_a, cluster_b, distance), 1-based ids, a < b."""

    events: list[tuple[int, int, float]]
    final_k: int


def assemble(genes: GeneExpressionMap, morph: ReducedFeatures | None, mask,
             w: float = DEFAULT_MORPH_WEIGHT) -> FusedMatrix:
    """Stack gene and reduced-morphology channels over masked pixels.

    Each column is z-scored over the masked rows (constant columns become
    all zero); morphology columns are then multiplied by w. Pass morph=None
    for a genes-only matrix.
    """
    h, w_bins = genes.tensor.height, genes.tensor.width
    mask = check_mask(mask, h, w_bins)
    if w <= 0 or not np.isfinite(w):
        raise ValueError(f"morphology weight must be > 0, got {w}")
    if not mask.any():
        raise ValueError("foreground mask is empty")
    if morph is not None:
        check_same_grid(
            (morph.tensor.height, morph.tensor.width), (h, w_bins),
            what="gene and morphology tensors",
        )

    ys, xs = np.nonzero(mask)
    pixel_index = np.stack([ys, xs], axis=1).astype(np.int64)
    blocks = [genes.tensor.data[mask].astype(np.float64)]
    n_morph = 0
    if morph is not None:
        blocks.append(morph.tensor.data[mask].astype(np.float64))
        n_morph = morph.tensor.channels
    values = np.concatenate(blocks, axis=1)

    mu = values.mean(axis=0)
    sd = values.std(axis=0)
    keep = sd > 0
    values = np.where(keep, (values - mu) / np.where(keep, sd, 1.0), 0.0)
    if n_morph:
        values[:, genes.tensor.channels:] *= w

    return FusedMatrix(
        values=values,
        pixel_index=pixel_index,
        n_genes=genes.tensor.channels,
        n_morph=n_morph,
        morph_weight=float(w),
        height=h,
        width=w_bins,
    )


class SeededKMeans(ClusterMixin, BaseEstimator):
    """Lloyd k-means with seeded k-means++ initialization.

    Deterministic for a fixed seed in single-threaded mode: nearest-centroid
    ties break toward the lowest centroid index, clusters that empty out are
    re-seeded to the point currently farthest from its centroid, and the
    per-assignment inertia history is checked to be non-increasing.

    Parameters
    ----------
    n_clusters : int
    seed : int, RNG seed for the k-means++ draws.
    max_iter : int, Lloyd iteration cap.
    tol : float, stop once the largest centroid displacement drops below this.

    Attributes
    ----------
    cluster_centers_ : (k, F) final centroids.
    labels_ : (N,) 0-based assignment of the fit rows.
    inertia_ : float, SSE of the final assignment.
    n_iter_ : int, Lloyd iterations executed.
    inertia_history_ : SSE after every assignment step, ending at inertia_.
    """

    def __init__(self, n_clusters=8, seed=0, max_iter=DEFAULT_MAX_ITER,
                 tol=DEFAULT_TOL):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        n, _ = X.shape
        k = int(self.n_clusters)
        if k < 1:
            raise ValueError(f"n_clusters must be >= 1, got {k}")
        if k > n:
            raise ValueError(f"n_clusters={k} exceeds the {n} available points")

        rng = np.random.default_rng(self.seed)
        centers = self._plusplus_init(X, k, rng)

        sq_norms = (X * X).sum(axis=1)
        history = []
        labels = None
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            dist2 = self._dist2(X, centers, sq_norms)
            labels = np.argmin(dist2, axis=1)
            point_d2 = dist2[np.arange(n), labels]
            history.append(float(point_d2.sum()))

            new_centers = np.zeros_like(centers)
            np.add.at(new_centers, labels, X)
            sizes = np.bincount(labels, minlength=k)
            occupied = sizes > 0
            new_centers[occupied] /= sizes[occupied, None]

            if not occupied.all():
                spare_d2 = point_d2.copy()
                for empty in np.nonzero(~occupied)[0]:
                    far = int(np.argmax(spare_d2))
                    new_centers[empty] = X[far]
                    spare_d2[far] = -1.0

            movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
            centers = new_centers
            if movement < self.tol:
                break

        dist2 = self._dist2(X, centers, sq_norms)
        labels = np.argmin(dist2, axis=1)
        # exact SSE of the final assignment, not the expanded-form estimate
        diffs = X - centers[labels]
        inertia = float((diffs * diffs).sum())
        history.append(inertia)

        hist = np.asarray(history)
        slack = _DESCENT_SLACK * max(1.0, hist[0])
        if np.any(np.diff(hist) > slack):
            raise AssertionError(f"Lloyd inertia increased: {hist}")

        self.cluster_centers_ = centers
        self.labels_ = labels.astype(np.int64)
        self.inertia_ = inertia
        self.n_iter_ = n_iter
        self.inertia_history_ = hist
        return self

    def predict(self, X):
        X = as_float_matrix(X)
        dist2 = self._dist2(X, self.cluster_centers_, (X * X).sum(axis=1))
        return np.argmin(dist2, axis=1).astype(np.int64)

    @staticmethod
    def _dist2(X, centers, sq_norms):
        d2 = sq_norms[:, None] - 2.0 * (X @ centers.T) + (centers * centers).sum(axis=1)
        return np.maximum(d2, 0.0)

    @staticmethod
    def _plusplus_init(X, k, rng):
        n = X.shape[0]
        centers = np.empty((k, X.shape[1]))
        centers[0] = X[rng.integers(n)]
        d2 = ((X - centers[0]) ** 2).sum(axis=1)
        for j in range(1, k):
            total = d2.sum()
            if total > 0:
                idx = rng.choice(n, p=d2 / total)
            else:
                idx = rng.integers(n)  # all remaining points coincide
            centers[j] = X[idx]
            d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
        return centers


def run_kmeans(m: FusedMatrix, k: int | None = None, seed: int = 0,
               max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> KMeansResult:
    """k-means over the fused rows; k defaults to the gene-panel size."""
    if k is None:
        k = m.n_genes
    est = SeededKMeans(n_clusters=k, seed=seed, max_iter=max_iter, tol=tol).fit(m.values)
    return KMeansResult(
        centroids=est.cluster_centers_,
        assignment=est.labels_ + 1,
        inertia=est.inertia_,
        iterations=est.n_iter_,
        seed=seed,
        inertia_history=est.inertia_history_,
    )


class WardCentroidMerge(BaseEstimator):
    """Agglomerate weighted centroids by Ward linkage down to a target count.

    The merge cost between clusters a, b is the within-cluster SSE increase
    n_a n_b / (n_a + n_b) * ||c_a - c_b||^2; ties pick the lowest (a, b) pair.
    Stop either at `final_k` clusters or right before the first merge whose
    cost exceeds `merge_threshold` (exactly one must be given).

    Attributes
    ----------
    merges_ : list of (i, j, cost) with 0-based input indices, i < j.
    labels_ : (k,) 0-based output cluster per input centroid, compacted.
    n_clusters_ : number of clusters after merging.
    """

    def __init__(self, final_k=None, merge_threshold=None):
        self.final_k = final_k
        self.merge_threshold = merge_threshold

    def fit(self, X, y=None, sample_weight=None):
        X = as_float_matrix(X)
        k = X.shape[0]
        if (self.final_k is None) == (self.merge_threshold is None):
            raise ValueError("give exactly one of final_k or merge_threshold")
        if self.final_k is not None and not (1 <= self.final_k <= k):
            raise ValueError(f"final_k must be in [1, {k}], got {self.final_k}")

        if sample_weight is None:
            sizes = np.ones(k, dtype=np.float64)
        else:
            sizes = np.asarray(sample_weight, dtype=np.float64)
            if sizes.shape != (k,) or np.any(sizes <= 0):
                raise ValueError("sample_weight must hold one positive size per row")

        centroids = {i: X[i].copy() for i in range(k)}
        weights = {i: sizes[i] for i in range(k)}
        rep = np.arange(k)
        merges: list[tuple[int, int, float]] = []
        stop_at = self.final_k if self.final_k is not None else 1

        while len(centroids) > stop_at:
            active = sorted(centroids)
            best = None
            for ai, a in enumerate(active):
                for b in active[ai + 1:]:
                    na, nb = weights[a], weights[b]
                    delta = centroids[a] - centroids[b]
                    cost = na * nb / (na + nb) * float(delta @ delta)
                    if best is None or cost < best[0]:
                        best = (cost, a, b)
            cost, a, b = best
            if self.merge_threshold is not None and cost > self.merge_threshold:
                break
            centroids[a] = (weights[a] * centroids[a] + weights[b] * centroids[b]) / (
                weights[a] + weights[b]
            )
            weights[a] += weights[b]
            del centroids[b], weights[b]
            rep[rep == b] = a
            merges.append((a, b, cost))

        survivors = sorted(centroids)
        compact = {old: new for new, old in enumerate(survivors)}
        self.merges_ = merges
        self.labels_ = np.asarray([compact[r] for r in rep], dtype=np.int64)
        self.n_clusters_ = len(survivors)
        return self


def hierarchical_merge(r: KMeansResult, final_k: int | None = None,
                       merge_threshold: float | None = None):
    """Merge k-means clusters; returns (MergeTree, relabeled 1-based assignment)."""
    k = r.centroids.shape[0]
    sizes = np.bincount(r.assignment - 1, minlength=k).astype(np.float64)
    sizes = np.maximum(sizes, 1e-12)  # guards merge math if a cluster is empty
    est = WardCentroidMerge(final_k=final_k, merge_threshold=merge_threshold)
    est.fit(r.centroids, sample_weight=sizes)
    tree = MergeTree(
        events=[(a + 1, b + 1, d) for a, b, d in est.merges_],
        final_k=est.n_clusters_,
    )
    return tree, est.labels_[r.assignment - 1] + 1


def labels_to_map(assignment, pixel_index, height, width,
                  provenance=None) -> LabelMap:
    """Scatter a 1-based assignment back onto the grid; background stays 0.

    Distinct assignment values are compacted to the contiguous range
    1..n_clusters in sorted order.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    pixel_index = np.asarray(pixel_index, dtype=np.int64)
    if pixel_index.ndim != 2 or pixel_index.shape[1] != 2:
        raise ValueError("pixel_index must be (N, 2) rows of (y, x)")
    if len(assignment) != len(pixel_index):
        raise ValueError(
            f"assignment length {len(assignment)} != {len(pixel_index)} pixels"
        )
    labels = np.zeros((height, width), dtype=np.int32)
    if len(assignment) == 0:
        return LabelMap(labels=labels, n_clusters=0, provenance=provenance or {})
    if assignment.min() < 1:
        raise ValueError("assignment labels must be >= 1")
    ys, xs = pixel_index[:, 0], pixel_index[:, 1]
    if ys.min() < 0 or ys.max() >= height or xs.min() < 0 or xs.max() >= width:
        raise ValueError("pixel_index outside grid")
    uniq, inverse = np.unique(assignment, return_inverse=True)
    labels[ys, xs] = (inverse + 1).astype(np.int32)
    return LabelMap(labels=labels, n_clusters=len(uniq), provenance=provenance or {})


def cluster_pixels(genes: GeneExpressionMap, morph: ReducedFeatures | None, mask,
                   w: float = DEFAULT_MORPH_WEIGHT, k: int | None = None,
                   final_k: int | None = None, merge_threshold: float | None = None,
                   seed: int = 0, max_iter: int = DEFAULT_MAX_ITER,
                   tol: float = DEFAULT_TOL):
    """Full fusion-clustering stage: assemble, k-means, merge, map.

    Returns (LabelMap, KMeansResult, MergeTree).
    """
    fused = assemble(genes, morph, mask, w=w)
    if k is None:
        k = fused.n_genes
    result = run_kmeans(fused, k=k, seed=seed, max_iter=max_iter, tol=tol)
    tree, relabeled = hierarchical_merge(
        result, final_k=final_k, merge_threshold=merge_threshold
    )
    provenance = {
        "seed": seed,
        "k": k,
        "final_k": tree.final_k,
        "morph_weight": fused.morph_weight,
        "resolution": genes.grid.resolution,
        "sigma": genes.grid.sigma,
        "n_genes": fused.n_genes,
        "n_morph": fused.n_morph,
    }
    label_map = labels_to_map(
        relabeled, fused.pixel_index, fused.height, fused.width, provenance=provenance
    )
    return label_map, result, tree

"""Acceptance suite: one test per release criterion, each printing a PASS line."""

import itertools
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from sefi.cluster import (
    SeededKMeans,
    WardCentroidMerge,
    cluster_pixels,
    hierarchical_merge,
    run_kmeans,
    assemble,
)
from sefi.density import (
    GeneExpressionMap,
    GridSpec,
    foreground_mask,
    gaussian_kernel1d,
    gaussian_smooth,
    rasterize_points,
)
from sefi.io import FeatureTensor, LabelMap, PointCloud
from sefi.metrics import adjusted_rand_index
from sefi.morphology import (
    VarianceThresholdPCA,
    apply_pca,
    builtin_features,
    fit_pca,
    resample_to_grid,
)
from sefi.benchmark import dropout_benchmark
from sefi.synth import SynthConfig, generate


def _passed(name, elapsed, budget):
    print(f"[PASS] {name}: {elapsed:.2f}s (budget {budget:g}s)")


# ---------------------------------------------------------------------------
# criterion 1: ARI oracle equivalence

def ari_pair_oracle(a, b):
    n11 = n00 = n10 = n01 = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        same_a = a[i] == a[j]
        same_b = b[i] == b[j]
        if same_a and same_b:
            n11 += 1
        elif same_a:
            n10 += 1
        elif same_b:
            n01 += 1
        else:
            n00 += 1
    numerator = 2.0 * (n11 * n00 - n10 * n01)
    denominator = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    if denominator == 0:
        return 1.0 if (n10 == 0 and n01 == 0) else 0.0
    return numerator / denominator


def as_maps(a, b):
    la = LabelMap(labels=np.asarray(a, dtype=np.int32).reshape(1, -1), n_clusters=max(a))
    lb = LabelMap(labels=np.asarray(b, dtype=np.int32).reshape(1, -1), n_clusters=max(b))
    return la, lb


def test_ari_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(1234)
    for _ in range(50):
        n = int(rng.integers(2, 13))
        a = rng.integers(1, 5, n)
        b = rng.integers(1, 5, n)
        ma, mb = as_maps(a, b)
        got = adjusted_rand_index(ma, mb).value
        want = ari_pair_oracle(a.tolist(), b.tolist())
        assert abs(got - want) <= 1e-12, (a, b, got, want)

    ma, mb = as_maps([1, 1, 2, 2], [1, 2, 1, 2])
    assert adjusted_rand_index(ma, mb).value == -0.5

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _passed("ARI oracle equivalence (50 pairs + hand case)", elapsed, 1)


# ---------------------------------------------------------------------------
# criterion 2: PCA oracle equivalence

def pca_eigen_oracle(X, target):
    cov = np.cov(X, rowvar=False, ddof=1)
    evals = np.clip(np.linalg.eigvalsh(cov)[::-1], 0.0, None)
    ratios = evals / evals.sum()
    cumulative = np.cumsum(ratios)
    d = int(np.searchsorted(cumulative, target - 1e-12) + 1)
    return ratios, min(d, len(ratios))


def test_pca_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    for trial in range(20):
        n = int(rng.integers(20, 201))
        c = int(rng.integers(3, 65))
        scale = rng.uniform(0.05, 3.0, c)
        X = rng.standard_normal((n, c)) * scale
        model = VarianceThresholdPCA(variance_target=0.95).fit(X)
        ratios, d = pca_eigen_oracle(X, 0.95)
        assert model.n_components_ == d, (trial, model.n_components_, d)
        assert np.abs(model.explained_variance_ratio_ - ratios[:d]).max() <= 1e-8

        cumulative = np.cumsum(ratios)
        assert cumulative[model.n_components_ - 1] >= 0.95 - 1e-12
        if model.n_components_ > 1:
            assert cumulative[model.n_components_ - 2] < 0.95

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    _passed("PCA oracle equivalence (20 matrices)", elapsed, 5)


# ---------------------------------------------------------------------------
# criterion 3: k-means contract

def brute_force_sse(X, k):
    best = np.inf
    for assign in itertools.product(range(k), repeat=len(X)):
        sse = 0.0
        for c in set(assign):
            members = X[[i for i, a in enumerate(assign) if a == c]]
            sse += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, sse)
    return best


def test_kmeans_contract():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    for seed in range(100):
        n = int(rng.integers(20, 121))
        f = int(rng.integers(1, 6))
        k = int(rng.integers(1, 9))
        X = rng.standard_normal((n, f))
        est = SeededKMeans(n_clusters=k, seed=seed).fit(X)
        hist = est.inertia_history_
        assert np.all(np.diff(hist) <= 1e-9 * max(1.0, hist[0])), seed

    for seed in range(12):
        n = int(rng.integers(4, 11))
        k = int(rng.integers(1, 4))
        X = rng.uniform(0, 5, (n, 1))
        est = SeededKMeans(n_clusters=k, seed=seed).fit(X)
        assert est.inertia_ >= brute_force_sse(X, k) - 1e-9

    X = rng.standard_normal((150, 4))
    a = SeededKMeans(n_clusters=6, seed=11).fit(X)
    b = SeededKMeans(n_clusters=6, seed=11).fit(X)
    assert np.array_equal(a.cluster_centers_, b.cluster_centers_)
    assert np.array_equal(a.labels_, b.labels_)
    assert a.inertia_ == b.inertia_
    assert np.array_equal(a.inertia_history_, b.inertia_history_)

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _passed("k-means contract (100 runs, 1D oracle bound, determinism)", elapsed, 30)


# ---------------------------------------------------------------------------
# criterion 4: density mass conservation

def conv2d_zero_pad(img, kernel):
    r = kernel.shape[0] // 2
    h, w = img.shape
    padded = np.zeros((h + 2 * r, w + 2 * r))
    padded[r : r + h, r : r + w] = img
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            out[y, x] = (padded[y : y + 2 * r + 1, x : x + 2 * r + 1] * kernel).sum()
    return out


def test_density_mass_conservation():
    start = time.perf_counter()
    rng = np.random.default_rng(21)
    grid = GridSpec.from_extent(80, 80, resolution=1.0, sigma=2.0)
    margin = 4 * grid.sigma
    n = 1000
    genes = ["a", "b", "c"]
    tokens = [genes[i % 3] for i in range(n)]
    index = {g: i for i, g in enumerate(genes)}
    pc = PointCloud(
        x=rng.uniform(margin, 80 - margin, n),
        y=rng.uniform(margin, 80 - margin, n),
        gene_index=np.asarray([index[t] for t in tokens], dtype=np.int64),
        gene_panel=genes,
    )
    smoothed = gaussian_smooth(rasterize_points(pc, grid))
    counts = np.bincount(pc.gene_index, minlength=3).astype(float)
    sums = smoothed.tensor.data.sum(axis=(0, 1), dtype=np.float64)
    assert np.abs(sums / counts - 1.0).max() <= 1e-3

    small_grid = GridSpec(resolution=1.0, sigma=1.3, height_bins=8, width_bins=8)
    data = rng.random((8, 8, 1)).astype(np.float32)
    m = GeneExpressionMap(FeatureTensor.from_array(data), small_grid)
    sep = gaussian_smooth(m).tensor.data[:, :, 0]
    k1 = gaussian_kernel1d(small_grid.sigma)
    direct = conv2d_zero_pad(data[:, :, 0].astype(np.float64), np.outer(k1, k1))
    assert np.abs(sep - direct).max() <= 1e-6

    elapsed = time.perf_counter() - start
    _passed("density mass conservation + separability", elapsed, 60)


# ---------------------------------------------------------------------------
# criterion 5: gene-dropout trend on synthetic tissue

def test_dropout_trend_on_synthetic_tissue():
    start = time.perf_counter()
    cfg = SynthConfig(seed=7, tied_pairs=((1, 2), (3, 4)))  # defaults otherwise
    _, points, image = generate(cfg)
    grid = GridSpec.from_extent(cfg.height, cfg.width)
    gene_map = gaussian_smooth(rasterize_points(points, grid))
    mask = foreground_mask(gene_map)
    feats = resample_to_grid(builtin_features(image), grid.height_bins, grid.width_bins)
    morph = apply_pca(feats, fit_pca(feats, mask, seed=7))

    fractions = [1.0, 0.75, 0.5, 0.25]
    result = dropout_benchmark(points, morph, grid, fractions, reps=10, seed=7,
                               final_k=6)
    stats = result.by_fraction()
    gaps = [stats[f]["joint_mean"] - stats[f]["genes_mean"] for f in fractions]

    assert stats[1.0]["genes_mean"] == 1.0  # shared seed: identical runs
    assert gaps[-1] >= 0.05, gaps
    assert all(later >= earlier for earlier, later in zip(gaps, gaps[1:])), gaps

    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    print(f"  gaps by fraction {fractions}: {[f'{g:+.3f}' for g in gaps]}")
    _passed("dropout benchmark trend (morphology compensates)", elapsed, 300)


# ---------------------------------------------------------------------------
# criterion 6: end-to-end CLI determinism

def _run_cli(args):
    proc = subprocess.run(
        [sys.executable, "-m", "sefi", *args], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    return proc


def test_cli_end_to_end_determinism(tmp_path):
    start = time.perf_counter()
    outputs = {}
    for run in ("one", "two"):
        d = tmp_path / run
        d.mkdir()
        _run_cli(["synth", "--seed", "9", "--height", "128", "--width", "128",
                  "--niches", "4", "--genes", "10", "--alpha", "2.0",
                  "--out-dir", str(d)])
        _run_cli(["density", "--points", str(d / "points.csv"),
                  "--height-px", "128", "--width-px", "128",
                  "--out", str(d / "genes.sft"), "--threads", "1"])
        _run_cli(["cluster", "--genes", str(d / "genes.sft"),
                  "--image", str(d / "dapi.png"), "--scales", "4,8,16",
                  "--final-k", "4", "--seed", "3", "--threads", "1",
                  "--out", str(d / "labels.pgm")])
        _run_cli(["expression-table", "--labels", str(d / "labels.pgm"),
                  "--genes", str(d / "genes.sft"), "--out", str(d / "table.csv")])
        outputs[run] = {
            p.name: p.read_bytes()
            for p in sorted(d.iterdir())
            if p.suffix in (".sft", ".pgm", ".csv")
        }
    assert outputs["one"].keys() == outputs["two"].keys()
    for name in outputs["one"]:
        assert outputs["one"][name] == outputs["two"][name], f"{name} differs"

    elapsed = time.perf_counter() - start
    _passed("CLI end-to-end determinism (SFT, PGM, CSV byte-identical)", elapsed, 120)


# ---------------------------------------------------------------------------
# criterion 7: hierarchical merge contract

def test_hierarchical_merge_contract():
    start = time.perf_counter()
    rng = np.random.default_rng(31)

    # Ward distances non-decreasing over full agglomerations
    for seed in range(5):
        X = rng.standard_normal((300, 3))
        est = SeededKMeans(n_clusters=15, seed=seed).fit(X)
        sizes = np.bincount(est.labels_, minlength=15).astype(float)
        merge = WardCentroidMerge(final_k=1).fit(
            est.cluster_centers_, sample_weight=np.maximum(sizes, 1e-12)
        )
        costs = [m[2] for m in merge.merges_]
        assert all(b >= a - 1e-9 for a, b in zip(costs, costs[1:]))

    # final_k = 1 puts a single label on all foreground pixels
    data = rng.random((12, 12, 3)).astype(np.float32)
    grid = GridSpec(1.0, 1.0, 12, 12)
    gene_map = GeneExpressionMap(FeatureTensor.from_array(data), grid)
    mask = data.sum(axis=2) > 1.0
    lm, _, tree = cluster_pixels(gene_map, None, mask, k=6, final_k=1, seed=0)
    assert lm.n_clusters == 1
    assert set(np.unique(lm.labels[mask]).tolist()) == {1}
    assert not lm.labels[~mask].any()

    # identical centroids merge first at distance zero
    centroids = np.array([[1.0, 1.0], [4.0, 4.0], [1.0, 1.0], [8.0, 8.0]])
    merge = WardCentroidMerge(final_k=3).fit(centroids, sample_weight=[3, 2, 5, 1])
    a, b, cost = merge.merges_[0]
    assert (a, b) == (0, 2)
    assert cost == 0.0

    elapsed = time.perf_counter() - start
    _passed("hierarchical merge contract (monotone, final_k=1, zero-distance)", elapsed, 60)

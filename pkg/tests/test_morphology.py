import numpy as np
import pytest

from sefi.io import FeatureTensor, GrayImage
from sefi.morphology import (
    VarianceThresholdPCA,
    apply_pca,
    builtin_features,
    fit_pca,
    resample_to_grid,
)


def gray(pixels):
    pixels = np.asarray(pixels, dtype=np.float32)
    return GrayImage(height=pixels.shape[0], width=pixels.shape[1], pixels=pixels)


def window_std_oracle(img, s):
    """Direct sliding-window std with scipy's even-size window alignment."""
    lo, hi = s // 2, s - s // 2 - 1
    padded = np.pad(img, ((lo, hi), (lo, hi)), mode="symmetric")
    out = np.zeros_like(img)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            out[y, x] = padded[y : y + s, x : x + s].std()
    return out


def test_constant_image_features_vanish():
    img = gray(np.full((40, 40), 0.37))
    t = builtin_features(img, scales=[4, 8])
    for i, name in enumerate(t.channel_names):
        if name.endswith(("_std", "_dog", "_entropy")):
            assert np.abs(t.data[:, :, i]).max() <= 1e-9, name
        else:
            assert np.allclose(t.data[:, :, i], 0.37, atol=1e-6)


def test_default_scales_give_16_channels():
    img = gray(np.zeros((40, 40)))
    t = builtin_features(img)
    assert t.channels == 16
    assert t.channel_names[:4] == ["s4_mean", "s4_std", "s4_dog", "s4_entropy"]


def test_checkerboard_std_matches_window_oracle():
    yy, xx = np.mgrid[0:32, 0:32]
    board = (((xx // 8) + (yy // 8)) % 2).astype(np.float64)
    t = builtin_features(gray(board), scales=[8])
    std_channel = t.data[:, :, t.channel_names.index("s8_std")].astype(np.float64)
    oracle = window_std_oracle(board, 8)
    assert np.abs(std_channel - oracle).max() <= 1e-6
    constant = builtin_features(gray(np.zeros((32, 32))), scales=[8])
    assert std_channel.mean() > constant.data[:, :, 1].mean()


def test_image_smaller_than_scale_errors():
    with pytest.raises(ValueError, match="smaller than max scale"):
        builtin_features(gray(np.zeros((16, 16))), scales=[4, 32])
    with pytest.raises(ValueError):
        builtin_features(gray(np.zeros((16, 16))), scales=[])
    with pytest.raises(ValueError):
        builtin_features(gray(np.zeros((16, 16))), scales=[1])


def test_resample_identity():
    rng = np.random.default_rng(0)
    t = FeatureTensor.from_array(rng.random((5, 7, 2)).astype(np.float32))
    out = resample_to_grid(t, 5, 7)
    assert np.array_equal(out.data, t.data)


def test_resample_linear_midpoint():
    data = np.array([[[0.0], [1.0]], [[0.0], [1.0]]], dtype=np.float32)
    out = resample_to_grid(FeatureTensor.from_array(data), 2, 3)
    assert np.allclose(out.data[:, 1, 0], 0.5)
    assert np.allclose(out.data[:, 0, 0], 0.0)
    assert np.allclose(out.data[:, 2, 0], 1.0)


def test_resample_constant_and_bounds():
    out = resample_to_grid(
        FeatureTensor.from_array(np.full((6, 6, 1), 2.5, dtype=np.float32)), 3, 4
    )
    assert np.allclose(out.data, 2.5)

    rng = np.random.default_rng(1)
    t = FeatureTensor.from_array(rng.random((9, 9, 3)).astype(np.float32))
    up = resample_to_grid(t, 17, 23)
    for c in range(3):
        assert up.data[:, :, c].min() >= t.data[:, :, c].min() - 1e-6
        assert up.data[:, :, c].max() <= t.data[:, :, c].max() + 1e-6


def test_resample_single_dim_target():
    data = np.arange(8, dtype=np.float32).reshape(4, 2, 1)
    out = resample_to_grid(FeatureTensor.from_array(data), 1, 2)
    assert out.data.shape == (1, 2, 1)
    assert np.allclose(out.data[0, :, 0], data[:, :, 0].mean(axis=0))


def pca_eigen_oracle(X, target):
    """Covariance eigendecomposition route, independent of the SVD fit."""
    cov = np.cov(X, rowvar=False, ddof=1)
    evals = np.linalg.eigvalsh(np.atleast_2d(cov))[::-1]
    evals = np.clip(evals, 0.0, None)
    ratios = evals / evals.sum()
    cumulative = np.cumsum(ratios)
    d = int(np.searchsorted(cumulative, target - 1e-12) + 1)
    return ratios, min(d, len(ratios))


def test_fit_pca_rank_one():
    rng = np.random.default_rng(2)
    base = rng.random((8, 8)).astype(np.float32)
    data = np.stack([base, 2.0 * base], axis=2)
    t = FeatureTensor.from_array(data)
    model = fit_pca(t, np.ones((8, 8), dtype=bool), variance_target=0.95, seed=0)
    assert model.n_components_ == 1
    assert model.explained_variance_ratio_[0] >= 1.0 - 1e-9
    assert abs(np.linalg.norm(model.components_[0]) - 1.0) <= 1e-9

    reduced = apply_pca(t, model)
    recon = model.inverse_transform(reduced.tensor.pixels().astype(np.float64))
    assert np.abs(recon - t.pixels()).max() <= 1e-6


def test_fit_pca_three_equal_variances_needs_all():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((3000, 3))
    t = FeatureTensor.from_array(X.reshape(50, 60, 3).astype(np.float32))
    model = fit_pca(t, np.ones((50, 60), dtype=bool), variance_target=0.95, seed=0)
    assert model.n_components_ == 3
    assert np.abs(model.explained_variance_ratio_ - 1 / 3).max() < 0.05

    ratios, d = pca_eigen_oracle(t.pixels().astype(np.float64), 0.95)
    assert d == 3
    assert np.abs(model.explained_variance_ratio_ - ratios[:3]).max() <= 1e-8


def test_variance_target_one_keeps_full_rank():
    rng = np.random.default_rng(4)
    model = VarianceThresholdPCA(variance_target=1.0).fit(rng.random((50, 5)))
    assert model.n_components_ == 5


def test_degenerate_zero_variance():
    t = FeatureTensor.from_array(np.full((4, 4, 3), 1.5, dtype=np.float32))
    model = fit_pca(t, np.ones((4, 4), dtype=bool))
    assert model.degenerate_
    assert model.n_components_ == 1
    assert np.all(model.components_ == 0.0)
    reduced = apply_pca(t, model)
    assert np.all(reduced.tensor.data == 0.0)


def test_apply_pca_centering_and_variance_budget():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((500, 6)) * np.array([3, 2, 1, 0.5, 0.1, 0.05])
    model = VarianceThresholdPCA(variance_target=0.95).fit(X)

    at_mean = model.transform(np.tile(model.mean_, (3, 1)))
    assert np.abs(at_mean).max() <= 1e-9

    projected = model.transform(X)
    assert projected.var(axis=0, ddof=1).sum() <= X.var(axis=0, ddof=1).sum() + 1e-6

    gram = model.components_ @ model.components_.T
    assert np.abs(gram - np.eye(model.n_components_)).max() <= 1e-6

    assert np.all(np.diff(model.explained_variance_ratio_) <= 1e-12)
    cum = model.explained_variance_ratio_.sum()
    assert cum >= 0.95
    assert cum - model.explained_variance_ratio_[-1] < 0.95


def test_transform_linearity_after_mean_removal():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((200, 4))
    model = VarianceThresholdPCA(variance_target=1.0).fit(X)
    x, y = rng.standard_normal((2, 4))
    a, b = 0.7, -1.3
    lhs = model.transform((a * x + b * y)[None])
    rhs = a * model.transform(x[None]) + b * model.transform(y[None])
    mean_term = (a + b - 1.0) * model.transform(np.zeros((1, 4)))
    assert np.abs(lhs - rhs + mean_term).max() <= 1e-6


def test_fit_pca_respects_mask_and_min_pixels():
    rng = np.random.default_rng(7)
    t = FeatureTensor.from_array(rng.random((6, 6, 2)).astype(np.float32))
    mask = np.zeros((6, 6), dtype=bool)
    mask[0, 0] = True
    with pytest.raises(ValueError, match="2 masked pixels"):
        fit_pca(t, mask)

    mask[:3] = True
    model = fit_pca(t, mask)
    manual = VarianceThresholdPCA().fit(t.data[mask].astype(np.float64))
    assert np.allclose(model.mean_, manual.mean_)


def test_sample_cap_subsampling_is_seeded():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((500, 4))
    m1 = VarianceThresholdPCA(sample_cap=100, seed=9).fit(X)
    m2 = VarianceThresholdPCA(sample_cap=100, seed=9).fit(X)
    assert np.array_equal(m1.mean_, m2.mean_)
    assert np.array_equal(m1.components_, m2.components_)


def test_apply_pca_channel_mismatch():
    rng = np.random.default_rng(9)
    t = FeatureTensor.from_array(rng.random((4, 4, 3)).astype(np.float32))
    model = VarianceThresholdPCA().fit(rng.random((30, 2)))
    with pytest.raises(ValueError, match="channels"):
        apply_pca(t, model)

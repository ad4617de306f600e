"""Per-pixel morphology features from the stain image, plus variance-target PCA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, uniform_filter
from sklearn.base import BaseEstimator, TransformerMixin

from .io import FeatureTensor, GrayImage
from .validation import as_float_matrix, check_mask

DEFAULT_SCALES = (4, 8, 16, 32)
DEFAULT_VARIANCE_TARGET = 0.95
DEFAULT_SAMPLE_CAP = 100_000

_ENTROPY_BINS = 8


def builtin_features(img: GrayImage, scales=DEFAULT_SCALES) -> FeatureTensor:
    """Deterministic texture features: per scale s, four channels per pixel.

    local mean, local std, difference-of-Gaussians (sigmas s/4 and s/2), and
    8-bin intensity entropy, all over s x s windows. Channel count is
    4 * len(scales); names encode scale and statistic (e.g. "s8_std").
    """
    scales = [int(s) for s in scales]
    if not scales:
        raise ValueError("scales must be non-empty")
    if any(s < 2 for s in scales):
        raise ValueError(f"every scale must be >= 2, got {scales}")
    if max(scales) > min(img.height, img.width):
        raise ValueError(
            f"image {img.height}x{img.width} smaller than max scale {max(scales)}"
        )

    x = img.pixels.astype(np.float64)
    bins = np.minimum((x * _ENTROPY_BINS).astype(np.int64), _ENTROPY_BINS - 1)

    channels = []
    names = []
    for s in scales:
        mean = uniform_filter(x, size=s, mode="reflect")
        sq = uniform_filter(x * x, size=s, mode="reflect")
        std = np.sqrt(np.clip(sq - mean * mean, 0.0, None))
        dog = gaussian_filter(x, s / 4.0, mode="reflect") - gaussian_filter(
            x, s / 2.0, mode="reflect"
        )
        entropy = np.zeros_like(x)
        for b in range(_ENTROPY_BINS):
            p = uniform_filter((bins == b).astype(np.float64), size=s, mode="reflect")
            p = np.clip(p, 0.0, 1.0)
            nz = p > 0
            entropy[nz] -= p[nz] * np.log2(p[nz])
        channels.extend([mean, std, dog, entropy])
        names.extend([f"s{s}_mean", f"s{s}_std", f"s{s}_dog", f"s{s}_entropy"])

    data = np.stack(channels, axis=2).astype(np.float32)
    return FeatureTensor.from_array(data, channel_names=names)


def resample_to_grid(t: FeatureTensor, target_h: int, target_w: int) -> FeatureTensor:
    """Bilinear per-channel resampling onto a target grid.

    Corners map to corners, so equal dims give an identity and outputs stay
    inside each source channel's [min, max].
    """
    if target_h < 1 or target_w < 1:
        raise ValueError("target dims must be >= 1")
    if (target_h, target_w) == (t.height, t.width):
        return FeatureTensor.from_array(t.data.copy(), list(t.channel_names))

    ys = np.linspace(0.0, t.height - 1.0, target_h) if target_h > 1 else np.array(
        [(t.height - 1) / 2.0]
    )
    xs = np.linspace(0.0, t.width - 1.0, target_w) if target_w > 1 else np.array(
        [(t.width - 1) / 2.0]
    )
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([yy.ravel(), xx.ravel()])

    out = np.empty((target_h, target_w, t.channels), dtype=np.float32)
    for c in range(t.channels):
        vals = map_coordinates(
            t.data[:, :, c].astype(np.float64), coords, order=1, mode="nearest"
        )
        out[:, :, c] = vals.reshape(target_h, target_w)
    return FeatureTensor.from_array(out, channel_names=list(t.channel_names))


class VarianceThresholdPCA(TransformerMixin, BaseEstimator):
    """PCA keeping the fewest leading components that reach a variance target.

    Parameters
    ----------
    variance_target : float in (0, 1], default 0.95
        Retained components are the smallest count whose cumulative
        explained-variance ratio reaches this value.
    sample_cap : int, default 100000
        Fit on at most this many rows, subsampled uniformly with `seed`.
    seed : int, default 0
        Seed for the subsampling RNG.

    Attributes
    ----------
    mean_ : (C,) per-feature mean of the fit rows.
    components_ : (D, C) orthonormal rows, leading principal directions.
    explained_variance_ratio_ : (D,) retained variance ratios, non-increasing.
    n_components_ : int, the retained dimension D.
    degenerate_ : True when the fit data had zero variance; a single zero
        component is kept in that case.
    """

    def __init__(self, variance_target=DEFAULT_VARIANCE_TARGET,
                 sample_cap=DEFAULT_SAMPLE_CAP, seed=0):
        self.variance_target = variance_target
        self.sample_cap = sample_cap
        self.seed = seed

    def fit(self, X, y=None):
        if not (0.0 < self.variance_target <= 1.0):
            raise ValueError(
                f"variance_target must be in (0, 1], got {self.variance_target}"
            )
        X = as_float_matrix(X)
        n, c = X.shape
        if n < 2:
            raise ValueError(f"need at least 2 rows to fit PCA, got {n}")
        if n > self.sample_cap:
            rng = np.random.default_rng(self.seed)
            rows = np.sort(rng.choice(n, size=self.sample_cap, replace=False))
            X = X[rows]
            n = self.sample_cap

        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        variances = (svals * svals) / (n - 1)
        total = variances.sum()

        if total <= 0.0:
            self.n_components_ = 1
            self.components_ = np.zeros((1, c))
            self.explained_variance_ratio_ = np.zeros(1)
            self.degenerate_ = True
            return self

        ratios = variances / total
        cumulative = np.cumsum(ratios)
        d = int(np.searchsorted(cumulative, self.variance_target - 1e-12) + 1)
        d = min(d, len(ratios))

        components = vt[:d].copy()
        # deterministic sign: largest-magnitude entry of each row is positive
        for row in components:
            peak = np.argmax(np.abs(row))
            if row[peak] < 0:
                row *= -1.0
        self.n_components_ = d
        self.components_ = components
        self.explained_variance_ratio_ = ratios[:d].copy()
        self.degenerate_ = False
        return self

    def transform(self, X):
        X = as_float_matrix(X)
        if X.shape[1] != self.mean_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fit with {self.mean_.shape[0]}"
            )
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        Z = as_float_matrix(Z, name="Z")
        return Z @ self.components_ + self.mean_


@dataclass
class ReducedFeatures:
    """PCA-projected morphology tensor together with its fitted projection."""

    tensor: FeatureTensor
    model: VarianceThresholdPCA


def fit_pca(t: FeatureTensor, mask, variance_target=DEFAULT_VARIANCE_TARGET,
            sample_cap=DEFAULT_SAMPLE_CAP, seed=0) -> VarianceThresholdPCA:
    """Fit the variance-target PCA on the masked pixels of a feature tensor."""
    mask = check_mask(mask, t.height, t.width)
    rows = t.data[mask].astype(np.float64)
    if rows.shape[0] < 2:
        raise ValueError(f"need at least 2 masked pixels, got {rows.shape[0]}")
    model = VarianceThresholdPCA(
        variance_target=variance_target, sample_cap=sample_cap, seed=seed
    )
    return model.fit(rows)


def apply_pca(t: FeatureTensor, model: VarianceThresholdPCA) -> ReducedFeatures:
    """Project every pixel: output = components . (x - mean)."""
    if t.channels != model.mean_.shape[0]:
        raise ValueError(
            f"tensor has {t.channels} channels, model expects {model.mean_.shape[0]}"
        )
    projected = model.transform(t.pixels().astype(np.float64))
    data = projected.reshape(t.height, t.width, model.n_components_).astype(np.float32)
    names = [f"pc{i + 1}" for i in range(model.n_components_)]
    return ReducedFeatures(
        tensor=FeatureTensor.from_array(data, channel_names=names), model=model
    )

"""Sliding-window segmentation, statistical feature vectors, z-score scaling."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DegenerateSegmentError,
    EmptyTrainingSetError,
    InvalidParamError,
    SignalTooShortError,
)
from .signal import FaultClass, LabeledSignal

FEATURE_NAMES = (
    "mean",
    "std_dev",
    "peak_to_peak",
    "rms",
    "skewness",
    "kurtosis",
    "crest_factor",
    "shape_factor",
    "impulse_factor",
    "margin_factor",
    "peak_factor",
)
N_FEATURES = len(FEATURE_NAMES)
DEFAULT_SEGMENT_LEN = 10_000


@dataclass(frozen=True)
class WindowingSpec:
    window_len: int = 1000
    overlap_fraction: float = 0.5

    def __post_init__(self):
        if self.window_len < 2:
            raise InvalidParamError("window_len must be >= 2")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise InvalidParamError("overlap_fraction must lie in [0, 1)")
        if self.step < 1:
            raise InvalidParamError("overlap too large: window step rounds to 0")

    @property
    def step(self) -> int:
        return int(round(self.window_len * (1.0 - self.overlap_fraction)))

    def count(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.step + 1


@dataclass(frozen=True, eq=False)
class Window:
    values: np.ndarray
    label: FaultClass
    parent_id: str
    start_index: int


def window_matrix(samples, spec: WindowingSpec = WindowingSpec()) -> np.ndarray:
    """All windows of ``samples`` as rows of a (count, window_len) array."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < spec.window_len:
        raise SignalTooShortError(samples.size, spec.window_len)
    view = np.lib.stride_tricks.sliding_window_view(samples, spec.window_len)
    return np.ascontiguousarray(view[:: spec.step])


def make_windows(signal: LabeledSignal, spec: WindowingSpec = WindowingSpec()) -> list[Window]:
    rows = window_matrix(signal.samples, spec)
    return [
        Window(row, signal.label, signal.source_id, k * spec.step)
        for k, row in enumerate(rows)
    ]


def windows_dataset(signals: Sequence[LabeledSignal], spec: WindowingSpec = WindowingSpec()):
    """Stack the windows of many signals into ``(X, y)`` arrays."""
    X, y = [], []
    for sig in signals:
        rows = window_matrix(sig.samples, spec)
        X.append(rows)
        y.append(np.full(len(rows), int(sig.label)))
    if not X:
        return np.empty((0, spec.window_len)), np.empty(0, dtype=np.int64)
    return np.concatenate(X), np.concatenate(y).astype(np.int64)


@dataclass(frozen=True)
class FeatureVector:
    mean: float
    std_dev: float
    peak_to_peak: float
    rms: float
    skewness: float
    kurtosis: float
    crest_factor: float
    shape_factor: float
    impulse_factor: float
    margin_factor: float
    peak_factor: float
    label: FaultClass | None = None

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self)[:N_FEATURES], dtype=np.float64)

    def with_label(self, label) -> FeatureVector:
        return FeatureVector(*astuple(self)[:N_FEATURES], label=FaultClass(label))


assert tuple(f.name for f in fields(FeatureVector))[:N_FEATURES] == FEATURE_NAMES


def feature_matrix(segments) -> np.ndarray:
    """Row-wise statistical features of a (n_segments, length) array."""
    x = np.asarray(segments, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] < 2:
        raise InvalidParamError("segments need at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise InvalidParamError("segments contain non-finite values")
    mu = x.mean(axis=1)
    centered = x - mu[:, None]
    sigma = np.sqrt(np.mean(centered**2, axis=1))
    absx = np.abs(x)
    peak = absx.max(axis=1)
    mean_abs = absx.mean(axis=1)
    bad = (sigma == 0) | (mean_abs == 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise DegenerateSegmentError(
            "zero variance" if sigma[k] == 0 else "zero mean absolute value",
            segment_index=k if x.shape[0] > 1 else None,
        )
    z = centered / sigma[:, None]
    rms = np.sqrt(np.mean(x**2, axis=1))
    sqrt_mean = np.mean(np.sqrt(absx), axis=1)
    return np.column_stack([
        mu,
        sigma,
        x.max(axis=1) - x.min(axis=1),
        rms,
        np.mean(z**3, axis=1),
        np.mean(z**4, axis=1),
        peak / rms,
        rms / mean_abs,
        peak / mean_abs,
        peak / sqrt_mean**2,
        peak,
    ])


def extract_features(segment) -> FeatureVector:
    """Eleven descriptors of one segment; population moments, non-excess kurtosis."""
    return FeatureVector(*feature_matrix(np.asarray(segment, dtype=np.float64)[None, :])[0])


def segment_matrix(samples, segment_len: int) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size // segment_len
    return samples[: n * segment_len].reshape(n, segment_len)


def build_feature_dataset(
    signals: Sequence[LabeledSignal], segment_len: int = DEFAULT_SEGMENT_LEN
) -> list[FeatureVector]:
    if segment_len < 2:
        raise InvalidParamError("segment_len must be >= 2")
    out = []
    for sig in signals:
        segs = segment_matrix(sig.samples, segment_len)
        if not len(segs):
            continue
        try:
            feats = feature_matrix(segs)
        except DegenerateSegmentError as exc:
            raise DegenerateSegmentError(exc.reason, sig.source_id, exc.segment_index or 0) from None
        out.extend(FeatureVector(*row, label=sig.label) for row in feats)
    return out


def features_to_arrays(features: Sequence[FeatureVector]):
    X = np.array([f.as_array() for f in features], dtype=np.float64).reshape(-1, N_FEATURES)
    y = np.array([int(f.label) for f in features], dtype=np.int64)
    return X, y


def write_feature_csv(path, features: Sequence[FeatureVector]) -> None:
    lines = [",".join(FEATURE_NAMES + ("label",))]
    for f in features:
        label = "" if f.label is None else f.label.slug
        lines.append(",".join(repr(float(v)) for v in f.as_array()) + f",{label}")
    Path(path).write_text("\n".join(lines) + "\n")


class StatisticalFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping rows of raw segments to 11 features."""

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        return feature_matrix(check_array(X))

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)


class Normalizer(TransformerMixin, BaseEstimator):
    """Per-column z-score using training statistics.

    Columns whose standard deviation falls below ``eps`` are scaled by 1,
    so a constant training column maps to zeros.
    """

    def __init__(self, eps=1e-12):
        self.eps = eps

    def fit(self, X, y=None):
        X = _as_matrix(X)
        if X.shape[0] == 0:
            raise EmptyTrainingSetError("cannot fit a normalizer on zero rows")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std < self.eps, 1.0, std)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = _as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidParamError(
                f"normalizer fitted on {self.n_features_in_} columns, got {X.shape[1]}"
            )
        return (X - self.mean_) / self.scale_

    def to_text(self) -> str:
        check_is_fitted(self, "mean_")
        rows = [",".join(repr(float(v)) for v in r) for r in (self.mean_, self.scale_)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Normalizer:
        mean_row, scale_row = [ln for ln in text.splitlines() if ln.strip()][:2]
        norm = cls()
        norm.mean_ = np.array([float(v) for v in mean_row.split(",")])
        norm.scale_ = np.array([float(v) for v in scale_row.split(",")])
        norm.n_features_in_ = norm.mean_.size
        return norm


def _as_matrix(X) -> np.ndarray:
    if len(X) and isinstance(X[0], FeatureVector):
        X = [f.as_array() for f in X]
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def fit_normalizer(train_features, eps=1e-12) -> Normalizer:
    return Normalizer(eps=eps).fit(train_features)


def apply_normalizer(norm: Normalizer, features) -> np.ndarray:
    return norm.transform(features)

"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def naive_features(segment):
    """Straight-loop statistical features in pure Python floats."""
    xs = [float(v) for v in segment]
    n = len(xs)
    mean = 0.0
    for v in xs:
        mean += v
    mean /= n
    var = 0.0
    for v in xs:
        var += (v - mean) ** 2
    std = math.sqrt(var / n)
    sq = 0.0
    abs_sum = 0.0
    sqrt_abs_sum = 0.0
    peak = 0.0
    lo, hi = xs[0], xs[0]
    m3 = m4 = 0.0
    for v in xs:
        sq += v * v
        abs_sum += abs(v)
        sqrt_abs_sum += math.sqrt(abs(v))
        peak = max(peak, abs(v))
        lo, hi = min(lo, v), max(hi, v)
        z = (v - mean) / std
        m3 += z**3
        m4 += z**4
    rms = math.sqrt(sq / n)
    mean_abs = abs_sum / n
    return {
        "mean": mean,
        "std_dev": std,
        "peak_to_peak": hi - lo,
        "rms": rms,
        "skewness": m3 / n,
        "kurtosis": m4 / n,
        "crest_factor": peak / rms,
        "shape_factor": rms / mean_abs,
        "impulse_factor": peak / mean_abs,
        "margin_factor": peak / (sqrt_abs_sum / n) ** 2,
        "peak_factor": peak,
    }


def numeric_gradient(f, theta, index, h=1e-5):
    """Central difference of scalar ``f()`` w.r.t. ``theta.flat[index]``."""
    old = theta.flat[index]
    theta.flat[index] = old + h
    up = f()
    theta.flat[index] = old - h
    down = f()
    theta.flat[index] = old
    return (up - down) / (2 * h)


def scalar_metrics(counts):
    """Per-class precision/recall/F1 from explicit loops over a 3x3 table."""
    k = len(counts)
    out = []
    for c in range(k):
        tp = counts[c][c]
        col = sum(counts[r][c] for r in range(k))
        row = sum(counts[c][j] for j in range(k))
        p = tp / col if col else 0.0
        r = tp / row if row else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out.append((p, r, f))
    return out


def softmax_regression_accuracy(X_train, y_train, X_test, y_test):
    """Linear probe: multinomial logistic regression on standardized features."""
    from sklearn.linear_model import LogisticRegression
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=5000))
    clf.fit(X_train, y_train)
    return float(np.mean(clf.predict(X_test) == y_test))


def gaussian_blobs(n_per_class=200, n_features=11, separation=4.0, seed=0):
    """Three well-separated Gaussian clusters with labels 0, 1, 2."""
    r = np.random.default_rng(seed)
    centers = r.normal(0, separation, size=(3, n_features))
    X = np.concatenate([r.normal(c, 1.0, size=(n_per_class, n_features)) for c in centers])
    y = np.repeat(np.arange(3), n_per_class)
    perm = r.permutation(y.size)
    return X[perm], y[perm]

"""Confusion matrices, precision/recall/F1, reward curves, JSON reports."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import InvalidParamError, LengthMismatchError
from .signal import N_CLASSES, FaultClass

CLASS_SLUGS = tuple(c.slug for c in FaultClass)
FLOAT_DECIMALS = 6


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed ``[actual][predicted]`` in :class:`FaultClass` order."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (N_CLASSES, N_CLASSES) or np.any(c < 0) or not np.all(c == np.round(c)):
            raise InvalidParamError("confusion counts must be a 3x3 non-negative integer table")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_csv(self) -> str:
        lines = ["actual," + ",".join(CLASS_SLUGS)]
        for slug, row in zip(CLASS_SLUGS, self.counts):
            lines.append(slug + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def confusion_from_predictions(actuals, predictions) -> ConfusionMatrix:
    a = np.asarray(actuals, dtype=np.int64).ravel()
    p = np.asarray(predictions, dtype=np.int64).ravel()
    if a.size != p.size:
        raise LengthMismatchError(f"{a.size} actuals vs {p.size} predictions")
    if a.size == 0:
        raise InvalidParamError("need at least one prediction")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (a, p), 1)
    return ConfusionMatrix(counts)


@dataclass(eq=False)
class MetricsReport:
    accuracy: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: ConfusionMatrix
    zero_division: list = field(default_factory=list)  # e.g. "precision:faulty"
    model_id: int | None = None
    seed: int | None = None
    config_digest: str = ""


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def metrics_from_confusion(C: ConfusionMatrix) -> MetricsReport:
    """Per-class and macro-averaged rates.

    A ratio with a zero denominator is reported as 0 and named in
    ``zero_division``.
    """
    counts = C.counts
    if C.total < 1:
        raise InvalidParamError("confusion matrix is empty")
    flags = []
    precision, recall, f1 = [], [], []
    for k, slug in enumerate(CLASS_SLUGS):
        tp = int(counts[k, k])
        p = _ratio(tp, int(counts[:, k].sum()), f"precision:{slug}", flags)
        r = _ratio(tp, int(counts[k, :].sum()), f"recall:{slug}", flags)
        f = _ratio(2 * p * r, p + r, f"f1:{slug}", flags)
        precision.append(p)
        recall.append(r)
        f1.append(f)
    return MetricsReport(
        accuracy=float(Fraction(int(np.trace(counts)), C.total)),
        precision=np.array(precision),
        recall=np.array(recall),
        f1=np.array(f1),
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
        confusion=C,
        zero_division=flags,
    )


# --------------------------------------------------------------------------
# Reward curves

@dataclass(frozen=True)
class RewardCurve:
    """``(episode, cumulative_reward, epsilon)`` rows, episodes counted from 1."""

    episodes: tuple = ()

    def __post_init__(self):
        rows = tuple((int(e), float(r), float(eps)) for e, r, eps in self.episodes)
        idx = [r[0] for r in rows]
        if idx and (idx[0] < 1 or any(b <= a for a, b in zip(idx, idx[1:]))):
            raise InvalidParamError("episode indices must increase strictly from 1")
        object.__setattr__(self, "episodes", rows)

    @classmethod
    def from_log(cls, log) -> RewardCurve:
        return cls(tuple((r.episode, r.cumulative_reward, r.epsilon) for r in log))

    @property
    def total(self) -> float:
        return math.fsum(r for _, r, _ in self.episodes)

    def to_csv(self) -> str:
        lines = ["episode,cumulative_reward,epsilon"]
        lines += [f"{e},{r!r},{eps!r}" for e, r, eps in self.episodes]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Reports

def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _encode(obj) -> str:
    """Deterministic JSON with every float written to six decimals."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise InvalidParamError("cannot serialise non-finite float")
        text = f"{float(obj):.{FLOAT_DECIMALS}f}"
        return "0.000000" if text == "-0.000000" else text
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def report_to_dict(report: MetricsReport, reward_curve: RewardCurve | None = None) -> dict:
    out = {
        "model_id": report.model_id,
        "seed": report.seed,
        "config_digest": report.config_digest,
        "accuracy": report.accuracy,
        "per_class": {
            slug: {
                "precision": float(report.precision[k]),
                "recall": float(report.recall[k]),
                "f1": float(report.f1[k]),
            }
            for k, slug in enumerate(CLASS_SLUGS)
        },
        "macro": {
            "precision": report.macro_precision,
            "recall": report.macro_recall,
            "f1": report.macro_f1,
        },
        "confusion": report.confusion.counts.tolist(),
        "zero_division": list(report.zero_division),
    }
    if reward_curve is not None:
        out["reward_curve"] = [
            {"episode": e, "cumulative_reward": r, "epsilon": eps} for e, r, eps in reward_curve.episodes
        ]
    return out


def dumps_report(data: dict) -> str:
    return _encode(data) + "\n"


def build_report(
    model_id: int,
    seed: int,
    config: dict,
    predictions: Sequence[int],
    actuals: Sequence[int],
    reward_curve: RewardCurve | None = None,
):
    """Metrics plus their canonical JSON text."""
    report = metrics_from_confusion(confusion_from_predictions(actuals, predictions))
    report.model_id = int(model_id)
    report.seed = int(seed)
    report.config_digest = config_digest(config)
    return report, dumps_report(report_to_dict(report, reward_curve))


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())

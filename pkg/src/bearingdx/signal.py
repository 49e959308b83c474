"""Vibration recordings: loading, synthetic generation, train/test split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import (
    EmptyClassError,
    InvalidParamError,
    MissingFileError,
    NonFiniteSampleError,
    ParseError,
)

# UORED recordings are sampled at 42 kHz.
DEFAULT_SAMPLE_RATE_HZ = 42_000.0

# Synthetic signal model constants.
SHAFT_FREQ_HZ = 30.0
SHAFT_AMPLITUDE = 0.25
FAULT_FREQ_HZ = 105.0
RESONANCE_FREQ_HZ = 3_000.0
IMPULSE_DECAY_S = 2e-3


class FaultClass(IntEnum):
    """Bearing condition. Index order matches the reward-matrix rows."""

    DEVELOPING_FAULT = 0
    FAULTY = 1
    HEALTHY = 2

    @property
    def slug(self) -> str:
        return self.name.lower()

    @classmethod
    def from_slug(cls, text: str) -> FaultClass:
        try:
            return cls[text.strip().upper()]
        except KeyError:
            valid = ", ".join(c.slug for c in cls)
            raise InvalidParamError(f"unknown label {text!r}; expected one of {valid}") from None


N_CLASSES = len(FaultClass)


@dataclass(frozen=True, eq=False)
class LabeledSignal:
    samples: np.ndarray
    label: FaultClass
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidParamError("samples must be a non-empty 1-D array")
        bad = np.flatnonzero(~np.isfinite(samples))
        if bad.size:
            raise NonFiniteSampleError(self.source_id or "<memory>", int(bad[0]))
        if not self.sample_rate_hz > 0:
            raise InvalidParamError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", FaultClass(self.label))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[tuple[Path, FaultClass], ...] = ()
    format_tag: str | None = None  # "csv", "f32", or None to infer per file

    def __post_init__(self):
        entries = tuple((Path(p), FaultClass(lab)) for p, lab in self.entries)
        paths = [p for p, _ in entries]
        if len(set(paths)) != len(paths):
            raise InvalidParamError("manifest paths must be unique")
        if self.format_tag not in (None, "csv", "f32"):
            raise InvalidParamError(f"unknown format tag {self.format_tag!r}")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidParamError("train_fraction must lie strictly between 0 and 1")


# --------------------------------------------------------------------------
# Loading

def read_manifest(path) -> DatasetManifest:
    """Parse a ``path,label`` CSV. Relative paths resolve against its folder."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    entries = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "label"]:
            raise ParseError(path, "line 1", "header must be 'path,label'")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = FaultClass.from_slug(row["label"] or "")
            except InvalidParamError as exc:
                raise ParseError(path, f"line {lineno}", str(exc)) from None
            p = Path(row["path"].strip())
            if not p.is_absolute():
                p = path.parent / p
            entries.append((p, label))
    return DatasetManifest(tuple(entries))


def write_manifest(path, entries: Sequence[tuple[str | Path, FaultClass]]) -> None:
    path = Path(path)
    lines = ["path,label"]
    for p, label in entries:
        lines.append(f"{Path(p).as_posix()},{FaultClass(label).slug}")
    path.write_text("\n".join(lines) + "\n")


def _read_csv_samples(path: Path) -> np.ndarray:
    values = []
    with path.open("rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.decode("ascii", errors="replace").strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ParseError(path, f"line {lineno}", repr(text)) from None
    return np.asarray(values, dtype=np.float64)


def _read_f32_samples(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) % 4:
        raise ParseError(path, f"offset {len(raw) - len(raw) % 4}", "truncated float32")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def _format_for(path: Path, tag: str | None) -> str:
    if tag is not None:
        return tag
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".f32", ".bin"):
        return "f32"
    raise ParseError(path, "file name", f"cannot infer encoding from suffix {suffix!r}")


def load_signal(path, label, fmt=None, sample_rate_hz=DEFAULT_SAMPLE_RATE_HZ) -> LabeledSignal:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    fmt = _format_for(path, fmt)
    samples = _read_csv_samples(path) if fmt == "csv" else _read_f32_samples(path)
    if samples.size == 0:
        raise ParseError(path, "offset 0", "no samples")
    bad = np.flatnonzero(~np.isfinite(samples))
    if bad.size:
        raise NonFiniteSampleError(path, int(bad[0]))
    return LabeledSignal(samples, label, sample_rate_hz, source_id=str(path))


def load_dataset(manifest: DatasetManifest, sample_rate_hz=DEFAULT_SAMPLE_RATE_HZ) -> list[LabeledSignal]:
    """Decode every manifest entry, preserving manifest order."""
    return [
        load_signal(p, label, manifest.format_tag, sample_rate_hz)
        for p, label in manifest.entries
    ]


def write_signal_f32(path, samples) -> None:
    Path(path).write_bytes(np.asarray(samples, dtype="<f4").tobytes())


# --------------------------------------------------------------------------
# Synthetic data

def _impulse_train(n, fs, amplitude, phase_s):
    """Periodic decaying-exponential ringing bursts starting at ``phase_s``."""
    t = np.arange(n) / fs
    period = 1.0 / FAULT_FREQ_HZ
    # time since the most recent impulse; impulses fire at phase_s + k*period
    since = np.mod(t - phase_s, period)
    burst = np.exp(-since / IMPULSE_DECAY_S) * np.sin(2 * np.pi * RESONANCE_FREQ_HZ * since)
    # before the first impulse nothing has fired yet
    burst[t < phase_s] = 0.0
    return amplitude * burst


def synthesize_signal(label, signal_len, rng, noise_sigma, amplitude, fs=DEFAULT_SAMPLE_RATE_HZ):
    t = np.arange(signal_len) / fs
    shaft_phase = rng.uniform(0, 2 * np.pi)
    impulse_phase = rng.uniform(0, 1.0 / FAULT_FREQ_HZ)
    x = SHAFT_AMPLITUDE * np.sin(2 * np.pi * SHAFT_FREQ_HZ * t + shaft_phase)
    x = x + rng.normal(0.0, noise_sigma, size=signal_len)
    if amplitude > 0:
        x = x + _impulse_train(signal_len, fs, amplitude, impulse_phase)
    return x


def generate_synthetic_dataset(
    n_per_class: int,
    signal_len: int,
    seed: int,
    noise_sigma: float = 0.1,
    impulse_amp: tuple[float, float, float] = (0.0, 0.5, 2.0),
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[LabeledSignal]:
    """Sinusoid + Gaussian noise + class-dependent periodic impulse train.

    ``impulse_amp`` is ordered (healthy, developing_fault, faulty) and the
    healthy entry must be zero. Signals come out grouped per recording index
    in class-index order, and the result is a pure function of the arguments.
    """
    if n_per_class < 1:
        raise InvalidParamError("n_per_class must be >= 1")
    if signal_len < 1000:
        raise InvalidParamError("signal_len must be >= 1000")
    if noise_sigma < 0:
        raise InvalidParamError("noise_sigma must be non-negative")
    if len(impulse_amp) != 3:
        raise InvalidParamError("impulse_amp needs three entries (healthy, developing, faulty)")
    healthy_amp, developing_amp, faulty_amp = (float(a) for a in impulse_amp)
    if min(healthy_amp, developing_amp, faulty_amp) < 0:
        raise InvalidParamError("impulse amplitudes must be non-negative")
    if healthy_amp != 0:
        raise InvalidParamError("healthy impulse amplitude must be 0")
    amp_for = {
        FaultClass.HEALTHY: healthy_amp,
        FaultClass.DEVELOPING_FAULT: developing_amp,
        FaultClass.FAULTY: faulty_amp,
    }
    children = np.random.SeedSequence(seed).spawn(n_per_class * N_CLASSES)
    out = []
    for i in range(n_per_class):
        for label in FaultClass:
            rng = np.random.default_rng(children[i * N_CLASSES + label])
            x = synthesize_signal(label, signal_len, rng, noise_sigma, amp_for[label], sample_rate_hz)
            out.append(LabeledSignal(x, label, sample_rate_hz, source_id=f"{label.slug}_{i:04d}"))
    return out


# --------------------------------------------------------------------------
# Splitting

def _round_half_up(x: float) -> int:
    # absorb float noise such as (1 - 0.8) * 5 == 0.9999999999999998
    return int(math.floor(x + 0.5 + 1e-9))


def split_indices(labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (train, test) for a seeded, optionally stratified split."""
    labels = np.asarray(labels)
    n = labels.size
    if n == 0:
        raise InvalidParamError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    test_frac = 1.0 - spec.train_fraction
    if not spec.stratified:
        perm = rng.permutation(n)
        n_test = _round_half_up(test_frac * n)
        return perm[n_test:], perm[:n_test]
    train, test = [], []
    for label in FaultClass:
        idx = np.flatnonzero(labels == label)
        if idx.size == 0:
            raise EmptyClassError(f"class {label.slug} has no examples")
        idx = idx[rng.permutation(idx.size)]
        n_test = _round_half_up(test_frac * idx.size)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    # interleave classes so neither half is sorted by label
    train = np.concatenate(train)
    test = np.concatenate(test)
    return train[rng.permutation(train.size)], test[rng.permutation(test.size)]


def split_train_test(data: Sequence, spec: SplitSpec = SplitSpec(), labels=None):
    """Split any sequence of labeled items; ``labels`` defaults to ``item.label``."""
    if labels is None:
        labels = [int(item.label) for item in data]
    train_idx, test_idx = split_indices(labels, spec)
    return [data[i] for i in train_idx], [data[i] for i in test_idx]

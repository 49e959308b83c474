import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bearingdx.exceptions import (
    EmptyClassError,
    InvalidParamError,
    MissingFileError,
    NonFiniteSampleError,
    ParseError,
)
from bearingdx.features import build_feature_dataset, features_to_arrays
from bearingdx.signal import (
    DatasetManifest,
    FaultClass,
    LabeledSignal,
    SplitSpec,
    generate_synthetic_dataset,
    load_dataset,
    read_manifest,
    split_indices,
    split_train_test,
    write_manifest,
    write_signal_f32,
)

from oracles import softmax_regression_accuracy


def test_fault_class_order_and_roundtrip():
    assert [c.slug for c in FaultClass] == ["developing_fault", "faulty", "healthy"]
    for c in FaultClass:
        assert FaultClass(int(c)) is c
        assert FaultClass.from_slug(c.slug) is c
    with pytest.raises(InvalidParamError):
        FaultClass.from_slug("broken")


def test_labeled_signal_rejects_bad_input():
    with pytest.raises(InvalidParamError):
        LabeledSignal(np.array([]), FaultClass.HEALTHY)
    with pytest.raises(NonFiniteSampleError):
        LabeledSignal(np.array([1.0, np.nan]), FaultClass.HEALTHY)
    with pytest.raises(InvalidParamError):
        LabeledSignal(np.array([1.0]), FaultClass.HEALTHY, sample_rate_hz=0)


def test_empty_manifest_loads_nothing():
    assert load_dataset(DatasetManifest(())) == []


def test_csv_signal_decodes_in_order(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("1.0\n-2.5\n0.0")
    (sig,) = load_dataset(DatasetManifest(((path, FaultClass.HEALTHY),)))
    np.testing.assert_array_equal(sig.samples, [1.0, -2.5, 0.0])
    assert sig.label is FaultClass.HEALTHY


def test_csv_accepts_crlf(tmp_path):
    path = tmp_path / "a.csv"
    path.write_bytes(b"1.5\r\n2.5\r\n")
    (sig,) = load_dataset(DatasetManifest(((path, FaultClass.FAULTY),)))
    np.testing.assert_array_equal(sig.samples, [1.5, 2.5])


def test_f32_recording_at_uored_length(tmp_path):
    samples = np.random.default_rng(0).normal(size=420_000).astype("<f4")
    path = tmp_path / "rec.f32"
    path.write_bytes(samples.tobytes())
    (sig,) = load_dataset(DatasetManifest(((path, FaultClass.FAULTY),)))
    assert len(sig) == 420_000
    np.testing.assert_array_equal(sig.samples, samples.astype(np.float64))


def test_loader_errors(tmp_path):
    with pytest.raises(MissingFileError):
        load_dataset(DatasetManifest(((tmp_path / "nope.csv", FaultClass.HEALTHY),)))
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0\nabc\n")
    with pytest.raises(ParseError, match="line 2"):
        load_dataset(DatasetManifest(((bad, FaultClass.HEALTHY),)))
    nan = tmp_path / "nan.csv"
    nan.write_text("1.0\n2.0\nnan\n")
    with pytest.raises(NonFiniteSampleError) as info:
        load_dataset(DatasetManifest(((nan, FaultClass.HEALTHY),)))
    assert info.value.index == 2
    trunc = tmp_path / "t.f32"
    trunc.write_bytes(b"\x00" * 6)
    with pytest.raises(ParseError):
        load_dataset(DatasetManifest(((trunc, FaultClass.HEALTHY),)))


def test_manifest_roundtrip_preserves_order(tmp_path):
    labels = [FaultClass.FAULTY, FaultClass.HEALTHY, FaultClass.DEVELOPING_FAULT]
    entries = []
    for i, lab in enumerate(labels):
        write_signal_f32(tmp_path / f"s{i}.f32", np.arange(5) + i)
        entries.append((f"s{i}.f32", lab))
    write_manifest(tmp_path / "manifest.csv", entries)
    manifest = read_manifest(tmp_path / "manifest.csv")
    signals = load_dataset(manifest)
    assert [s.label for s in signals] == labels
    assert [s.samples[0] for s in signals] == [0.0, 1.0, 2.0]


def test_manifest_rejects_duplicates_and_bad_labels(tmp_path):
    with pytest.raises(InvalidParamError):
        DatasetManifest((("a.csv", 0), ("a.csv", 1)))
    (tmp_path / "m.csv").write_text("path,label\na.csv,rusty\n")
    with pytest.raises(ParseError):
        read_manifest(tmp_path / "m.csv")
    (tmp_path / "h.csv").write_text("file,class\n")
    with pytest.raises(ParseError):
        read_manifest(tmp_path / "h.csv")


# --------------------------------------------------------------------------
# synthetic generator

def test_generator_counts_and_healthy_is_impulse_free():
    data = generate_synthetic_dataset(1, 4000, seed=3, noise_sigma=0.0, impulse_amp=(0, 0.5, 2.0))
    assert len(data) == 3
    by_label = {s.label: s.samples for s in data}
    healthy = by_label[FaultClass.HEALTHY]
    # noise-free healthy signal is a pure shaft sinusoid
    assert np.max(np.abs(healthy)) <= 0.25 + 1e-12
    assert np.max(np.abs(by_label[FaultClass.FAULTY])) > 1.0


def test_generator_is_deterministic():
    a = generate_synthetic_dataset(2, 2000, seed=11)
    b = generate_synthetic_dataset(2, 2000, seed=11)
    c = generate_synthetic_dataset(2, 2000, seed=12)
    for x, y in zip(a, b):
        assert x.samples.tobytes() == y.samples.tobytes()
    assert any(x.samples.tobytes() != z.samples.tobytes() for x, z in zip(a, c))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_per_class=0),
        dict(signal_len=999),
        dict(impulse_amp=(0, -1, 2)),
        dict(impulse_amp=(0.1, 1, 2)),
        dict(noise_sigma=-0.1),
    ],
)
def test_generator_validation(kwargs):
    args = dict(n_per_class=1, signal_len=1000, seed=0) | kwargs
    with pytest.raises(InvalidParamError):
        generate_synthetic_dataset(**args)


def test_acceptance_dataset_is_linearly_separable_on_features():
    data = generate_synthetic_dataset(200, 10_000, seed=7, noise_sigma=0.1, impulse_amp=(0, 0.5, 2.0))
    train, test = split_train_test(data, SplitSpec(0.8, seed=1))
    Xtr, ytr = features_to_arrays(build_feature_dataset(train))
    Xte, yte = features_to_arrays(build_feature_dataset(test))
    assert softmax_regression_accuracy(Xtr, ytr, Xte, yte) > 0.90


# --------------------------------------------------------------------------
# splitting

def _items(counts):
    out = []
    for label, n in zip(FaultClass, counts):
        out += [(label, i) for i in range(n)]
    return out


def test_stratified_80_20_counts():
    items = _items((100, 100, 100))
    labels = [lab for lab, _ in items]
    train, test = split_train_test(items, SplitSpec(0.8, seed=5), labels=labels)
    assert len(train) == 240 and len(test) == 60
    for c in FaultClass:
        assert sum(1 for lab, _ in test if lab == c) == 20


def test_unstratified_rounding_base_case():
    items = list(range(5))
    train, test = split_train_test(items, SplitSpec(0.8, seed=0, stratified=False), labels=[0] * 5)
    assert (len(train), len(test)) == (4, 1)


def test_split_determinism():
    labels = np.repeat(np.arange(3), 50)
    a = split_indices(labels, SplitSpec(seed=9))
    b = split_indices(labels, SplitSpec(seed=9))
    c = split_indices(labels, SplitSpec(seed=10))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_stratified_split_requires_every_class():
    with pytest.raises(EmptyClassError):
        split_indices([0, 0, 1, 1], SplitSpec())
    with pytest.raises(InvalidParamError):
        SplitSpec(train_fraction=1.0)


@settings(max_examples=60, deadline=None)
@given(
    counts=st.tuples(*[st.integers(1, 40)] * 3),
    frac=st.floats(0.05, 0.95),
    seed=st.integers(0, 2**64 - 1),
    stratified=st.booleans(),
)
def test_split_is_a_partition(counts, frac, seed, stratified):
    labels = np.repeat(np.arange(3), counts)
    train, test = split_indices(labels, SplitSpec(frac, seed, stratified))
    assert train.size + test.size == labels.size
    assert np.intersect1d(train, test).size == 0
    assert set(train) | set(test) == set(range(labels.size))
    if stratified:
        for c in range(3):
            expected_train = frac * counts[c]
            assert abs(np.sum(labels[train] == c) - expected_train) <= 1

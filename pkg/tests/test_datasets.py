from dataclasses import replace

import numpy as np
import pytest

from dfmx import datasets as DS
from dfmx import spectral
from dfmx.datasets import LabeledSet, SyntheticSpec

SMALL = SyntheticSpec(samples_per_class=30, val_per_class=10, test_per_class=20, seed=3)


@pytest.fixture(scope="module")
def small_bundle():
    return DS.generate_synthetic(SMALL, check_margins=False)


@pytest.fixture(scope="module")
def default_bundle():
    return DS.generate_synthetic(SyntheticSpec())


# --- CIFAR-10 binary records ------------------------------------------------------------


def cifar_record(label, fill):
    return bytes([label]) + bytes(fill(i) for i in range(3 * 1024))


def test_cifar_record_layout(tmp_path):
    # pixel byte i holds i % 256; channel-planar order: byte c*1024 + y*32 + x
    raw = cifar_record(7, lambda i: i % 256) + cifar_record(0, lambda i: 255)
    path = tmp_path / "b.bin"
    path.write_bytes(raw)
    data = DS.read_cifar10_batch(path)
    assert data.labels.tolist() == [7, 0]
    assert data.images.shape == (2, 3, 32, 32)
    img = data.images[0]
    assert img[0, 0, 0] == 0.0
    assert img[0, 0, 5] == 5 / 255
    assert img[0, 1, 0] == 32 / 255
    assert img[1, 0, 0] == (1024 % 256) / 255
    assert img[2, 31, 31] == ((3 * 1024 - 1) % 256) / 255
    assert np.all(data.images[1] == 1.0)


def test_cifar_truncated(tmp_path):
    path = tmp_path / "b.bin"
    path.write_bytes(cifar_record(1, lambda i: 0) + b"\x01\x02")
    with pytest.raises(DS.DatasetFormatError, match="offset 3073"):
        DS.read_cifar10_batch(path)


def test_cifar_bad_label(tmp_path):
    path = tmp_path / "b.bin"
    path.write_bytes(cifar_record(1, lambda i: 0) + cifar_record(10, lambda i: 0))
    with pytest.raises(DS.DatasetFormatError, match="offset 3073"):
        DS.read_cifar10_batch(path)


def test_load_cifar10_directory(tmp_path):
    gen = np.random.default_rng(0)
    for name in DS.CIFAR_TRAIN_FILES + (DS.CIFAR_TEST_FILE,):
        recs = b"".join(cifar_record(int(gen.integers(10)), lambda i: int(gen.integers(256)))
                        for _ in range(4))
        (tmp_path / name).write_bytes(recs)
    bundle = DS.load_cifar10(tmp_path, val_fraction=0.1, seed=1)
    assert len(bundle.train) == 18 and len(bundle.val) == 2 and len(bundle.test) == 4
    assert bundle.num_classes == 10
    assert len(bundle.provenance["sha256"]) == 64
    again = DS.load_cifar10(tmp_path, val_fraction=0.1, seed=1)
    np.testing.assert_array_equal(bundle.val.images, again.val.images)


# --- set utilities -----------------------------------------------------------------


def numbered(n=50, k=5):
    images = np.arange(n, dtype=float)[:, None, None, None] * np.ones((1, 1, 2, 2)) / n
    return LabeledSet(images, np.arange(n) % k)


def test_split_sizes_disjoint_and_deterministic():
    data = numbered()
    a, b = DS.split(data, 0.1, seed=4)
    assert len(a) == 45 and len(b) == 5
    assert set(a.index) | set(b.index) == set(range(50))
    assert not set(a.index) & set(b.index)
    a2, b2 = DS.split(data, 0.1, seed=4)
    np.testing.assert_array_equal(b.index, b2.index)
    assert not np.array_equal(DS.split(data, 0.1, seed=5)[1].index, b.index)


def test_shuffle_is_permutation():
    data = numbered()
    s = DS.shuffle(data, 2)
    assert sorted(s.index) == list(range(50))
    np.testing.assert_array_equal(s.labels, data.labels[s.index])


def test_subset_by_class():
    data = numbered()
    sub = DS.subset_by_class(data, 3)
    assert np.all(sub.labels == 3) and len(sub) == 10
    with pytest.raises(ValueError):
        DS.subset_by_class(data, 9)


def test_labeled_set_length_check():
    with pytest.raises(ValueError):
        LabeledSet(np.zeros((3, 1, 2, 2)), np.zeros(2))


def test_item_access():
    data = numbered()
    item = data[7]
    assert item.label == 2 and item.index == 7
    assert len(list(data)) == 50


# --- synthetic generator ------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(shortcut_pairs=((3, 10), (3, 10), (-7, 8), (8, 7)))
    with pytest.raises(ValueError):
        SyntheticSpec(shortcut_pairs=((3, 10), (-3, -10), (-7, 8), (8, 7)))   # mirror
    with pytest.raises(ValueError):
        SyntheticSpec(shortcut_pairs=((0, 16), (10, -3), (-7, 8), (8, 7)))    # self-mirrored
    with pytest.raises(ValueError):
        SyntheticSpec(shortcut_amplitude=0)
    with pytest.raises(ValueError):
        SyntheticSpec(size=24)


def test_shortcut_coord():
    spec = SyntheticSpec()
    assert spec.shortcut_coord(0) == (16 + 3, 16 + 10)
    assert spec.shortcut_coord(1) == (16 + 10, 16 - 3)


def test_synthetic_shapes_balance_and_range(small_bundle):
    b = small_bundle
    assert b.train.images.shape == (120, 1, 32, 32)
    for part, per in ((b.train, 30), (b.val, 10), (b.test, 20)):
        assert DS.class_counts(part, 4).tolist() == [per] * 4
        assert part.images.min() >= 0 and part.images.max() <= 1
    DS.check_bundle(b)


def test_synthetic_deterministic(small_bundle):
    again = DS.generate_synthetic(SMALL, check_margins=False)
    for name in ("train", "val", "test"):
        np.testing.assert_array_equal(getattr(small_bundle, name).images, getattr(again, name).images)
    other = DS.generate_synthetic(replace(SMALL, seed=4), check_margins=False)
    assert not np.array_equal(other.train.images, small_bundle.train.images)


def test_splits_differ(small_bundle):
    assert not np.array_equal(small_bundle.train.images[:10], small_bundle.test.images[:10])


def test_planted_frequency_stands_out(small_bundle):
    # the own planted magnitude beats every other planted magnitude of the image
    spec = SMALL
    feats = DS.shortcut_features(spec, small_bundle.test.images)
    own = feats[np.arange(len(feats)), small_bundle.test.labels]
    masked = feats.copy()
    masked[np.arange(len(feats)), small_bundle.test.labels] = -np.inf
    assert np.mean(own > masked.max(axis=1)) >= 0.99


def test_remove_shortcuts_zeroes_planted_magnitudes(small_bundle):
    clean = DS.remove_shortcuts(SMALL, small_bundle.test.images[:5])
    assert np.max(DS.shortcut_features(SMALL, clean)) < 1e-9


def test_default_spec_meets_margins(default_bundle):
    short = default_bundle.provenance["shortcut_probe"]
    broad = default_bundle.provenance["broadband_probe"]
    assert short >= 0.95 and broad >= 0.85


def test_margin_error():
    weak = replace(SMALL, shortcut_amplitude=1e-4)
    with pytest.raises(DS.GenerationMarginError):
        DS.generate_synthetic(weak)


def test_band_components_avoid_planted_pairs():
    spec = SyntheticSpec()
    planted = {tuple(p) for p in spec.shortcut_pairs}
    for c in range(spec.classes):
        comps = {tuple(int(v) for v in f) for f in DS._band_components(spec, c)}
        assert not comps & planted


def test_real_valued_mask_on_data(small_bundle):
    m = spectral.symmetrize_mask(np.random.default_rng(0).random((32, 32)) < 0.2)
    out = spectral.filter_image(small_bundle.test.images[:3], m)
    assert out.min() >= 0 and out.max() <= 1

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dfmx import dfm as D
from dfmx import model as M
from dfmx import spectral
from dfmx.datasets import LabeledSet, subset_by_class

SIZE = 8
C = SIZE // 2
# planted gratings (row, col offsets from DC) for classes 0 and 1; class 2 is the
# bias-favoured fallback the model predicts once the evidence is gone
PLANTED = {0: (1, 2), 1: (2, -1)}


def grating(offset):
    yy, xx = np.mgrid[:SIZE, :SIZE]
    u, v = offset
    return np.cos(2 * np.pi * (u * yy + v * xx) / SIZE)


def planted_fixture(per_class=20, seed=0):
    """Three-class linear model reading two gratings, plus images carrying them."""
    W = np.zeros((SIZE * SIZE, 3))
    for c, off in PLANTED.items():
        W[:, c] = grating(off).ravel()
    model = M.linear_model(W, np.array([0.0, 0.0, 0.5]), (1, SIZE, SIZE), model_id="planted")
    gen = np.random.default_rng(seed)
    images, labels = [], []
    for c in range(3):
        for _ in range(per_class):
            img = 0.5 + gen.normal(0, 0.02, (SIZE, SIZE))
            if c in PLANTED:
                img = img + 0.3 * grating(PLANTED[c])
            images.append(img[None])
            labels.append(c)
    return model, LabeledSet(np.clip(np.stack(images), 0, 1), np.array(labels))


def planted_mask(c):
    m = np.zeros((SIZE, SIZE), bool)
    m[C + PLANTED[c][0], C + PLANTED[c][1]] = True
    return spectral.symmetrize_mask(m)


def check_budget(d):
    assert d.retained_accuracy >= (1 - d.budget) * d.standard_accuracy - 1e-12


# --- planted fixture ------------------------------------------------------------------


@pytest.mark.parametrize("c", [0, 1])
def test_planted_pair_is_the_whole_dfm(c):
    model, data = planted_fixture()
    d = D.compute_dfm(model, subset_by_class(data, c))
    np.testing.assert_array_equal(d.mask, planted_mask(c))
    assert d.frequency_count == 2
    assert d.standard_accuracy == d.retained_accuracy == 1.0
    assert d.source_model_id == "planted"
    check_budget(d)


def test_fallback_class_needs_nothing():
    model, data = planted_fixture()
    d = D.compute_dfm(model, subset_by_class(data, 2))
    assert d.frequency_count == 0
    assert d.retained_accuracy == d.standard_accuracy == 1.0


def test_two_class_fixture():
    # class 1 is the fallback; class 0 keeps exactly its grating
    W = np.zeros((SIZE * SIZE, 2))
    W[:, 0] = grating(PLANTED[0]).ravel()
    model = M.linear_model(W, np.array([0.0, 0.5]), (1, SIZE, SIZE))
    images = np.stack([(0.5 + 0.3 * grating(PLANTED[0]))[None]] * 5)
    d = D.compute_dfm(model, LabeledSet(images, np.zeros(5, int)))
    np.testing.assert_array_equal(d.mask, planted_mask(0))


def test_constant_classifier_gives_empty_mask():
    model = M.linear_model(np.zeros((SIZE * SIZE, 3)), np.array([1.0, 0, 0]), (1, SIZE, SIZE))
    imgs = np.random.default_rng(0).random((10, 1, SIZE, SIZE))
    d = D.compute_dfm(model, LabeledSet(imgs, np.zeros(10, int)))
    assert d.frequency_count == 0
    assert d.retained_accuracy == d.standard_accuracy == 1.0


def test_compute_all_dfms_and_stats():
    model, data = planted_fixture()
    dfms = D.compute_all_dfms(model, data)
    assert [d.class_id for d in dfms] == [0, 1, 2]
    stats = D.dfm_stats(dfms)
    assert stats["counts"] == {0: 2, 1: 2, 2: 0}
    assert stats["union_count"] == 4 and stats["intersection_count"] == 0
    assert stats["mean_count"] == pytest.approx(4 / 3)


# --- search mechanics ---------------------------------------------------------------


def random_problem(seed, n=30, size=4, k=3):
    gen = np.random.default_rng(seed)
    model = M.linear_model(gen.normal(size=(size * size, k)), gen.normal(0, 0.1, k), (1, size, size))
    images = gen.random((n, 1, size, size))
    pred = M.predict(model, images)
    c = int(np.bincount(pred, minlength=k).argmax())
    return model, LabeledSet(images, np.full(n, c))


def test_trace_respects_both_rules():
    model, data = random_problem(1)
    cfg = D.DfmSearchConfig(budget=0.3, per_step_threshold=0.05)
    d, trace = D.search_dfm(model, data, cfg)
    n = len(data)
    prev = None
    start = d.standard_accuracy
    for acc, removed in zip(trace.accuracy, trace.removed):
        assert start - acc <= cfg.budget * start + 1e-12
        if prev is not None and removed:
            assert prev - acc <= cfg.per_step_threshold + 1e-12
        prev = acc
    assert len(trace.pairs) == len(spectral.frequency_pairs((4, 4)))
    assert trace.accuracy[-1] == d.retained_accuracy
    # kept pairs are exactly the non-removed ones
    kept = np.zeros((4, 4), bool)
    for (p, m), removed in zip(trace.pairs, trace.removed):
        if not removed:
            kept[p] = kept[m] = True
    np.testing.assert_array_equal(d.mask, kept)
    assert n == 30


@pytest.mark.parametrize("order", D.VISIT_ORDERS)
def test_every_visit_order_respects_budget(order):
    model, data = random_problem(2)
    d = D.compute_dfm(model, data, D.DfmSearchConfig(visit_order=order, seed=4))
    check_budget(d)
    assert spectral.is_symmetric(d.mask)


def test_ascending_visit_order_by_energy():
    model, data = random_problem(3)
    _, trace = D.search_dfm(model, data)
    power = (np.abs(spectral.dft2(data.images)) ** 2).mean(axis=(0, 1))
    energies = [power[p] for p, _ in trace.pairs]
    assert energies == sorted(energies)


def test_deterministic():
    model, data = random_problem(5)
    cfg = D.DfmSearchConfig(visit_order="random", seed=9)
    assert D.compute_dfm(model, data, cfg) == D.compute_dfm(model, data, cfg)


def test_eval_subset_used():
    model, data = random_problem(6, n=40)
    d, trace = D.search_dfm(model, data, D.DfmSearchConfig(eval_subset_size=10))
    assert all(abs(a * 10 - round(a * 10)) < 1e-9 for a in trace.accuracy)


def test_errors():
    model, data = planted_fixture()
    with pytest.raises(D.DfmError):
        D.compute_dfm(model, data)                       # several classes
    with pytest.raises(D.DfmError):
        D.compute_dfm(model, data.subset(np.array([], int)))
    with pytest.raises(D.DegenerateClassError):
        # class-0 labels on images the model reads as the fallback class
        D.compute_dfm(model, LabeledSet(subset_by_class(data, 2).images, np.zeros(20, int)))
    with pytest.raises(D.DfmError):
        D.compute_all_dfms(model, subset_by_class(data, 0))
    with pytest.raises(D.DfmError):
        D.dfm_stats([])
    with pytest.raises(ValueError):
        D.DfmSearchConfig(budget=0.01, per_step_threshold=0.05)


def test_stats_all_ones_full_grid():
    d = D.DominantFrequencyMap(0, np.ones((32, 32), bool), 1.0, 1.0, 0.3)
    assert D.dfm_stats([d])["union_count"] == 1024 == d.frequency_count


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.3, 0.5]), st.sampled_from([0.02, 0.1]))
def test_property_budget_and_symmetry(seed, budget, thr):
    model, data = random_problem(seed, n=12)
    d = D.compute_dfm(model, data, D.DfmSearchConfig(budget=budget, per_step_threshold=thr))
    check_budget(d)
    assert spectral.is_symmetric(d.mask)
    assert 0 <= d.frequency_count <= 16

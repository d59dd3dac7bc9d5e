"""Dominant Frequency Maps: per-class frequency sets a trained classifier depends on.

The search starts from the full spectrum and greedily tries to drop one
conjugate frequency pair at a time from the images of a single class. A drop
is undone (the pair is *dominant*) when it costs more than
``per_step_threshold`` class accuracy, or when it would push the accuracy
below ``(1 - budget)`` of the unfiltered accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .datasets import LabeledSet, subset_by_class
from .model import ClassifierModel, predict
from .seeding import rng as derived_rng

VISIT_ORDERS = ("ascending_energy", "descending_energy", "raster", "random")


class DfmError(ValueError):
    pass


class DegenerateClassError(DfmError):
    """The model never predicts the class, so there is nothing to preserve."""


@dataclass
class DominantFrequencyMap:
    class_id: int
    mask: np.ndarray  # (H, W) bool, DC-centered
    retained_accuracy: float
    standard_accuracy: float
    budget: float
    source_model_id: str = ""

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def frequency_count(self) -> int:
        return int(self.mask.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DominantFrequencyMap):
            return NotImplemented
        return (self.class_id == other.class_id
                and np.array_equal(self.mask, other.mask)
                and self.retained_accuracy == other.retained_accuracy
                and self.standard_accuracy == other.standard_accuracy
                and self.budget == other.budget
                and self.source_model_id == other.source_model_id)


@dataclass(frozen=True)
class DfmSearchConfig:
    budget: float = 0.30
    per_step_threshold: float = 0.01
    visit_order: str = "ascending_energy"
    eval_subset_size: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.per_step_threshold <= self.budget < 1:
            raise ValueError("need 0 < per_step_threshold <= budget < 1")
        if self.visit_order not in VISIT_ORDERS:
            raise ValueError(f"visit_order must be one of {VISIT_ORDERS}")
        if self.eval_subset_size < 1:
            raise ValueError("eval_subset_size must be positive")


@dataclass
class SearchTrace:
    """Accuracy after every visited pair and whether its removal was kept."""

    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    removed: list[bool] = field(default_factory=list)


def _visit_order(pairs, spectra: np.ndarray, policy: str, seed: int, class_id: int):
    if policy == "raster":
        return list(pairs)
    if policy == "random":
        perm = derived_rng(seed, "dfm-order", class_id).permutation(len(pairs))
        return [pairs[i] for i in perm]
    power = (np.abs(spectra) ** 2).mean(axis=(0, 1))
    energy = np.array([power[p] for p, _ in pairs])
    order = np.argsort(energy if policy == "ascending_energy" else -energy, kind="stable")
    return [pairs[i] for i in order]


def _eval_subset(images: LabeledSet, config: DfmSearchConfig, class_id: int) -> LabeledSet:
    if len(images) <= config.eval_subset_size:
        return images
    pick = derived_rng(config.seed, "dfm-subset", class_id).choice(
        len(images), size=config.eval_subset_size, replace=False)
    return images.subset(np.sort(pick))


def search_dfm(model: ClassifierModel, class_images: LabeledSet,
               config: DfmSearchConfig = DfmSearchConfig()):
    """Run the greedy search; returns ``(DominantFrequencyMap, SearchTrace)``."""
    if len(class_images) == 0:
        raise DfmError("no evaluation images")
    labels = np.unique(class_images.labels)
    if len(labels) != 1:
        raise DfmError(f"images from several classes: {labels.tolist()}")
    class_id = int(labels[0])
    subset = _eval_subset(class_images, config, class_id)
    n = len(subset)
    spectra = spectral.dft2(subset.images)
    shape = spectra.shape[-2:]

    def correct(mask: np.ndarray) -> int:
        filtered = spectral.idft2(spectral.apply_mask(spectra, mask), clamp=True)
        return int(np.sum(predict(model, filtered) == class_id))

    start = int(np.sum(predict(model, subset.images) == class_id))
    if start == 0:
        raise DegenerateClassError(f"model never predicts class {class_id} on its images")
    mask = np.ones(shape, dtype=bool)
    current = correct(mask)
    trace = SearchTrace()
    step_limit = config.per_step_threshold * n
    floor_limit = config.budget * start
    tol = 1e-9

    for p, m in _visit_order(spectral.frequency_pairs(shape), spectra,
                             config.visit_order, config.seed, class_id):
        mask[p] = mask[m] = False
        trial = correct(mask)
        dominant = (current - trial > step_limit + tol) or (start - trial > floor_limit + tol)
        if dominant:
            mask[p] = mask[m] = True
        else:
            current = trial
        trace.pairs.append((p, m))
        trace.accuracy.append(current / n)
        trace.removed.append(not dominant)

    dfm = DominantFrequencyMap(
        class_id=class_id,
        mask=mask,
        retained_accuracy=current / n,
        standard_accuracy=start / n,
        budget=config.budget,
        source_model_id=model.model_id,
    )
    return dfm, trace


def compute_dfm(model: ClassifierModel, class_images: LabeledSet,
                config: DfmSearchConfig = DfmSearchConfig()) -> DominantFrequencyMap:
    return search_dfm(model, class_images, config)[0]


def compute_all_dfms(model: ClassifierModel, test_set: LabeledSet,
                     config: DfmSearchConfig = DfmSearchConfig()) -> list[DominantFrequencyMap]:
    present = set(np.unique(test_set.labels).tolist())
    missing = sorted(set(range(model.num_classes)) - present)
    if missing:
        raise DfmError(f"classes missing from the test set: {missing}")
    return [compute_dfm(model, subset_by_class(test_set, c), config)
            for c in range(model.num_classes)]


def dfm_stats(dfms) -> dict:
    """Per-class frequency counts plus union / intersection coverage."""
    dfms = list(dfms)
    if not dfms:
        raise DfmError("empty DFM set")
    masks = np.stack([d.mask for d in dfms])
    union = masks.any(axis=0)
    inter = masks.all(axis=0)
    counts = {d.class_id: d.frequency_count for d in dfms}
    return {
        "counts": counts,
        "mean_count": float(np.mean(list(counts.values()))),
        "union": union,
        "intersection": inter,
        "union_count": int(union.sum()),
        "intersection_count": int(inter.sum()),
    }

"""DFM-X: each epoch, filter a random X% of the training images with a foreign class's DFM."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import spectral
from .datasets import LabeledImage, LabeledSet
from .dfm import DominantFrequencyMap
from .seeding import derive_seed, rng as derived_rng

COMPOSITIONS = ("before", "after", "none")

# (image (C, H, W), rng) -> image
SecondaryHook = Callable[[np.ndarray, np.random.Generator], np.ndarray]


class NoForeignClassError(ValueError):
    pass


class SameClassPairingError(ValueError):
    pass


@dataclass
class DfmxConfig:
    """``composition`` places the secondary hook before or after the DFM filter."""

    x_percent: float
    dfms: Sequence[DominantFrequencyMap]
    seed: int = 0
    composition: str = "none"
    secondary: SecondaryHook | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.x_percent <= 100:
            raise ValueError("x_percent must lie in [0, 100]")
        if self.composition not in COMPOSITIONS:
            raise ValueError(f"composition must be one of {COMPOSITIONS}")
        if self.composition != "none" and self.secondary is None:
            raise ValueError("a secondary hook is required unless composition is 'none'")
        ids = [d.class_id for d in self.dfms]
        if len(set(ids)) != len(ids):
            raise ValueError("one DFM per class")

    def covers(self, labels: np.ndarray) -> bool:
        return set(np.unique(labels).tolist()) <= {d.class_id for d in self.dfms}


def selection_size(n: int, x_percent: float) -> int:
    # half-up rounding
    return int(math.floor(x_percent / 100.0 * n + 0.5))


def select_for_augmentation(n: int, x_percent: float, epoch_seed: int) -> np.ndarray:
    """Sorted indices of a uniform draw without replacement of ``round(x% * n)`` items."""
    if n <= 0:
        raise ValueError("dataset size must be positive")
    k = selection_size(n, x_percent)
    pick = np.random.default_rng(epoch_seed).choice(n, size=k, replace=False)
    return np.sort(pick)


def epoch_seed(seed: int, epoch: int) -> int:
    return derive_seed(seed, "dfmx-select", epoch)


def pick_foreign_dfm(class_i: int, dfms: Sequence[DominantFrequencyMap],
                     rng: np.random.Generator) -> DominantFrequencyMap:
    foreign = [d for d in dfms if d.class_id != class_i]
    if not foreign:
        raise NoForeignClassError(f"no DFM of a class other than {class_i}")
    return foreign[int(rng.integers(len(foreign)))]


def dfmx_transform(image: LabeledImage, dfm: DominantFrequencyMap) -> np.ndarray:
    if dfm.class_id == image.label:
        raise SameClassPairingError(f"image of class {image.label} paired with its own DFM")
    return spectral.filter_image(image.image, dfm.mask)


def spatial_augment(image: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Random horizontal flip and random crop after reflect padding."""
    out = image[..., ::-1] if rng.random() < 0.5 else image
    h, w = out.shape[-2:]
    padded = np.pad(out, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    dy, dx = rng.integers(0, 2 * pad + 1, size=2)
    return np.ascontiguousarray(padded[:, dy:dy + h, dx:dx + w])


class EpochView:
    """Lazy, deterministic per-epoch view of a training set under DFM-X."""

    def __init__(self, data: LabeledSet, config: DfmxConfig, epoch: int):
        if len(data) == 0:
            raise ValueError("empty training set")
        if not config.covers(data.labels):
            raise ValueError("the DFM set does not cover every training class")
        self.data = data
        self.config = config
        self.epoch = epoch
        self.selected = select_for_augmentation(len(data), config.x_percent,
                                                epoch_seed(config.seed, epoch))
        pick_rng = derived_rng(config.seed, "dfmx-pick", epoch)
        self.assigned: dict[int, DominantFrequencyMap] = {
            int(i): pick_foreign_dfm(int(data.labels[i]), config.dfms, pick_rng)
            for i in self.selected
        }

    def __len__(self) -> int:
        return len(self.data)

    def _secondary(self, image: np.ndarray, i: int) -> np.ndarray:
        gen = derived_rng(self.config.seed, "secondary", self.epoch, i)
        return self.config.secondary(image, gen)

    def __getitem__(self, i: int) -> LabeledImage:
        item = self.data[i]
        image = item.image
        comp = self.config.composition
        if comp == "before":
            image = self._secondary(image, i)
        if i in self.assigned:
            image = dfmx_transform(LabeledImage(image, item.label, item.index), self.assigned[i])
        if comp == "after":
            image = self._secondary(image, i)
        return LabeledImage(image, item.label, item.index)

    @property
    def labels(self) -> np.ndarray:
        return self.data.labels

    def materialize(self) -> np.ndarray:
        """All images of the view as one array (batched filtering per DFM)."""
        images = self.data.images.copy()
        comp = self.config.composition
        if comp == "before":
            for i in range(len(images)):
                images[i] = self._secondary(images[i], i)
        groups: dict[int, list[int]] = {}
        for i, d in self.assigned.items():
            groups.setdefault(d.class_id, []).append(i)
        by_class = {d.class_id: d for d in self.config.dfms}
        for cid, idx in groups.items():
            idx = np.array(idx)
            images[idx] = spectral.filter_image(images[idx], by_class[cid].mask)
        if comp == "after":
            for i in range(len(images)):
                images[i] = self._secondary(images[i], i)
        return images


def make_epoch_view(train_set: LabeledSet, config: DfmxConfig, epoch: int) -> EpochView:
    return EpochView(train_set, config, epoch)


class DfmxAugmenter:
    """Training hook applying DFM-X with a fresh selection every epoch."""

    def __init__(self, config: DfmxConfig):
        self.config = config

    def __call__(self, images: np.ndarray, labels: np.ndarray, epoch: int) -> np.ndarray:
        return make_epoch_view(LabeledSet(images, labels), self.config, epoch).materialize()


class SpatialAugmenter:
    """Training hook applying :func:`spatial_augment` to every image each epoch."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, images: np.ndarray, labels: np.ndarray, epoch: int) -> np.ndarray:
        out = np.empty_like(images)
        for i in range(len(images)):
            out[i] = spatial_augment(images[i], derived_rng(self.seed, "secondary", epoch, i))
        return out

"""Labeled image sets, the planted-shortcut synthetic generator and the CIFAR-10 loader."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import spectral
from .seeding import derive_seed, rng as derived_rng


class DatasetFormatError(ValueError):
    pass


class GenerationMarginError(RuntimeError):
    """The probe classifiers could not reach the required accuracy margins."""


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray  # (C, H, W)
    label: int
    index: int


@dataclass
class LabeledSet:
    """Images ``(N, C, H, W)`` in [0, 1] with integer labels and split positions."""

    images: np.ndarray
    labels: np.ndarray
    index: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.index is None:
            self.index = np.arange(len(self.labels), dtype=np.int64)
        self.index = np.asarray(self.index, dtype=np.int64)
        if not (len(self.images) == len(self.labels) == len(self.index)):
            raise ValueError("images, labels and index must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]), int(self.index[i]))

    def __iter__(self) -> Iterator[LabeledImage]:
        return (self[i] for i in range(len(self)))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, idx) -> "LabeledSet":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledSet(self.images[idx], self.labels[idx], self.index[idx])

    def with_images(self, images: np.ndarray) -> "LabeledSet":
        return LabeledSet(images, self.labels, self.index)


def subset_by_class(data: LabeledSet, label: int) -> LabeledSet:
    idx = np.flatnonzero(data.labels == label)
    if len(idx) == 0:
        raise ValueError(f"class {label} has no images")
    return data.subset(idx)


def shuffle(data: LabeledSet, seed: int) -> LabeledSet:
    return data.subset(derived_rng(seed, "shuffle-set").permutation(len(data)))


def split(data: LabeledSet, fraction: float, seed: int) -> tuple[LabeledSet, LabeledSet]:
    """Seeded split into (first, second) with ``round(fraction * n)`` items in the second part."""
    perm = derived_rng(seed, "split").permutation(len(data))
    n_second = int(math.floor(fraction * len(data) + 0.5))
    first, second = np.sort(perm[n_second:]), np.sort(perm[:n_second])
    return data.subset(first), data.subset(second)


@dataclass
class DatasetBundle:
    train: LabeledSet
    val: LabeledSet
    test: LabeledSet
    num_classes: int
    provenance: dict = field(default_factory=dict)


# --- synthetic planted-shortcut data -------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-shortcut generator.

    Frequencies are integer offsets ``(fy, fx)`` from DC in cycles per image.
    ``shortcut_amplitude`` is the pixel amplitude of each planted cosine, i.e.
    a spectral magnitude of ``amplitude * H * W / 2`` at both members of the
    pair under the unscaled forward transform.

    The broadband class evidence is a sum of cosines over the band
    ``band_min <= |f| <= band_max`` whose orientation lies within
    ``band_halfwidth`` radians of the class orientation. Each class has a fixed
    random phase per component (its template); samples are the template
    translated by up to ``max_shift`` pixels with per-component phase jitter of
    ``phase_jitter`` radians and amplitude jitter.

    A class-independent clutter texture (random phases, amplitude falling off
    as ``|f| ** -clutter_decay`` up to ``clutter_max``) covers the low
    frequencies of every image, so that all classes share a common
    low-frequency core the way natural images do.
    """

    classes: int = 4
    size: int = 32
    channels: int = 1
    samples_per_class: int = 300
    val_per_class: int = 50
    test_per_class: int = 100
    shortcut_pairs: tuple[tuple[int, int], ...] = ((3, 10), (10, -3), (-7, 8), (8, 7))
    shortcut_amplitude: float = 0.08
    shortcut_jitter: float = 0.1
    band_min: float = 1.0
    band_max: float = 3.0
    band_halfwidth: float = math.pi / 2
    band_amplitude: float = 0.15
    orientations: tuple[float, ...] | None = None
    phase_jitter: float = 0.6
    amplitude_jitter: float = 0.3
    max_shift: int = 2
    clutter_amplitude: float = 0.15
    clutter_max: float = 6.0
    clutter_decay: float = 1.0
    background: float = 0.5
    noise_std: float = 0.02
    seed: int = 0
    shortcut_margin: float = 0.95
    broadband_margin: float = 0.85

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ValueError("at least two classes are required")
        if len(self.shortcut_pairs) != self.classes:
            raise ValueError("one shortcut pair per class is required")
        if not spectral.is_power_of_two(self.size):
            raise ValueError("size must be a power of two")
        if self.shortcut_amplitude <= 0 or self.band_amplitude <= 0:
            raise ValueError("amplitudes must be positive")
        coords = [self.shortcut_coord(c) for c in range(self.classes)]
        shape = (self.size, self.size)
        seen: set[tuple[int, int]] = set()
        for cd in coords:
            mr = spectral.mirror(cd, shape)
            if mr == cd:
                raise ValueError(f"shortcut frequency {cd} is its own mirror")
            if cd in seen or mr in seen:
                raise ValueError("shortcut pairs must be pairwise distinct")
            seen.update({cd, mr})

    def shortcut_coord(self, c: int) -> tuple[int, int]:
        """Grid index (DC-centered) of the planted frequency of class ``c``."""
        fy, fx = self.shortcut_pairs[c]
        h = self.size // 2
        return (h + fy) % self.size, (h + fx) % self.size

    def class_orientation(self, c: int) -> float:
        if self.orientations is not None:
            return self.orientations[c]
        return math.pi * c / self.classes

    def to_dict(self) -> dict:
        return asdict(self)


def _band_components(spec: SyntheticSpec, c: int) -> np.ndarray:
    """Half-plane frequencies ``(fy, fx)`` of the class band (one per conjugate pair)."""
    theta = spec.class_orientation(c)
    comps = []
    r = int(math.ceil(spec.band_max))
    planted = {tuple(p) for p in spec.shortcut_pairs} | {(-p[0], -p[1]) for p in spec.shortcut_pairs}
    for fy in range(-r, r + 1):
        for fx in range(-r, r + 1):
            if (fy, fx) <= (0, 0) or (fy, fx) in planted:
                continue
            rad = math.hypot(fy, fx)
            if not spec.band_min <= rad <= spec.band_max:
                continue
            ang = math.atan2(fy, fx)
            diff = (ang - theta + math.pi / 2) % math.pi - math.pi / 2
            if abs(diff) <= spec.band_halfwidth:
                comps.append((fy, fx))
    if not comps:
        raise ValueError(f"class {c} band contains no frequencies")
    return np.array(comps, dtype=np.float64)


def _render(spec: SyntheticSpec, label: int, gen: np.random.Generator, templates) -> np.ndarray:
    n = spec.size
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    comps, phases, weights = templates[label]
    shift = gen.integers(-spec.max_shift, spec.max_shift + 1, size=2)
    img = np.empty((spec.channels, n, n))
    for ch in range(spec.channels):
        jitter = gen.normal(0.0, spec.phase_jitter, size=len(comps))
        amps = weights * (1.0 + spec.amplitude_jitter * gen.uniform(-1.0, 1.0, size=len(comps)))
        arg = (2 * math.pi / n) * (comps[:, 0, None, None] * (yy - shift[0])
                                   + comps[:, 1, None, None] * (xx - shift[1]))
        band = np.tensordot(amps, np.cos(arg + (phases + jitter)[:, None, None]), axes=1)
        fy, fx = spec.shortcut_pairs[label]
        a = spec.shortcut_amplitude * (1.0 + spec.shortcut_jitter * gen.uniform(-1.0, 1.0))
        planted = a * np.cos(2 * math.pi * (fy * yy + fx * xx) / n + gen.uniform(0, 2 * math.pi))
        noise = gen.normal(0.0, spec.noise_std, size=(n, n))
        img[ch] = spec.background + band + planted + noise + _clutter(spec, gen, yy, xx)
    return np.clip(img, 0.0, 1.0)


def _clutter_components(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    r = int(math.ceil(spec.clutter_max))
    comps = [(fy, fx) for fy in range(-r, r + 1) for fx in range(-r, r + 1)
             if (fy, fx) > (0, 0) and 0 < math.hypot(fy, fx) <= spec.clutter_max]
    comps = np.array(comps, dtype=np.float64)
    w = np.hypot(comps[:, 0], comps[:, 1]) ** -spec.clutter_decay
    return comps, spec.clutter_amplitude * w / np.sqrt((w ** 2).sum())


def _clutter(spec: SyntheticSpec, gen: np.random.Generator, yy, xx) -> np.ndarray:
    if spec.clutter_amplitude == 0:
        return 0.0
    comps, weights = _clutter_components(spec)
    amps = weights * gen.rayleigh(1.0, size=len(comps))
    arg = (2 * math.pi / spec.size) * (comps[:, 0, None, None] * yy + comps[:, 1, None, None] * xx)
    return np.tensordot(amps, np.cos(arg + gen.uniform(0, 2 * math.pi, size=len(comps))[:, None, None]), axes=1)


def _templates(spec: SyntheticSpec):
    out = []
    for c in range(spec.classes):
        comps = _band_components(spec, c)
        gen = derived_rng(spec.seed, "template", c)
        phases = gen.uniform(0.0, 2 * math.pi, size=len(comps))
        weights = np.full(len(comps), spec.band_amplitude / math.sqrt(len(comps)))
        out.append((comps, phases, weights))
    return out


def _render_split(spec: SyntheticSpec, split_name: str, per_class: int, templates) -> LabeledSet:
    labels = np.repeat(np.arange(spec.classes), per_class)
    images = np.empty((len(labels), spec.channels, spec.size, spec.size))
    for i, lab in enumerate(labels):
        gen = derived_rng(spec.seed, "sample", split_name, i)
        images[i] = _render(spec, int(lab), gen, templates)
    order = derived_rng(spec.seed, "order", split_name).permutation(len(labels))
    return LabeledSet(images[order], labels[order])


def _ridge_probe(train_x, train_y, test_x, test_y, classes, alpha=1e-2) -> float:
    mu, sd = train_x.mean(axis=0), train_x.std(axis=0) + 1e-12
    a = np.hstack([(train_x - mu) / sd, np.ones((len(train_x), 1))])
    b = np.hstack([(test_x - mu) / sd, np.ones((len(test_x), 1))])
    t = np.eye(classes)[train_y]
    w = np.linalg.solve(a.T @ a + alpha * len(a) * np.eye(a.shape[1]), a.T @ t)
    return float(np.mean((b @ w).argmax(axis=1) == test_y))


def shortcut_features(spec: SyntheticSpec, images: np.ndarray) -> np.ndarray:
    """Spectral magnitude at every planted coordinate (averaged over channels)."""
    spec_ = np.abs(spectral.dft2(images)).mean(axis=1)
    return np.stack([spec_[:, u, v] for u, v in map(spec.shortcut_coord, range(spec.classes))], axis=1)


def remove_shortcuts(spec: SyntheticSpec, images: np.ndarray) -> np.ndarray:
    """Images with every planted pair removed from their spectra (no clamping)."""
    s = spectral.dft2(images)
    for c in range(spec.classes):
        s = spectral.remove_single_frequency(s, spec.shortcut_coord(c))
    return spectral.idft2(s)


def broadband_features(spec: SyntheticSpec, images: np.ndarray) -> np.ndarray:
    """Low-frequency spectrum magnitudes and 4x4 average-pooled pixels of shortcut-free images."""
    clean = remove_shortcuts(spec, images)
    mag = np.abs(spectral.dft2(clean)).mean(axis=1)
    radius = spectral.radial_frequency(mag.shape[1:])
    band = mag[:, (radius <= spec.band_max + 1) & (radius > 0)]
    n = len(images)
    k = max(spec.size // 8, 1)
    pooled = clean.mean(axis=1).reshape(n, spec.size // k, k, spec.size // k, k).mean(axis=(2, 4))
    return np.hstack([np.log1p(band), pooled.reshape(n, -1)])


def probe_accuracies(spec: SyntheticSpec, bundle: DatasetBundle) -> tuple[float, float]:
    tr, te = bundle.train, bundle.test
    short = _ridge_probe(shortcut_features(spec, tr.images), tr.labels,
                         shortcut_features(spec, te.images), te.labels, spec.classes)
    broad = _ridge_probe(broadband_features(spec, tr.images), tr.labels,
                         broadband_features(spec, te.images), te.labels, spec.classes)
    return short, broad


def generate_synthetic(spec: SyntheticSpec, check_margins: bool = True) -> DatasetBundle:
    """Render train/val/test splits and verify the probe margins.

    Raises :class:`GenerationMarginError` if a linear probe on the planted
    magnitudes falls below ``spec.shortcut_margin`` or a linear probe on the
    shortcut-free images falls below ``spec.broadband_margin``.
    """
    templates = _templates(spec)
    bundle = DatasetBundle(
        train=_render_split(spec, "train", spec.samples_per_class, templates),
        val=_render_split(spec, "val", spec.val_per_class, templates),
        test=_render_split(spec, "test", spec.test_per_class, templates),
        num_classes=spec.classes,
        provenance={"source": "synthetic", "spec": spec.to_dict()},
    )
    if check_margins:
        short, broad = probe_accuracies(spec, bundle)
        bundle.provenance.update(shortcut_probe=short, broadband_probe=broad)
        if short < spec.shortcut_margin or broad < spec.broadband_margin:
            raise GenerationMarginError(
                f"probe accuracies shortcut={short:.3f} (need {spec.shortcut_margin}), "
                f"broadband={broad:.3f} (need {spec.broadband_margin}); adjust amplitudes"
            )
    return bundle


# --- CIFAR-10 binary batches -------------------------------------------------------------

CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


def read_cifar10_batch(path: str | Path) -> LabeledSet:
    """Parse one binary batch: 3073-byte records of label + channel-planar 32x32 RGB."""
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        offset = len(raw) - len(raw) % CIFAR_RECORD
        raise DatasetFormatError(f"{path}: truncated record at byte offset {offset}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if len(bad):
        raise DatasetFormatError(
            f"{path}: label byte {labels[bad[0]]} > 9 at byte offset {int(bad[0]) * CIFAR_RECORD}"
        )
    images = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return LabeledSet(images, labels)


def load_cifar10(directory: str | Path, val_fraction: float = 0.1, seed: int = 0) -> DatasetBundle:
    directory = Path(directory)
    parts = [read_cifar10_batch(directory / name) for name in CIFAR_TRAIN_FILES]
    full = LabeledSet(np.concatenate([p.images for p in parts]),
                      np.concatenate([p.labels for p in parts]))
    train, val = split(full, val_fraction, seed)
    test = read_cifar10_batch(directory / CIFAR_TEST_FILE)
    digest = hashlib.sha256()
    for name in CIFAR_TRAIN_FILES + (CIFAR_TEST_FILE,):
        digest.update((directory / name).read_bytes())
    return DatasetBundle(train, val, test, 10,
                         provenance={"source": "cifar10", "sha256": digest.hexdigest()})


def class_counts(data: LabeledSet, num_classes: int) -> np.ndarray:
    return np.bincount(data.labels, minlength=num_classes)


def check_bundle(bundle: DatasetBundle) -> None:
    for name in ("train", "val", "test"):
        part = getattr(bundle, name)
        if np.any(class_counts(part, bundle.num_classes) == 0):
            raise ValueError(f"{name} split is missing a class")


def stack_sets(sets: Sequence[LabeledSet]) -> LabeledSet:
    return LabeledSet(np.concatenate([s.images for s in sets]),
                      np.concatenate([s.labels for s in sets]),
                      np.concatenate([s.index for s in sets]))


def data_seed(global_seed: int) -> int:
    return derive_seed(global_seed, "data")

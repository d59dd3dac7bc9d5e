"""Desk-scale common-corruption suite and the mCE / rCE / SA / RA metrics.

Severity tables are fixed constants. Each parameter listed in
``SEVERITY_TABLE`` is a *strength*: it strictly increases with the level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .model import ClassifierModel, evaluate
from .seeding import rng as derived_rng

SEVERITIES = (1, 2, 3, 4, 5)


class CorruptionKind(str, enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    SHOT_NOISE = "shot_noise"
    IMPULSE_NOISE = "impulse_noise"
    SPECKLE_NOISE = "speckle_noise"
    GAUSSIAN_BLUR = "gaussian_blur"
    DEFOCUS_BLUR = "defocus_blur"
    BRIGHTNESS = "brightness"
    CONTRAST = "contrast"
    PIXELATE = "pixelate"


GROUPS = {
    CorruptionKind.GAUSSIAN_NOISE: "noise",
    CorruptionKind.SHOT_NOISE: "noise",
    CorruptionKind.IMPULSE_NOISE: "noise",
    CorruptionKind.SPECKLE_NOISE: "noise",
    CorruptionKind.GAUSSIAN_BLUR: "blur",
    CorruptionKind.DEFOCUS_BLUR: "blur",
    CorruptionKind.BRIGHTNESS: "weather",
    CorruptionKind.CONTRAST: "digital",
    CorruptionKind.PIXELATE: "digital",
}

GROUP_ORDER = ("noise", "blur", "weather", "digital")

# strength per level 1..5
SEVERITY_TABLE: dict[CorruptionKind, tuple[float, ...]] = {
    CorruptionKind.GAUSSIAN_NOISE: (0.04, 0.06, 0.08, 0.09, 0.10),  # pixel std
    CorruptionKind.SHOT_NOISE: (1 / 500, 1 / 250, 1 / 100, 1 / 75, 1 / 50),  # 1 / photon count
    CorruptionKind.IMPULSE_NOISE: (0.01, 0.02, 0.03, 0.05, 0.07),  # salt-and-pepper fraction
    CorruptionKind.SPECKLE_NOISE: (0.06, 0.10, 0.12, 0.16, 0.20),  # multiplicative std
    CorruptionKind.GAUSSIAN_BLUR: (0.4, 0.6, 0.7, 0.8, 1.0),  # kernel sigma (px)
    CorruptionKind.DEFOCUS_BLUR: (0.75, 1.0, 1.25, 1.5, 2.0),  # disk radius (px)
    CorruptionKind.BRIGHTNESS: (0.05, 0.10, 0.15, 0.20, 0.30),  # additive offset
    CorruptionKind.CONTRAST: (0.25, 0.50, 0.60, 0.70, 0.85),  # contrast reduction
    CorruptionKind.PIXELATE: (1.05, 1.10, 1.20, 1.35, 1.55),  # block size (px)
}

NOISE_KINDS = tuple(k for k, g in GROUPS.items() if g == "noise")
ALL_KINDS = tuple(CorruptionKind)


class DegenerateBaselineError(ValueError):
    pass


def severity_parameter(kind: CorruptionKind | str, severity: int) -> float:
    kind = CorruptionKind(kind)
    if severity not in SEVERITIES:
        raise ValueError(f"severity must be one of {SEVERITIES}")
    return SEVERITY_TABLE[kind][severity - 1]


def _disk(radius: float) -> np.ndarray:
    r = int(np.ceil(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    k = (yy ** 2 + xx ** 2 <= radius ** 2).astype(np.float64)
    return k / k.sum()


def _box_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Area-averaging resampling matrix (n_out, n_in)."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(np.floor(lo)), int(np.ceil(hi))):
            m[i, j] = min(hi, j + 1) - max(lo, j)
        m[i] /= hi - lo
    return m


def pixelate(image: np.ndarray, block: float) -> np.ndarray:
    """Box-downsample to ``round(side / block)`` then nearest-neighbour upsample."""
    h, w = image.shape[-2:]
    hs, ws = max(1, int(round(h / block))), max(1, int(round(w / block)))
    if (hs, ws) == (h, w):
        return image.copy()
    small = _box_matrix(h, hs) @ image @ _box_matrix(w, ws).T
    rows = (np.arange(h) * hs) // h
    cols = (np.arange(w) * ws) // w
    return small[..., rows, :][..., :, cols]


def corrupt(image: np.ndarray, kind: CorruptionKind | str, severity: int,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Corrupted copy of one ``(C, H, W)`` image, clamped to [0, 1]."""
    kind = CorruptionKind(kind)
    p = severity_parameter(kind, severity)
    x = np.asarray(image, dtype=np.float64)
    gen = rng if rng is not None else np.random.default_rng(0)
    if kind is CorruptionKind.GAUSSIAN_NOISE:
        out = x + gen.normal(0.0, p, size=x.shape)
    elif kind is CorruptionKind.SHOT_NOISE:
        out = gen.poisson(np.clip(x, 0, 1) / p) * p
    elif kind is CorruptionKind.IMPULSE_NOISE:
        out = x.copy()
        u = gen.random(x.shape)
        out[u < p / 2] = 0.0
        out[(u >= p / 2) & (u < p)] = 1.0
    elif kind is CorruptionKind.SPECKLE_NOISE:
        out = x + x * gen.normal(0.0, p, size=x.shape)
    elif kind is CorruptionKind.GAUSSIAN_BLUR:
        out = ndimage.gaussian_filter(x, sigma=(0, p, p), mode="reflect")
    elif kind is CorruptionKind.DEFOCUS_BLUR:
        out = ndimage.convolve(x, _disk(p)[None], mode="reflect")
    elif kind is CorruptionKind.BRIGHTNESS:
        out = x + p
    elif kind is CorruptionKind.CONTRAST:
        mean = x.mean(axis=(-2, -1), keepdims=True)
        out = (x - mean) * (1.0 - p) + mean
    else:
        out = pixelate(x, p)
    return np.clip(out, 0.0, 1.0)


def corrupt_set(images: np.ndarray, kind: CorruptionKind | str, severity: int, seed: int) -> np.ndarray:
    """Corrupt a batch; image ``m`` draws from the stream ``(seed, kind, severity, m)``."""
    kind = CorruptionKind(kind)
    out = np.empty_like(np.asarray(images, dtype=np.float64))
    for m, img in enumerate(images):
        out[m] = corrupt(img, kind, severity, derived_rng(seed, "corrupt", kind.value, severity, m))
    return out


@dataclass
class CeTable:
    """Classification error per (kind, severity)."""

    kinds: tuple[CorruptionKind, ...]
    errors: np.ndarray  # (len(kinds), 5)
    severities: tuple[int, ...] = SEVERITIES

    def __post_init__(self) -> None:
        self.kinds = tuple(CorruptionKind(k) for k in self.kinds)
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if self.errors.shape != (len(self.kinds), len(self.severities)):
            raise ValueError("errors must be shaped (kinds, severities)")

    def scaled(self, alpha: float) -> "CeTable":
        return CeTable(self.kinds, self.errors * alpha, self.severities)

    def restrict(self, kinds: Sequence[CorruptionKind | str]) -> "CeTable":
        kinds = tuple(CorruptionKind(k) for k in kinds)
        rows = [self.kinds.index(k) for k in kinds]
        return CeTable(kinds, self.errors[rows], self.severities)


def corruption_errors(model: ClassifierModel, images: np.ndarray, labels: np.ndarray,
                      kinds: Sequence[CorruptionKind | str] = ALL_KINDS,
                      severities: Sequence[int] = SEVERITIES, seed: int = 0) -> CeTable:
    kinds = tuple(CorruptionKind(k) for k in kinds)
    errors = np.empty((len(kinds), len(severities)))
    for i, kind in enumerate(kinds):
        for j, s in enumerate(severities):
            errors[i, j] = 1.0 - evaluate(model, corrupt_set(images, kind, s, seed), labels)
    return CeTable(kinds, errors, tuple(severities))


def _check_compatible(a: CeTable, b: CeTable) -> None:
    if a.kinds != b.kinds or a.severities != b.severities:
        raise ValueError("CE tables cover different corruptions or severities")


def mce(ce_f: CeTable, ce_baseline: CeTable) -> float:
    """Mean over kinds of sum_s CE_f / sum_s CE_baseline, in percent."""
    _check_compatible(ce_f, ce_baseline)
    den = ce_baseline.errors.sum(axis=1)
    if np.any(den <= 0):
        raise DegenerateBaselineError("baseline has zero error summed over severities")
    return float(np.mean(ce_f.errors.sum(axis=1) / den) * 100.0)


def rce(ce_f: CeTable, clean_f: float, ce_baseline: CeTable, clean_baseline: float) -> float:
    """Mean over kinds of sum_s (CE_f - E_clean_f) / sum_s (CE_base - E_clean_base), in percent.

    Negative numerators are reported as they are.
    """
    _check_compatible(ce_f, ce_baseline)
    num = (ce_f.errors - clean_f).sum(axis=1)
    den = (ce_baseline.errors - clean_baseline).sum(axis=1)
    if np.any(den == 0):
        raise DegenerateBaselineError("baseline degradation sums to zero for some corruption")
    return float(np.mean(num / den) * 100.0)


def robust_accuracy(ce: CeTable) -> float:
    return float(np.mean(1.0 - ce.errors))


def group_ce(ce_f: CeTable, ce_baseline: CeTable) -> dict[str, float]:
    """Per-group CE in percent: normalise each kind by the baseline, then average within the group."""
    _check_compatible(ce_f, ce_baseline)
    ratio = ce_f.errors.sum(axis=1) / ce_baseline.errors.sum(axis=1)
    out = {}
    for g in GROUP_ORDER:
        rows = [i for i, k in enumerate(ce_f.kinds) if GROUPS[k] == g]
        if rows:
            out[g] = float(np.mean(ratio[rows]) * 100.0)
    return out


@dataclass
class CorruptionReport:
    model_id: str
    baseline_id: str
    clean_error: float
    baseline_clean_error: float
    ce: CeTable
    baseline_ce: CeTable
    mce: float = field(init=False)
    rce: float = field(init=False)
    sa: float = field(init=False)
    ra: float = field(init=False)
    groups: dict = field(init=False)

    def __post_init__(self) -> None:
        self.sa = 1.0 - self.clean_error
        self.ra = robust_accuracy(self.ce)
        self.mce = mce(self.ce, self.baseline_ce)
        self.rce = rce(self.ce, self.clean_error, self.baseline_ce, self.baseline_clean_error)
        self.groups = group_ce(self.ce, self.baseline_ce)


def corruption_report(model: ClassifierModel, baseline: ClassifierModel, images: np.ndarray,
                      labels: np.ndarray, kinds: Sequence[CorruptionKind | str] = ALL_KINDS,
                      severities: Sequence[int] = SEVERITIES, seed: int = 0,
                      baseline_ce: CeTable | None = None) -> CorruptionReport:
    """Score ``model`` against ``baseline``; pass ``baseline_ce`` to reuse a baseline table."""
    ce = corruption_errors(model, images, labels, kinds, severities, seed=seed)
    if baseline_ce is None:
        baseline_ce = ce if baseline is model else corruption_errors(baseline, images, labels, kinds,
                                                                     severities, seed=seed)
    return CorruptionReport(
        model_id=model.model_id,
        baseline_id=baseline.model_id,
        clean_error=1.0 - evaluate(model, images, labels),
        baseline_clean_error=1.0 - evaluate(baseline, images, labels),
        ce=ce,
        baseline_ce=baseline_ce,
    )

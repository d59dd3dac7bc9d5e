"""2D Fourier transforms and frequency-mask filtering on DC-centered grids.

Images are real arrays shaped ``(C, H, W)`` (or batches ``(N, C, H, W)``).
Spectra use the same shapes with complex dtype and the DC term stored at
``(H // 2, W // 2)``. Masks are boolean ``(H, W)`` grids shared by every
channel.

The forward transform is unscaled and the inverse divides by ``H * W``.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Grid sizes that the transforms cannot handle or that do not line up."""


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_grid(arr: np.ndarray) -> tuple[int, int]:
    if arr.ndim < 2:
        raise DimensionError(f"expected at least 2 dimensions, got shape {arr.shape}")
    h, w = arr.shape[-2:]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise DimensionError(f"height and width must be powers of two, got {h}x{w}")
    return h, w


def center(shape: tuple[int, int]) -> tuple[int, int]:
    """Grid index of the DC term."""
    return shape[0] // 2, shape[1] // 2


def mirror(coord: tuple[int, int], shape: tuple[int, int]) -> tuple[int, int]:
    """Index of the conjugate partner of ``coord`` on a DC-centered grid.

    Frequency ``f`` lives at index ``f + H // 2``; its partner ``-f`` lives at
    ``H // 2 - f``. For even sizes this is ``(H - u) % H``, which also maps the
    Nyquist row/column onto itself.
    """
    h, w = shape
    cu, cv = center(shape)
    return (2 * cu - coord[0]) % h, (2 * cv - coord[1]) % w


def mirror_grid(arr: np.ndarray) -> np.ndarray:
    """Reorder the last two axes so entry ``(u, v)`` holds the value at ``mirror(u, v)``."""
    h, w = arr.shape[-2:]
    cu, cv = center((h, w))
    rows = (2 * cu - np.arange(h)) % h
    cols = (2 * cv - np.arange(w)) % w
    return arr[..., rows, :][..., :, cols]


def dft2(image: np.ndarray) -> np.ndarray:
    """Per-channel 2D DFT of ``image`` with the DC term moved to the grid center."""
    image = np.asarray(image, dtype=np.float64)
    _check_grid(image)
    return np.fft.fftshift(np.fft.fft2(image), axes=(-2, -1))


def idft2(spectrum: np.ndarray, clamp: bool = False, return_complex: bool = False) -> np.ndarray:
    """Inverse of :func:`dft2`.

    The real part is returned (clamped to [0, 1] when ``clamp`` is set).
    ``return_complex`` skips both steps so callers can inspect the imaginary
    residue.
    """
    spectrum = np.asarray(spectrum)
    _check_grid(spectrum)
    out = np.fft.ifft2(np.fft.ifftshift(spectrum, axes=(-2, -1)))
    if return_complex:
        return out
    out = out.real
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def symmetrize_mask(mask: np.ndarray) -> np.ndarray:
    """OR every bit with its conjugate partner so masked real images stay real."""
    mask = np.asarray(mask, dtype=bool)
    _check_grid(mask)
    return mask | mirror_grid(mask)


def is_symmetric(mask: np.ndarray) -> bool:
    mask = np.asarray(mask, dtype=bool)
    return bool(np.array_equal(mask, mirror_grid(mask)))


def _check_mask(spectrum: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape != spectrum.shape[-2:]:
        raise DimensionError(
            f"mask shape {mask.shape} does not match spectrum grid {spectrum.shape[-2:]}"
        )
    return mask


def apply_mask(spectrum: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Element-wise product of every channel with the (H, W) mask."""
    spectrum = np.asarray(spectrum)
    mask = _check_mask(spectrum, mask)
    return spectrum * mask.astype(np.float64)


def filter_image(image: np.ndarray, mask: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Keep only the frequencies set in ``mask`` and return the clamped real image.

    Works on a single ``(C, H, W)`` image or a batch ``(N, C, H, W)``.
    """
    return idft2(apply_mask(dft2(image), mask), clamp=clamp)


def remove_single_frequency(spectrum: np.ndarray, coord: tuple[int, int]) -> np.ndarray:
    """Zero ``coord`` and its conjugate partner in every channel."""
    spectrum = np.array(spectrum, copy=True)
    h, w = _check_grid(spectrum)
    u, v = coord
    if not (0 <= u < h and 0 <= v < w):
        raise IndexError(f"frequency {coord} outside {h}x{w} grid")
    mu, mv = mirror((u, v), (h, w))
    spectrum[..., u, v] = 0
    spectrum[..., mu, mv] = 0
    return spectrum


def frequency_pairs(shape: tuple[int, int]) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """All unordered ``{coord, mirror(coord)}`` pairs in raster order of the first member.

    Self-mirrored points (DC and the Nyquist corners) appear as ``(p, p)``.
    """
    h, w = shape
    pairs = []
    seen = np.zeros(shape, dtype=bool)
    for u in range(h):
        for v in range(w):
            if seen[u, v]:
                continue
            m = mirror((u, v), shape)
            seen[u, v] = seen[m] = True
            pairs.append(((u, v), m))
    return pairs


def pair_mask(shape: tuple[int, int], coord: tuple[int, int]) -> np.ndarray:
    """Boolean mask with exactly ``coord`` and its partner set."""
    mask = np.zeros(shape, dtype=bool)
    mask[coord] = True
    mask[mirror(coord, shape)] = True
    return mask


def radial_frequency(shape: tuple[int, int]) -> np.ndarray:
    """Distance of every grid cell from DC, in cycles per image."""
    h, w = shape
    cu, cv = center(shape)
    uu, vv = np.meshgrid(np.arange(h) - cu, np.arange(w) - cv, indexing="ij")
    return np.hypot(uu, vv)

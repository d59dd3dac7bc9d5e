"""Slow reference implementations used as independent oracles by the tests.

Nothing here imports the code under test except plain data containers.
"""

from __future__ import annotations

import numpy as np


def brute_dft2(image: np.ndarray) -> np.ndarray:
    """Direct O(N^4) DFT on a DC-centered grid.

    Entry ``(u, v)`` holds frequency ``(u - H//2, v - W//2)``; no shifting
    helpers are used.
    """
    x = np.asarray(image, dtype=np.float64)
    h, w = x.shape[-2:]
    m = np.arange(h)[:, None]
    n = np.arange(w)[None, :]
    out = np.zeros(x.shape, dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            ku, kv = u - h // 2, v - w // 2
            basis = np.exp(-2j * np.pi * (ku * m / h + kv * n / w))
            out[..., u, v] = (x * basis).sum(axis=(-2, -1))
    return out


def dft2_2x2(a: float, b: float, c: float, d: float) -> np.ndarray:
    """Hand-derived centered spectrum of ``[[a, b], [c, d]]``.

    Frequencies -1 and +1 coincide on a 2-point axis, so ``e^{i pi m} = (-1)^m``.
    """
    return np.array([
        [a - b - c + d, a + b - c - d],
        [a - b + c - d, a + b + c + d],
    ], dtype=np.complex128)


def naive_forward(layers, params, image: np.ndarray) -> np.ndarray:
    """Loop-based forward pass of one ``(C, H, W)`` image, channel-first throughout."""
    x = np.asarray(image, dtype=np.float64)
    for layer, p in zip(layers, params):
        kind = layer["type"]
        if kind == "conv":
            W, b = p["W"], p["b"]            # (k, k, Cin, Cout)
            k, s, pad = layer["kernel"], layer["stride"], layer["pad"]
            cin, h, w = x.shape
            xp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
            xp[:, pad:pad + h, pad:pad + w] = x
            ho = (h + 2 * pad - k) // s + 1
            wo = (w + 2 * pad - k) // s + 1
            y = np.zeros((W.shape[3], ho, wo))
            for o in range(W.shape[3]):
                for i in range(ho):
                    for j in range(wo):
                        acc = b[o]
                        for a in range(k):
                            for bb in range(k):
                                for c in range(cin):
                                    acc += xp[c, i * s + a, j * s + bb] * W[a, bb, c, o]
                        y[o, i, j] = acc
            x = y
        elif kind == "relu":
            x = np.where(x > 0, x, 0.0)
        elif kind == "maxpool":
            c, h, w = x.shape
            y = np.zeros((c, h // 2, w // 2))
            for ch in range(c):
                for i in range(h // 2):
                    for j in range(w // 2):
                        y[ch, i, j] = max(x[ch, 2 * i, 2 * j], x[ch, 2 * i, 2 * j + 1],
                                          x[ch, 2 * i + 1, 2 * j], x[ch, 2 * i + 1, 2 * j + 1])
            x = y
        elif kind == "flatten":
            # row-major over (H, W, C)
            c, h, w = x.shape
            x = np.array([x[ch, i, j] for i in range(h) for j in range(w) for ch in range(c)])
        elif kind == "dense":
            W, b = p["W"], p["b"]
            x = np.array([b[o] + sum(x[i] * W[i, o] for i in range(len(x)))
                          for o in range(W.shape[1])])
        else:
            raise ValueError(kind)
    return x


def log_softmax_ce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(len(labels)), labels]


def central_difference(f, x: np.ndarray, idx, h: float = 1e-5) -> float:
    orig = x[idx]
    x[idx] = orig + h
    fp = f()
    x[idx] = orig - h
    fm = f()
    x[idx] = orig
    return (fp - fm) / (2 * h)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / max(|a|, |b|)`` on whole tensors (Euclidean norms), 0 when both vanish."""
    a, b = np.ravel(a), np.ravel(b)
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def linear_softmax_input_grad(W: np.ndarray, b: np.ndarray, x_flat: np.ndarray, label: int) -> np.ndarray:
    """Closed form ``(softmax(W^T x + b) - onehot(label)) W^T`` for ``W`` shaped (D, K)."""
    z = x_flat @ W + b
    p = np.exp(z - z.max())
    p /= p.sum()
    p[label] -= 1.0
    return W @ p


def chi_square(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    expected = counts.sum() / counts.size
    return float(((counts - expected) ** 2 / expected).sum())

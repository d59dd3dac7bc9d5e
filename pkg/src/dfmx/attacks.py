"""Untargeted L-infinity FGSM and PGD on the true-label cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ClassifierModel, evaluate, input_gradient, predict
from .seeding import rng as derived_rng

EPSILON_GRID = tuple(k / 255 for k in range(1, 11))
INITS = ("zero", "random")


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings; ``step_size`` defaults to 2.5 * epsilon / steps."""

    epsilon: float
    steps: int = 10
    step_size: float | None = None
    init: str = "zero"

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.step_size is None:
            object.__setattr__(self, "step_size", 2.5 * self.epsilon / self.steps)
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")


def _project(x: np.ndarray, x0: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(np.clip(x, x0 - eps, x0 + eps), 0.0, 1.0)


def fgsm(model: ClassifierModel, images: np.ndarray, labels, epsilon: float) -> np.ndarray:
    """``clip(x + eps * sign(grad), 0, 1)`` with sign(0) = 0; single image or batch."""
    x = np.asarray(images, dtype=np.float64)
    if epsilon == 0:
        return x.copy()
    g = input_gradient(model, x, labels)
    return np.clip(x + epsilon * np.sign(g), 0.0, 1.0)


def pgd(model: ClassifierModel, images: np.ndarray, labels, config: AttackConfig,
        rng: np.random.Generator | None = None) -> np.ndarray:
    x0 = np.asarray(images, dtype=np.float64)
    eps = config.epsilon
    if config.init == "random":
        gen = rng if rng is not None else np.random.default_rng(0)
        x = _project(x0 + gen.uniform(-eps, eps, size=x0.shape), x0, eps)
    else:
        x = x0.copy()
    for _ in range(config.steps):
        g = input_gradient(model, x, labels)
        x = _project(x + config.step_size * np.sign(g), x0, eps)
    return x


@dataclass
class AttackReport:
    model_id: str
    epsilons: tuple[float, ...]
    accuracy: dict[str, list[float]] = field(default_factory=dict)
    steps: int = 10
    init: str = "zero"
    seed: int = 0

    def step_size(self, epsilon: float) -> float:
        return AttackConfig(epsilon, self.steps, init=self.init).step_size


def attack_accuracy(model: ClassifierModel, images: np.ndarray, labels,
                    attacks: Sequence[str] = ("fgsm", "pgd"),
                    epsilons: Sequence[float] = EPSILON_GRID, seed: int = 0,
                    steps: int = 10, init: str = "zero", batch_size: int = 256) -> AttackReport:
    """Accuracy on adversarial copies of the whole set for every (attack, epsilon).

    An epsilon of 0 evaluates the clean images.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    report = AttackReport(model.model_id, tuple(epsilons), steps=steps, init=init, seed=seed)
    for name in attacks:
        accs = []
        for eps in epsilons:
            if eps == 0:
                accs.append(evaluate(model, images, labels))
                continue
            correct = 0
            for start in range(0, len(images), batch_size):
                xb, yb = images[start:start + batch_size], labels[start:start + batch_size]
                if name == "fgsm":
                    adv = fgsm(model, xb, yb, eps)
                elif name == "pgd":
                    gen = derived_rng(seed, "pgd", round(eps * 255 * 1000), start)
                    adv = pgd(model, xb, yb, AttackConfig(eps, steps, init=init), rng=gen)
                else:
                    raise ValueError(f"unknown attack {name!r}")
                correct += int(np.sum(predict(model, adv) == yb))
            accs.append(correct / len(images))
        report.accuracy[name] = accs
    return report


"""Datasets for desk-scale runs.

The built-in generator draws oriented colour gratings: every class owns two
(orientation, frequency, colour) components, and a sample is that pair with
random phases, random contrast and additive Gaussian noise.  Random phase
makes the task translation-like, so a classifier has to learn oriented
frequency detectors rather than memorise pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..rng import DATASET, generator


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    @property
    def classes(self) -> int:
        return int(max(self.y_train.max(), self.y_val.max())) + 1

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.x_train.shape[1:])

    def astype(self, dtype) -> "Dataset":
        return Dataset(self.x_train.astype(dtype), self.y_train, self.x_val.astype(dtype), self.y_val)


def _prototypes(seed: int, classes: int, channels: int):
    rng = generator(seed, DATASET, 0)
    theta = rng.uniform(0, np.pi, (classes, 2))
    freq = rng.uniform(1.0, 3.5, (classes, 2))
    colour = rng.standard_normal((classes, 2, channels))
    colour /= np.linalg.norm(colour, axis=-1, keepdims=True)
    return theta, freq, colour


def _draw(seed: int, split: int, n: int, theta, freq, colour, size: int, noise: float):
    classes, _, channels = colour.shape
    rng = generator(seed, DATASET, 1, split)
    y = rng.integers(0, classes, n)
    phase = rng.uniform(0, 2 * np.pi, (n, 2))
    contrast = rng.uniform(0.6, 1.4, (n, 2))
    jitter = rng.normal(0.0, 0.08, (n, 2))  # orientation wobble
    u = (np.arange(size) + 0.5) / size - 0.5
    yy, xx = np.meshgrid(u, u, indexing="ij")
    x = np.zeros((n, channels, size, size))
    for comp in range(2):
        t = theta[y, comp] + jitter[:, comp]
        k = 2 * np.pi * freq[y, comp]
        arg = k[:, None, None] * (np.cos(t)[:, None, None] * xx + np.sin(t)[:, None, None] * yy) + phase[:, comp, None, None]
        wave = contrast[:, comp, None, None] * np.sin(arg)
        x += colour[y, comp][:, :, None, None] * wave[:, None]
    x += noise * rng.standard_normal(x.shape)
    return x, y


def synthetic(
    seed: int = 0,
    n_train: int = 8000,
    n_val: int = 2000,
    size: int = 16,
    channels: int = 3,
    classes: int = 10,
    noise: float = 1.4,
) -> Dataset:
    """Deterministic in ``seed``; train and validation draws are disjoint streams."""
    protos = _prototypes(seed, classes, channels)
    xt, yt = _draw(seed, 0, n_train, *protos, size, noise)
    xv, yv = _draw(seed, 1, n_val, *protos, size, noise)
    return Dataset(xt, yt, xv, yv)


def from_directory(path) -> Dataset:
    """Load ``train.npz`` and ``val.npz`` (arrays ``x`` in NCHW and integer ``y``)."""
    path = Path(path)
    parts = []
    for split in ("train", "val"):
        f = path / f"{split}.npz"
        if not f.exists():
            raise FileNotFoundError(f"dataset directory {path} has no {split}.npz")
        with np.load(f) as z:
            parts += [np.asarray(z["x"], dtype=float), np.asarray(z["y"], dtype=np.int64)]
    return Dataset(*parts)


def load(spec: dict) -> Dataset:
    spec = dict(spec)
    kind = spec.pop("kind", "synthetic")
    if kind == "synthetic":
        return synthetic(**spec)
    if kind == "directory":
        return from_directory(spec["path"])
    raise ValueError(f"unknown dataset kind {kind!r}")

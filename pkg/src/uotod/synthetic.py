"""Synthetic detection problems: scattered rectangles and noisy predictions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cost import GroundTruth, Prediction
from .geometry import Box, pairwise_iou

__all__ = [
    "SyntheticScene",
    "PlacementError",
    "generate_scene",
    "generate_predictions",
    "IMAGE_SIZE",
    "N_CLASSES",
]

IMAGE_SIZE = (500, 400)
N_CLASSES = 20
MAX_OBJECTS = 30
SIDE_RANGE = (12.0, 80.0)
MAX_IOU = 0.25
MAX_TRIES = 1000
LABEL_SMOOTHING = 0.1


class PlacementError(RuntimeError):
    def __init__(self, seed: int, placed: int, wanted: int):
        super().__init__(
            f"seed {seed}: placed {placed} of {wanted} rectangles before running out of retries"
        )
        self.seed = seed


@dataclass(frozen=True)
class SyntheticScene:
    gts: tuple[GroundTruth, ...]
    seed: int
    image_size: tuple[int, int] = IMAGE_SIZE

    @property
    def n_gt(self) -> int:
        return len(self.gts)

    def boxes(self) -> np.ndarray:
        return np.array([g.box.as_array() for g in self.gts]).reshape(-1, 4)


def _random_box(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    # bounding box of a randomly rotated rectangle
    w, h = rng.uniform(*SIDE_RANGE, size=2)
    theta = rng.uniform(0.0, math.pi)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    bw, bh = min(w * c + h * s, width), min(w * s + h * c, height)
    cx = rng.uniform(bw / 2, width - bw / 2)
    cy = rng.uniform(bh / 2, height - bh / 2)
    return np.array([cx / width, cy / height, bw / width, bh / height])


def generate_scene(seed: int, max_tries: int = MAX_TRIES) -> SyntheticScene:
    """Random scene of 0 to 30 rectangles with pairwise IoU at most 0.25.

    Deterministic in ``seed``. Raises :class:`PlacementError` if a rectangle
    cannot be placed within ``max_tries`` draws.
    """
    rng = np.random.default_rng(seed)
    width, height = IMAGE_SIZE
    count = int(rng.integers(0, MAX_OBJECTS + 1))
    classes = rng.integers(0, N_CLASSES, size=count)
    boxes: list[np.ndarray] = []
    for _ in range(count):
        for _ in range(max_tries):
            cand = _random_box(rng, width, height)
            if not boxes or pairwise_iou(cand[None, :], np.array(boxes)).max() <= MAX_IOU:
                boxes.append(cand)
                break
        else:
            raise PlacementError(seed, len(boxes), count)
    gts = tuple(GroundTruth(int(k), Box(*b)) for k, b in zip(classes, boxes))
    return SyntheticScene(gts, seed)


def _clamp_box(b: np.ndarray) -> np.ndarray:
    cx, cy = np.clip(b[:2], 0.0, 1.0)
    w, h = np.clip(b[2:], 1e-3, 1.0)
    return np.array([cx, cy, w, h])


def generate_predictions(
    scene: SyntheticScene,
    n_pred: int,
    noise: float = 0.05,
    seed: int = 0,
    per_gt: int = 1,
) -> list[Prediction]:
    """Predictions for ``scene``: ``per_gt`` jittered copies of every ground
    truth, then uniformly random boxes up to ``n_pred``.

    Jitter is gaussian with standard deviation ``noise`` on every
    center-size coordinate, clamped back into the valid range. Jittered
    predictions carry a smoothed one-hot class vector, random ones a
    uniform vector.
    """
    if n_pred < 1:
        raise ValueError("n_pred must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    if n_pred < scene.n_gt:
        warnings.warn(
            f"{n_pred} predictions for {scene.n_gt} ground truths; some cannot be matched",
            RuntimeWarning,
            stacklevel=2,
        )
    preds: list[Prediction] = []
    uniform = np.full(N_CLASSES, 1.0 / N_CLASSES)
    for _ in range(per_gt):
        for g in scene.gts:
            if len(preds) == n_pred:
                break
            box = _clamp_box(g.box.as_array() + rng.normal(0.0, noise, size=4))
            probs = np.full(N_CLASSES, LABEL_SMOOTHING / N_CLASSES)
            probs[g.class_id] += 1.0 - LABEL_SMOOTHING
            preds.append(Prediction(probs, Box(*box)))
    while len(preds) < n_pred:
        w, h = rng.uniform(0.02, 0.5, size=2)
        cx, cy = rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2)
        preds.append(Prediction(uniform, Box(cx, cy, w, h)))
    return preds

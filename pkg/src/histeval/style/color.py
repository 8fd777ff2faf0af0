"""Colorfulness scoring and monochrome relabeling.

Colorfulness follows the opponent-axis statistic: rg = R - G,
yb = (R + G)/2 - B, score = sqrt(std(rg)^2 + std(yb)^2)
+ 0.3 * sqrt(mean(rg)^2 + mean(yb)^2), on 8-bit RGB values. Photography
observations scoring strictly below the threshold become ``monochrome``.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import StyleError
from .classes import MONOCHROME, StyleObservation

MONOCHROME_THRESHOLD = 10.0


def load_rgb(image) -> np.ndarray:
    """Pixel grid as HxWx3 float array; alpha dropped, grayscale expanded."""
    if isinstance(image, np.ndarray):
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        if arr.ndim != 3 or arr.shape[-1] < 3:
            raise StyleError(f"expected RGB pixel grid, got shape {arr.shape}")
        return arr[..., :3]
    if isinstance(image, (str, Path)):
        with Image.open(image) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float64)
    if isinstance(image, Image.Image):
        return np.asarray(image.convert("RGB"), dtype=np.float64)
    raise StyleError(f"unsupported image input {type(image).__name__}")


def colorfulness(image) -> float:
    """Opponent-axis colorfulness of an RGB image; 0 for all-gray pixels."""
    arr = load_rgb(image)
    if arr.size == 0:
        raise StyleError("cannot score a zero-pixel image")
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    std_term = float(np.hypot(rg.std(), yb.std()))
    mean_term = float(np.hypot(rg.mean(), yb.mean()))
    return std_term + 0.3 * mean_term


def relabel_monochrome(
    obs: StyleObservation, image, threshold: float = MONOCHROME_THRESHOLD
) -> StyleObservation:
    """Photography below the colorfulness threshold becomes monochrome.

    Non-photography labels pass through untouched; idempotent.
    """
    if obs.label != "photography":
        return obs
    if colorfulness(image) < threshold:
        return replace(obs, label=MONOCHROME)
    return obs

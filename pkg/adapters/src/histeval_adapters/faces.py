"""Face observations: template-matching detection plus a linear attribute head.

Detection slides a normalized face template (bright oval, eye band, mouth bar)
over the grayscale image at several scales and keeps correlation peaks after
overlap suppression. Gender and race for each detected crop come from fixed
seeded linear heads over normalized grayscale features; confidences are the
softmax maxima. Both stages are deterministic stand-ins for a trained
face-attribute classifier: swap in any model that fills the same JSONL schema.
"""

from __future__ import annotations

import json
import logging

import cv2
import numpy as np

log = logging.getLogger(__name__)

GENDER_LABELS = ("male", "female")
RACE_LABELS = (
    "White",
    "Black",
    "Latino",
    "East Asian",
    "Southeast Asian",
    "Indian",
    "Middle Eastern",
)

HEAD_SEED = 90210
CROP_SIZE = 32
TEMPLATE_SIZES = (24, 32, 48, 64)
MATCH_THRESHOLD = 0.55
MAX_OVERLAP = 0.3


def face_template(size: int) -> np.ndarray:
    """Bright oval with an eye band and mouth bar on a dark ground."""
    template = np.zeros((size, size), np.float32)
    yy, xx = np.mgrid[0:size, 0:size]
    cy = cx = size / 2
    oval = ((yy - cy) / (0.48 * size)) ** 2 + ((xx - cx) / (0.36 * size)) ** 2 <= 1.0
    template[oval] = 1.0
    eye_row = int(0.42 * size)
    half = max(1, size // 12)
    for ex in (int(0.35 * size), int(0.65 * size)):
        template[eye_row - half : eye_row + half, ex - half : ex + half] = 0.15
    mouth = int(0.72 * size)
    template[mouth : mouth + half, int(0.40 * size) : int(0.60 * size)] = 0.3
    return template


def _suppress_overlaps(boxes: list) -> list:
    kept: list = []
    for score, x, y, w, h in sorted(boxes, key=lambda b: (-b[0], b[1], b[2])):
        area = w * h
        overlapping = False
        for _, kx, ky, kw, kh in kept:
            ix = max(0, min(x + w, kx + kw) - max(x, kx))
            iy = max(0, min(y + h, ky + kh) - max(y, ky))
            if ix * iy > MAX_OVERLAP * min(area, kw * kh):
                overlapping = True
                break
        if not overlapping:
            kept.append((score, x, y, w, h))
    return kept


def detect_faces(gray: np.ndarray, threshold: float = MATCH_THRESHOLD) -> list:
    """(x, y, w, h) boxes of template-correlation peaks, strongest first."""
    image = gray.astype(np.float32) / 255.0
    boxes = []
    for size in TEMPLATE_SIZES:
        if image.shape[0] < size or image.shape[1] < size:
            continue
        response = cv2.matchTemplate(image, face_template(size), cv2.TM_CCOEFF_NORMED)
        ys, xs = np.where(response >= threshold)
        for y, x in zip(ys.tolist(), xs.tolist()):
            boxes.append((float(response[y, x]), x, y, size, size))
    return [(x, y, w, h) for _, x, y, w, h in _suppress_overlaps(boxes)]


class AttributeHeads:
    def __init__(self, seed: int = HEAD_SEED):
        rng = np.random.default_rng(seed)
        dim = CROP_SIZE * CROP_SIZE
        self.w_gender = rng.normal(scale=0.05, size=(dim, len(GENDER_LABELS)))
        self.w_race = rng.normal(scale=0.05, size=(dim, len(RACE_LABELS)))

    @staticmethod
    def _features(crop: np.ndarray) -> np.ndarray:
        resized = cv2.resize(crop, (CROP_SIZE, CROP_SIZE), interpolation=cv2.INTER_AREA)
        flat = resized.astype(np.float64).ravel() / 255.0
        return flat - flat.mean()

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max()
        exp = np.exp(shifted)
        return exp / exp.sum()

    def classify(self, crop: np.ndarray) -> dict:
        features = self._features(crop)
        p_gender = self._softmax(features @ self.w_gender)
        p_race = self._softmax(features @ self.w_race)
        return {
            "gender": GENDER_LABELS[int(np.argmax(p_gender))],
            "race": RACE_LABELS[int(np.argmax(p_race))],
            "conf_gender": float(p_gender.max()),
            "conf_race": float(p_race.max()),
        }


def extract_faces(image_dir, out, batch_size: int = 16, device: str = "cpu") -> int:
    """Write one faces row per readable image (empty list when no face)."""
    from .walk import iter_images

    del batch_size, device  # detection is per-image; flags kept for CLI symmetry
    heads = AttributeHeads()
    rows = 0
    with open(out, "w", encoding="utf-8") as f:
        for image_id, path in iter_images(image_dir):
            image = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
            if image is None:
                log.warning("skipping unreadable image %s", path)
                continue
            faces = []
            for x, y, w, h in detect_faces(image):
                faces.append(heads.classify(image[y : y + h, x : x + w]))
            f.write(json.dumps({"image_id": image_id, "faces": faces}) + "\n")
            rows += 1
    return rows

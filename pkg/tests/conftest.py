import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from histeval.manifest import Manifest

FIXTURES = Path(__file__).parent / "fixtures"


def write_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels.astype(np.uint8), mode="RGB").save(path)


def colorful_pixels(seed: int, size: int = 16) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3))


def gray_pixels(seed: int, size: int = 16) -> np.ndarray:
    rng = np.random.default_rng(seed)
    channel = rng.integers(0, 256, size=(size, size, 1))
    return np.repeat(channel, 3, axis=2)


def tiny_manifest() -> Manifest:
    return Manifest.from_dict(
        {
            "categories": [
                {
                    "id": "music",
                    "label": "Music",
                    "activities": [{"id": "singing", "text": "singing"}],
                },
                {
                    "id": "agriculture",
                    "label": "Agriculture",
                    "activities": [{"id": "plowing-a-field", "text": "plowing a field"}],
                },
            ],
            "periods": [
                {"id": "18th-century", "label": "18th century", "kind": "century"},
                {"id": "1950s", "label": "1950s", "kind": "decade"},
                {
                    "id": "21st-century",
                    "label": "21st century",
                    "kind": "century",
                    "anachronism_eligible": False,
                },
            ],
        }
    )


@pytest.fixture
def mini_corpus_dir(tmp_path):
    """2 activities x 3 periods x 10 replicates for one model, canonical layout."""
    root = tmp_path / "corpus"
    seed = 0
    for activity in ("singing", "plowing-a-field"):
        for period in ("18th-century", "1950s", "21st-century"):
            for replicate in range(10):
                seed += 1
                write_png(
                    root / "sdxl" / period / activity / f"{replicate}.png",
                    colorful_pixels(seed),
                )
    return root


def write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")

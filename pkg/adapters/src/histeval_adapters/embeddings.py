"""Image embeddings from a frozen convolutional encoder.

The encoder is a ResNet-18 trunk (global-average-pooled, 512-D) in eval mode.
Without a checkpoint it is initialized from a fixed seed, which keeps reruns
bit-identical; pass a state-dict file to use real pretrained weights. Either
way the downstream probe retrains on whatever the encoder emits, so the
sidecar schema is the only contract.
"""

from __future__ import annotations

import json
import logging

import numpy as np
import torch
from PIL import Image
from torchvision.models import resnet18

log = logging.getLogger(__name__)

INIT_SEED = 1337
INPUT_SIZE = 224
EMBEDDING_DIM = 512


def build_encoder(weights_path=None, device: str = "cpu") -> torch.nn.Module:
    torch.manual_seed(INIT_SEED)
    model = resnet18(weights=None)
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu")
        model.load_state_dict(state, strict=False)
    model.fc = torch.nn.Identity()
    model.eval()
    return model.to(device)


def preprocess(path) -> torch.Tensor:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
    array = np.asarray(rgb, dtype=np.float32) / 255.0
    return torch.from_numpy(array).permute(2, 0, 1)


@torch.no_grad()
def embed_batch(model: torch.nn.Module, tensors, device: str = "cpu") -> np.ndarray:
    batch = torch.stack(tensors).to(device)
    return model(batch).cpu().numpy().astype(np.float64)


def extract_embeddings(
    image_dir,
    out,
    batch_size: int = 16,
    device: str = "cpu",
    weights_path=None,
) -> int:
    """Write one embeddings row per readable image; returns the row count."""
    from .walk import iter_images

    model = build_encoder(weights_path, device)
    pairs = iter_images(image_dir)
    rows = 0
    with open(out, "w", encoding="utf-8") as f:
        batch_ids: list = []
        batch_tensors: list = []

        def flush():
            nonlocal rows
            if not batch_ids:
                return
            vectors = embed_batch(model, batch_tensors, device)
            for image_id, vector in zip(batch_ids, vectors):
                row = {"image_id": image_id, "vector": [float(x) for x in vector]}
                f.write(json.dumps(row) + "\n")
                rows += 1
            batch_ids.clear()
            batch_tensors.clear()

        for image_id, path in pairs:
            try:
                tensor = preprocess(path)
            except (OSError, ValueError) as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            batch_ids.append(image_id)
            batch_tensors.append(tensor)
            if len(batch_ids) >= batch_size:
                flush()
        flush()
    return rows

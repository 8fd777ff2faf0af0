"""Optional style-label sidecar from exported probe weights.

Reads an embeddings JSONL plus the engine's ``probe.json`` export
({classes, weights, bias}) and emits styles rows with softmax probabilities.
"""

from __future__ import annotations

import json

import numpy as np


def load_probe(path) -> dict:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    return {
        "classes": list(doc["classes"]),
        "weights": np.asarray(doc["weights"], dtype=np.float64),
        "bias": np.asarray(doc["bias"], dtype=np.float64),
    }


def label_embeddings(embeddings_path, probe_path, out) -> int:
    probe = load_probe(probe_path)
    classes = probe["classes"]
    rows = 0
    with open(embeddings_path, encoding="utf-8") as src, open(out, "w", encoding="utf-8") as dst:
        for line in src:
            if not line.strip():
                continue
            row = json.loads(line)
            logits = np.asarray(row["vector"]) @ probe["weights"] + probe["bias"]
            shifted = logits - logits.max()
            probs = np.exp(shifted) / np.exp(shifted).sum()
            dst.write(
                json.dumps(
                    {
                        "image_id": row["image_id"],
                        "label": classes[int(np.argmax(probs))],
                        "probs": {c: float(p) for c, p in zip(classes, probs)},
                    }
                )
                + "\n"
            )
            rows += 1
    return rows

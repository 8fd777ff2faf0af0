"""Sidecar producers for the evaluation engine.

Each adapter walks an image directory and emits one JSONL file matching the
engine's sidecar schemas, keyed by the image's corpus path (relative path
without extension). The adapters are replaceable: the contract is the file
schema, not the specific models behind it.
"""

__version__ = "0.1.0"

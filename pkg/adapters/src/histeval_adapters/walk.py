"""Image discovery shared by the adapters."""

from __future__ import annotations

from pathlib import Path

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".webp")


def iter_images(root) -> list:
    """(image_id, path) pairs in sorted order; id = relative path sans suffix."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")
    pairs = []
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() in IMAGE_SUFFIXES and path.is_file():
            image_id = str(path.relative_to(root).with_suffix(""))
            pairs.append((image_id, path))
    return pairs

"""Image-corpus ingestion and sidecar attachment.

Canonical on-disk layout is ``root/{model_id}/{period_id}/{activity_id}/{replicate}.png``;
an ``index.jsonl`` at the corpus root overrides it for arbitrary layouts. All
downstream metrics key records by (model_id, activity, period, replicate).
Ingestion hashes file bytes but never decodes pixels; only colorfulness reads them.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .demographics import FaceObservation
from .errors import CorpusError, DemographicsError, SidecarError, StyleError
from .manifest import Manifest
from .style.classes import StyleObservation

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".webp")

SIDECAR_KINDS = ("styles", "embeddings", "faces", "annotations")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    model_id: str
    activity: str
    period: str
    replicate: int
    path: str
    sha256: str

    @property
    def key(self) -> tuple:
        return (self.model_id, self.activity, self.period, self.replicate)


@dataclass(frozen=True)
class AnnotationRow:
    image_id: str
    question_id: str
    annotator_id: str
    answer: str


@dataclass(frozen=True)
class Corpus:
    root: str
    records: tuple
    styles: dict | None = None
    embeddings: dict | None = None
    faces: dict | None = None
    annotations: tuple | None = None
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {r.image_id: r for r in self.records})

    def __len__(self) -> int:
        return len(self.records)

    def record(self, image_id: str) -> ImageRecord:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise CorpusError(f"unknown image_id {image_id!r}") from None

    def has_image(self, image_id: str) -> bool:
        return image_id in self._by_id

    def models(self) -> tuple:
        return tuple(sorted({r.model_id for r in self.records}))

    def periods(self) -> tuple:
        return tuple(sorted({r.period for r in self.records}))

    def activities(self) -> tuple:
        return tuple(sorted({r.activity for r in self.records}))

    def select(self, model_id=None, activity=None, period=None) -> list:
        return [
            r
            for r in self.records
            if (model_id is None or r.model_id == model_id)
            and (activity is None or r.activity == activity)
            and (period is None or r.period == period)
        ]

    def count(self, model_id: str, period: str) -> int:
        """N_t^m: images of one model for one period."""
        return len(self.select(model_id=model_id, period=period))

    def counts(self) -> dict:
        """Per-(model, period) record counts."""
        out: dict = {}
        for r in self.records:
            out.setdefault(r.model_id, {}).setdefault(r.period, 0)
            out[r.model_id][r.period] += 1
        return out

    def pairs(self, model_id=None) -> list:
        """Distinct (activity, period) pairs present, sorted."""
        return sorted({(r.activity, r.period) for r in self.select(model_id=model_id)})


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _records_from_layout(root: Path, manifest: Manifest) -> list:
    entries = []
    for model_dir in root.iterdir():
        if not model_dir.is_dir():
            continue
        for period_dir in sorted(p for p in model_dir.iterdir() if p.is_dir()):
            if not manifest.has_period(period_dir.name):
                raise CorpusError(f"unknown period id {period_dir.name!r} under {model_dir}")
            for activity_dir in sorted(p for p in period_dir.iterdir() if p.is_dir()):
                if not manifest.has_activity(activity_dir.name):
                    raise CorpusError(
                        f"unknown activity id {activity_dir.name!r} under {period_dir}"
                    )
                for img in sorted(activity_dir.iterdir()):
                    if img.suffix.lower() not in IMAGE_SUFFIXES:
                        continue
                    try:
                        replicate = int(img.stem)
                    except ValueError:
                        raise CorpusError(
                            f"image filename {img.name!r} is not a replicate number"
                        ) from None
                    image_id = "/".join(
                        (model_dir.name, period_dir.name, activity_dir.name, img.stem)
                    )
                    entries.append(
                        {
                            "image_id": image_id,
                            "model_id": model_dir.name,
                            "activity": activity_dir.name,
                            "period": period_dir.name,
                            "replicate": replicate,
                            "path": str(img),
                        }
                    )
    return entries


def _records_from_index(index_path: Path, root: Path, manifest: Manifest) -> list:
    entries = []
    for lineno, raw in enumerate(_iter_jsonl(index_path), start=1):
        row = _parse_jsonl_row(raw, index_path, lineno)
        try:
            entry = {
                "image_id": row["image_id"],
                "model_id": row["model_id"],
                "activity": row["activity"],
                "period": row["period"],
                "replicate": int(row["replicate"]),
                "path": str(root / row["path"]),
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{index_path}:{lineno}: malformed index row ({exc})") from exc
        if not manifest.has_activity(entry["activity"]):
            raise CorpusError(
                f"{index_path}:{lineno}: unknown activity id {entry['activity']!r}"
            )
        if not manifest.has_period(entry["period"]):
            raise CorpusError(f"{index_path}:{lineno}: unknown period id {entry['period']!r}")
        if "sha256" in row:
            entry["declared_sha256"] = row["sha256"]
        entries.append(entry)
    return entries


def ingest_corpus(root, manifest: Manifest, index=None, hash_workers: int = 8) -> Corpus:
    """Build a validated, deterministically ordered corpus from disk.

    Hashing runs in a thread pool; the result is sorted by record key, so the
    corpus is identical however the directory was enumerated.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} is not a directory")
    index_path = Path(index) if index is not None else root / "index.jsonl"
    if index_path.is_file():
        entries = _records_from_index(index_path, root, manifest)
    else:
        entries = _records_from_layout(root, manifest)

    for e in entries:
        if not Path(e["path"]).is_file():
            raise CorpusError(f"missing image file {e['path']}")

    with ThreadPoolExecutor(max_workers=hash_workers) as pool:
        digests = list(pool.map(lambda e: _sha256_file(Path(e["path"])), entries))
    records = []
    for e, digest in zip(entries, digests):
        declared = e.pop("declared_sha256", None)
        if declared is not None and declared != digest:
            raise CorpusError(
                f"digest mismatch for {e['image_id']!r}: index declares {declared}, "
                f"file hashes to {digest}"
            )
        records.append(ImageRecord(sha256=digest, **e))

    records.sort(key=lambda r: r.key)
    seen_keys = set()
    seen_ids = set()
    for r in records:
        if r.key in seen_keys:
            raise CorpusError(f"duplicate record key {r.key}")
        if r.image_id in seen_ids:
            raise CorpusError(f"duplicate image_id {r.image_id!r}")
        seen_keys.add(r.key)
        seen_ids.add(r.image_id)
    return Corpus(root=str(root), records=tuple(records))


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as f:
        for line in f:
            yield line.rstrip("\n")


def _parse_jsonl_row(raw: str, path, lineno: int) -> dict:
    if not raw.strip():
        raise SidecarError(f"{path}:{lineno}: blank line")
    try:
        row = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SidecarError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    if not isinstance(row, dict):
        raise SidecarError(f"{path}:{lineno}: row must be a JSON object")
    return row


def _require_image(corpus: Corpus, image_id, path, lineno: int) -> str:
    if not isinstance(image_id, str) or not corpus.has_image(image_id):
        raise SidecarError(
            f"{path}:{lineno}: image_id {image_id!r} does not exist in the corpus"
        )
    return image_id


def _parse_styles(corpus: Corpus, path: Path) -> dict:
    out = {}
    for lineno, raw in enumerate(_iter_jsonl(path), start=1):
        row = _parse_jsonl_row(raw, path, lineno)
        image_id = _require_image(corpus, row.get("image_id"), path, lineno)
        try:
            obs = StyleObservation(
                image_id=image_id, label=row["label"], probs=row.get("probs")
            )
        except KeyError as exc:
            raise SidecarError(f"{path}:{lineno}: missing field {exc}") from exc
        except StyleError as exc:
            raise SidecarError(f"{path}:{lineno}: {exc}") from exc
        out[image_id] = obs
    return out


def _parse_embeddings(corpus: Corpus, path: Path) -> dict:
    out = {}
    dim = None
    for lineno, raw in enumerate(_iter_jsonl(path), start=1):
        row = _parse_jsonl_row(raw, path, lineno)
        image_id = _require_image(corpus, row.get("image_id"), path, lineno)
        vector = row.get("vector")
        if not isinstance(vector, list) or not vector or not all(
            isinstance(x, (int, float)) for x in vector
        ):
            raise SidecarError(f"{path}:{lineno}: 'vector' must be a non-empty number list")
        if dim is None:
            dim = len(vector)
        elif len(vector) != dim:
            raise SidecarError(
                f"{path}:{lineno}: vector dimension {len(vector)} != {dim} seen earlier"
            )
        out[image_id] = tuple(float(x) for x in vector)
    return out


def _parse_faces(corpus: Corpus, path: Path) -> dict:
    out = {}
    for lineno, raw in enumerate(_iter_jsonl(path), start=1):
        row = _parse_jsonl_row(raw, path, lineno)
        image_id = _require_image(corpus, row.get("image_id"), path, lineno)
        faces_field = row.get("faces")
        if not isinstance(faces_field, list):
            raise SidecarError(f"{path}:{lineno}: 'faces' must be a list")
        faces = []
        for face in faces_field:
            try:
                faces.append(
                    FaceObservation(
                        gender=face["gender"],
                        race=face["race"],
                        conf_gender=float(face["conf_gender"]),
                        conf_race=float(face["conf_race"]),
                    )
                )
            except (KeyError, TypeError, ValueError, DemographicsError) as exc:
                raise SidecarError(f"{path}:{lineno}: {exc}") from exc
        out[image_id] = tuple(faces)
    return out


def _parse_annotations(corpus: Corpus, path: Path) -> tuple:
    out = []
    for lineno, raw in enumerate(_iter_jsonl(path), start=1):
        row = _parse_jsonl_row(raw, path, lineno)
        image_id = _require_image(corpus, row.get("image_id"), path, lineno)
        answer = row.get("answer")
        if answer not in ("yes", "no"):
            raise SidecarError(f"{path}:{lineno}: answer must be 'yes' or 'no', got {answer!r}")
        try:
            out.append(
                AnnotationRow(
                    image_id=image_id,
                    question_id=str(row["question_id"]),
                    annotator_id=str(row["annotator_id"]),
                    answer=answer,
                )
            )
        except KeyError as exc:
            raise SidecarError(f"{path}:{lineno}: missing field {exc}") from exc
    return tuple(out)


_PARSERS = {
    "styles": _parse_styles,
    "embeddings": _parse_embeddings,
    "faces": _parse_faces,
    "annotations": _parse_annotations,
}


def attach_sidecar(corpus: Corpus, kind: str, file) -> Corpus:
    """Return a corpus with the given sidecar replaced wholesale."""
    if kind not in SIDECAR_KINDS:
        raise SidecarError(f"unknown sidecar kind {kind!r}; expected one of {SIDECAR_KINDS}")
    path = Path(file)
    if not path.is_file():
        raise SidecarError(f"sidecar file {path} does not exist")
    parsed = _PARSERS[kind](corpus, path)
    return replace(corpus, **{kind: parsed})

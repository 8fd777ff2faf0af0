"""Prompt-grid manifest: activity categories x historical periods.

The bundled manifest carries 100 activities in 20 categories and 10 periods
(5 centuries, 5 decades); user manifests use the same JSON schema and may be
any size. Prompts render from the fixed template
``"A person {activity} in the {period}"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ManifestError

PROMPT_TEMPLATE = "A person {activity} in the {period}"

PERIOD_KINDS = ("century", "decade")


@dataclass(frozen=True)
class Activity:
    id: str
    text: str
    category: str


@dataclass(frozen=True)
class Category:
    id: str
    label: str


@dataclass(frozen=True)
class Period:
    id: str
    label: str
    kind: str
    anachronism_eligible: bool = True


@dataclass(frozen=True)
class PromptSpec:
    activity: str
    period: str
    text: str


def render_prompt(activity: Activity, period: Period) -> str:
    """Render the prompt for one (activity, period) cell. Deterministic."""
    return PROMPT_TEMPLATE.format(activity=activity.text, period=period.label)


class Manifest:
    """Immutable prompt grid; safe to share across threads."""

    def __init__(self, categories, activities, periods):
        categories = list(categories)
        activities = list(activities)
        periods = list(periods)
        self._validate(categories, activities, periods)
        self._categories: dict[str, Category] = {c.id: c for c in categories}
        self._activities: dict[str, Activity] = {a.id: a for a in activities}
        self._periods: dict[str, Period] = {p.id: p for p in periods}

    @staticmethod
    def _validate(categories, activities, periods) -> None:
        category_ids = {c.id for c in categories}
        seen: set[str] = set()
        by_category: dict[str, int] = {c: 0 for c in category_ids}
        for a in activities:
            if not a.text:
                raise ManifestError(f"activity {a.id!r} has empty text")
            if a.id in seen:
                raise ManifestError(f"duplicate activity id {a.id!r}")
            seen.add(a.id)
            if a.category not in category_ids:
                raise ManifestError(
                    f"activity {a.id!r} references unknown category {a.category!r}"
                )
            by_category[a.category] += 1
        for cid, count in by_category.items():
            if count == 0:
                raise ManifestError(f"category {cid!r} has no activities")
        for p in periods:
            if not p.label:
                raise ManifestError(f"period {p.id!r} has empty label")
            if p.kind not in PERIOD_KINDS:
                raise ManifestError(f"period {p.id!r} has unknown kind {p.kind!r}")
        for text in (a.text for a in activities):
            if "{" in text or "}" in text:
                raise ManifestError(f"malformed template variable in activity text {text!r}")

    @property
    def categories(self) -> tuple[Category, ...]:
        return tuple(self._categories.values())

    @property
    def activities(self) -> tuple[Activity, ...]:
        return tuple(self._activities.values())

    @property
    def periods(self) -> tuple[Period, ...]:
        return tuple(self._periods.values())

    def activity(self, activity_id: str) -> Activity:
        try:
            return self._activities[activity_id]
        except KeyError:
            raise ManifestError(f"unknown activity id {activity_id!r}") from None

    def period(self, period_id: str) -> Period:
        try:
            return self._periods[period_id]
        except KeyError:
            raise ManifestError(f"unknown period id {period_id!r}") from None

    def category_of(self, activity_id: str) -> Category:
        return self._categories[self.activity(activity_id).category]

    def has_activity(self, activity_id: str) -> bool:
        return activity_id in self._activities

    def has_period(self, period_id: str) -> bool:
        return period_id in self._periods

    def prompts(self) -> list[PromptSpec]:
        """All |activities| x |periods| prompt cells, in manifest order."""
        return [
            PromptSpec(a.id, p.id, render_prompt(a, p))
            for a in self._activities.values()
            for p in self._periods.values()
        ]

    def prompt(self, activity_id: str, period_id: str) -> PromptSpec:
        a = self.activity(activity_id)
        p = self.period(period_id)
        return PromptSpec(a.id, p.id, render_prompt(a, p))

    def __len__(self) -> int:
        return len(self._activities) * len(self._periods)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Manifest):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "categories": [
                {
                    "id": c.id,
                    "label": c.label,
                    "activities": [
                        {"id": a.id, "text": a.text}
                        for a in self._activities.values()
                        if a.category == c.id
                    ],
                }
                for c in self._categories.values()
            ],
            "periods": [
                {
                    "id": p.id,
                    "label": p.label,
                    "kind": p.kind,
                    "anachronism_eligible": p.anachronism_eligible,
                }
                for p in self._periods.values()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Manifest":
        if not isinstance(doc, dict):
            raise ManifestError("manifest document must be a JSON object")
        categories = []
        activities = []
        cat_ids = set()
        for c in doc.get("categories", []):
            try:
                cat = Category(id=c["id"], label=c.get("label", c["id"]))
            except (KeyError, TypeError) as exc:
                raise ManifestError(f"malformed category entry: {c!r}") from exc
            if cat.id in cat_ids:
                raise ManifestError(f"duplicate category id {cat.id!r}")
            cat_ids.add(cat.id)
            categories.append(cat)
            for a in c.get("activities", []):
                try:
                    activities.append(Activity(id=a["id"], text=a["text"], category=cat.id))
                except (KeyError, TypeError) as exc:
                    raise ManifestError(f"malformed activity entry: {a!r}") from exc
        periods = []
        period_ids = set()
        for p in doc.get("periods", []):
            try:
                period = Period(
                    id=p["id"],
                    label=p["label"],
                    kind=p["kind"],
                    anachronism_eligible=bool(p.get("anachronism_eligible", True)),
                )
            except (KeyError, TypeError) as exc:
                raise ManifestError(f"malformed period entry: {p!r}") from exc
            if period.id in period_ids:
                raise ManifestError(f"duplicate period id {period.id!r}")
            period_ids.add(period.id)
            periods.append(period)
        return cls(categories, activities, periods)


def save_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(
        json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_manifest(path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path}: invalid JSON ({exc})") from exc
    return Manifest.from_dict(doc)


def bundled_manifest() -> Manifest:
    """The shipped 20x5-activity / 10-period grid."""
    text = resources.files("histeval.data").joinpath("manifest.json").read_text("utf-8")
    manifest = Manifest.from_dict(json.loads(text))
    _check_bundled_shape(manifest)
    return manifest


def _check_bundled_shape(manifest: Manifest) -> None:
    if len(manifest.activities) != 100 or len(manifest.categories) != 20:
        raise ManifestError("bundled manifest must hold 100 activities in 20 categories")
    per_cat: dict[str, int] = {}
    for a in manifest.activities:
        per_cat[a.category] = per_cat.get(a.category, 0) + 1
    if any(n != 5 for n in per_cat.values()):
        raise ManifestError("bundled manifest must hold 5 activities per category")
    periods = manifest.periods
    if len(periods) != 10:
        raise ManifestError("bundled manifest must hold 10 periods")
    kinds = [p.kind for p in periods]
    if kinds.count("century") != 5 or kinds.count("decade") != 5:
        raise ManifestError("bundled manifest must hold 5 centuries and 5 decades")


def build_manifest(source=None) -> Manifest:
    """Build a manifest from a file path, or the bundled grid when source is None."""
    if source is None:
        return bundled_manifest()
    return load_manifest(source)

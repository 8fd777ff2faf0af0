"""Lexical normalization of proposed element names.

Surface forms that are near-duplicate phrasings of one object ("audio
device" / "digital audio device") collapse into a single canonical element so
detections are not double-counted. Similarity is the matching-blocks ratio
2*M/T over case-folded, whitespace-split token sequences, where M is the total
token length of the aligned matching blocks and T the summed token lengths.
Only surface-level naming is merged; distinct concepts stay distinct.
"""

from __future__ import annotations

from dataclasses import dataclass
from difflib import SequenceMatcher

SIMILARITY_THRESHOLD = 0.8


@dataclass(frozen=True)
class CanonicalElement:
    canonical_id: str
    representative: str
    surface_forms: frozenset


def _tokens(text: str) -> tuple:
    return tuple(text.casefold().split())


def similarity(a: str, b: str) -> float:
    """Matching-blocks ratio of the two token sequences, in [0, 1]."""
    ta, tb = _tokens(a), _tokens(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    matcher = SequenceMatcher(None, ta, tb, autojunk=False)
    matched = sum(block.size for block in matcher.get_matching_blocks())
    return 2.0 * matched / (len(ta) + len(tb))


def canonical_id_for(text: str) -> str:
    return " ".join(_tokens(text))


def normalize(items, threshold: float = SIMILARITY_THRESHOLD) -> list:
    """Greedy clustering of surface forms, reproducible by construction.

    Forms are processed in lexicographic order of their normalized spelling;
    each joins the first existing cluster whose representative reaches the
    threshold, otherwise it founds a new cluster with itself as
    representative. Identical normalized spellings are one surface form.
    """
    by_norm: dict[str, set] = {}
    for item in items:
        form = item.element if hasattr(item, "element") else str(item)
        by_norm.setdefault(canonical_id_for(form), set()).add(form)
    clusters: list[dict] = []
    for normalized in sorted(by_norm):
        raw_forms = by_norm[normalized]
        target = None
        for cluster in clusters:
            if similarity(normalized, cluster["rep_normalized"]) >= threshold:
                target = cluster
                break
        if target is None:
            clusters.append(
                {
                    "rep_normalized": normalized,
                    "representative": min(raw_forms),
                    "surface_forms": set(raw_forms),
                }
            )
        else:
            target["surface_forms"] |= raw_forms
    return [
        CanonicalElement(
            canonical_id=c["rep_normalized"],
            representative=c["representative"],
            surface_forms=frozenset(c["surface_forms"]),
        )
        for c in clusters
    ]


def canonical_map(elements) -> dict:
    """surface form -> CanonicalElement lookup (by normalized spelling too)."""
    out = {}
    for element in elements:
        for form in element.surface_forms:
            out[form] = element
            out[canonical_id_for(form)] = element
    return out

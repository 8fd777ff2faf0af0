"""Frequency, severity, overall anachronism rate, and human-agreement stats.

For an element z in period t of model m: frequency = detected images / N_t^m,
severity = detected images / prompts proposing z. The overall rate is the
share of the period's images carrying at least one detected element.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from ..errors import AnachronismError
from .normalize import canonical_map, normalize
from .verify import DETECTED

KAPPA_TOL = 1e-12


@dataclass(frozen=True)
class AnachronismScore:
    canonical_id: str
    period: str
    model_id: str
    n_detected: int
    n_proposed: int
    N: int
    frequency: float
    severity: float


def score(verdicts, proposals, corpus, model_id: str, period: str, elements=None) -> list:
    """Per-element scores for one (model, period) cell.

    ``n_proposed`` counts prompts (activities of this period) proposing any
    surface form of the element; ``n_detected`` counts images with a detected
    majority. Scores come back sorted by frequency, then severity, then id.
    """
    n_total = corpus.count(model_id, period)
    if n_total == 0:
        raise AnachronismError(f"no images for model={model_id!r} period={period!r}")
    period_proposals = [p for p in proposals if p.period == period]
    if elements is None:
        elements = normalize(period_proposals)
    lookup = canonical_map(elements)

    proposed_prompts: dict = {}
    for p in period_proposals:
        element = lookup.get(p.element)
        if element is None:
            raise AnachronismError(f"proposal element {p.element!r} not in canonical set")
        proposed_prompts.setdefault(element.canonical_id, set()).add(p.activity)

    detected_images: dict = {}
    image_ids = {r.image_id for r in corpus.select(model_id=model_id, period=period)}
    for v in verdicts:
        if v.image_id not in image_ids or v.majority != DETECTED:
            continue
        detected_images.setdefault(v.canonical_id, set()).add(v.image_id)

    rows = []
    for canonical_id in sorted(set(proposed_prompts) | set(detected_images)):
        n_proposed = len(proposed_prompts.get(canonical_id, ()))
        n_detected = len(detected_images.get(canonical_id, ()))
        if n_proposed == 0:
            raise AnachronismError(
                f"element {canonical_id!r} has detections but was never proposed "
                f"for period {period!r}"
            )
        rows.append(
            AnachronismScore(
                canonical_id=canonical_id,
                period=period,
                model_id=model_id,
                n_detected=n_detected,
                n_proposed=n_proposed,
                N=n_total,
                frequency=n_detected / n_total,
                severity=n_detected / n_proposed,
            )
        )
    rows.sort(key=lambda s: (-s.frequency, -s.severity, s.canonical_id))
    return rows


def overall_rate(verdicts, corpus, model_id: str, period: str) -> float:
    """Share of the period's images with at least one detected element."""
    n_total = corpus.count(model_id, period)
    if n_total == 0:
        raise AnachronismError(f"no images for model={model_id!r} period={period!r}")
    image_ids = {r.image_id for r in corpus.select(model_id=model_id, period=period)}
    flagged = {
        v.image_id for v in verdicts if v.majority == DETECTED and v.image_id in image_ids
    }
    return len(flagged) / n_total


def fleiss_kappa(matrix) -> float | None:
    """Standard multi-rater kappa over an item x category count matrix.

    Every item must carry the same number of ratings. Returns None when
    expected agreement is 1 (all raters always in one category), the
    degenerate case with no chance disagreement to correct for.
    """
    rows = [list(r) for r in matrix]
    if not rows:
        raise AnachronismError("empty annotation matrix")
    n = sum(rows[0])
    if n < 2:
        raise AnachronismError("each item needs at least 2 ratings")
    if any(sum(r) != n for r in rows):
        raise AnachronismError("all items must have the same number of ratings")
    n_items = len(rows)
    k = len(rows[0])
    p_item = [
        (sum(c * c for c in row) - n) / (n * (n - 1))
        for row in rows
    ]
    p_bar = sum(p_item) / n_items
    totals = [sum(row[j] for row in rows) for j in range(k)]
    grand = n_items * n
    p_e = sum((t / grand) ** 2 for t in totals)
    if abs(1.0 - p_e) < KAPPA_TOL:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


def human_agreement(verdicts, annotations) -> dict:
    """Pipeline vs human-majority agreement plus inter-annotator kappa.

    Annotations join verdicts on (image_id, question_id == canonical_id).
    Items whose annotator count differs from the modal count are left out of
    the kappa matrix (the standard formulation needs a constant rater count);
    evenly split items carry no human majority and are skipped for percent
    agreement. A None kappa flags the degenerate all-one-answer case.
    """
    by_pair: dict = {}
    for a in annotations:
        by_pair.setdefault((a.image_id, a.question_id), []).append(a.answer)
    pipeline = {(v.image_id, v.canonical_id): v.majority == DETECTED for v in verdicts}
    overlap = {pair: answers for pair, answers in by_pair.items() if pair in pipeline}
    if not overlap:
        raise AnachronismError("no overlap between verdicts and annotations")

    agree = 0
    compared = 0
    ties = 0
    for pair, answers in overlap.items():
        counts = Counter(answers)
        yes, no = counts.get("yes", 0), counts.get("no", 0)
        if yes == no:
            ties += 1
            continue
        human_detected = yes > no
        compared += 1
        if human_detected == pipeline[pair]:
            agree += 1
    if compared == 0:
        raise AnachronismError("every co-annotated item is evenly split")

    rating_counts = Counter(len(v) for v in overlap.values())
    modal = max(sorted(rating_counts), key=lambda c: rating_counts[c])
    matrix = [
        [Counter(answers).get("yes", 0), Counter(answers).get("no", 0)]
        for answers in overlap.values()
        if len(answers) == modal
    ]
    kappa = fleiss_kappa(matrix) if modal >= 2 else None
    return {
        "percent_agreement": agree / compared,
        "fleiss_kappa": kappa,
        "degenerate_kappa": kappa is None,
        "n_pairs": len(overlap),
        "n_compared": compared,
        "n_human_ties": ties,
        "n_kappa_items": len(matrix) if modal >= 2 else 0,
        "raters_per_item": modal,
    }

"""Demographic-representation pillar.

Aggregates face-classifier observations into per-prompt distributions, parses
LLM-estimated baseline distributions, computes one-sided under/over-representation
gaps, aggregates them by activity category, and runs the validation statistics
(Cohen's kappa cross-classifier agreement, MAE against reference data).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import TYPE_CHECKING

from .errors import DemographicsError

if TYPE_CHECKING:
    from .corpus import Corpus
    from .gateway import EndpointConfig, Gateway

GENDER_GROUPS = ("male", "female")
RACE_GROUPS = (
    "White",
    "Black",
    "Latino",
    "East Asian",
    "Southeast Asian",
    "Indian",
    "Middle Eastern",
)
# Metric default: Latino is ingested and reportable but excluded from the
# under/over comparison unless explicitly enabled.
METRIC_RACE_GROUPS = tuple(g for g in RACE_GROUPS if g != "Latino")
CONTINENT_GROUPS = (
    "Africa",
    "Asia",
    "Europe",
    "North America",
    "South America",
    "Oceania",
)

AXES = ("gender", "race", "continent")

AXIS_GROUPS = {
    "gender": GENDER_GROUPS,
    "race": RACE_GROUPS,
    "continent": CONTINENT_GROUPS,
}

SHARE_SUM_TOL = 1e-6
CONF_DEFAULT = 0.7
PERCENT_SUM_TOL = 2.0

# Merges the two Asian labels before cross-classifier comparison, mirroring the
# label sets of the two face classifiers being reconciled.
ASIAN_MERGE = {"East Asian": "Asian", "Southeast Asian": "Asian"}


@dataclass(frozen=True)
class FaceObservation:
    gender: str
    race: str
    conf_gender: float
    conf_race: float

    def __post_init__(self):
        if self.gender not in GENDER_GROUPS:
            raise DemographicsError(f"unknown gender label {self.gender!r}")
        if self.race not in RACE_GROUPS:
            raise DemographicsError(f"unknown race label {self.race!r}")
        for name in ("conf_gender", "conf_race"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DemographicsError(f"{name}={value} outside [0, 1]")


@dataclass(frozen=True)
class DemographicDistribution:
    axis: str
    shares: dict

    def __post_init__(self):
        if self.axis not in AXES:
            raise DemographicsError(f"unknown axis {self.axis!r}")
        known = set(AXIS_GROUPS[self.axis])
        unknown = set(self.shares) - known
        if unknown:
            raise DemographicsError(
                f"groups {sorted(unknown)} not in the {self.axis} group set"
            )
        total = sum(self.shares.values())
        if self.shares and abs(total - 1.0) > SHARE_SUM_TOL:
            raise DemographicsError(f"{self.axis} shares sum to {total}, expected 1")

    def share(self, group: str) -> float:
        return float(self.shares.get(group, 0.0))

    def restricted(self, groups) -> "DemographicDistribution":
        """Renormalize over a subset of groups (e.g. the metric race set)."""
        kept = {g: self.shares[g] for g in groups if g in self.shares}
        total = sum(kept.values())
        if total <= 0:
            raise DemographicsError(
                f"no probability mass left after restricting {self.axis} to {groups}"
            )
        return DemographicDistribution(self.axis, {g: v / total for g, v in kept.items()})


@dataclass(frozen=True)
class DeviationRecord:
    activity: str
    period: str
    group: str
    under: float
    over: float


@dataclass(frozen=True)
class FaceAggregate:
    gender: DemographicDistribution
    race: DemographicDistribution
    images_used: int
    images_excluded: int
    faces_kept: int
    faces_dropped: int


def aggregate_faces(
    corpus: "Corpus",
    model_id: str,
    activity: str,
    period: str,
    conf_threshold: float = CONF_DEFAULT,
) -> FaceAggregate:
    """Image-level demographic distributions for one (model, activity, period) cell.

    A face is kept only when both confidences are at or above the threshold.
    Each image contributes its own group proportions over surviving faces;
    images retaining no face are excluded and counted, not averaged as zeros.
    """
    if corpus.faces is None:
        raise DemographicsError("faces sidecar not attached")
    records = corpus.select(model_id=model_id, activity=activity, period=period)
    if not records:
        raise DemographicsError(
            f"no images for model={model_id!r} activity={activity!r} period={period!r}"
        )
    gender_sums: Counter = Counter()
    race_sums: Counter = Counter()
    used = 0
    kept = 0
    dropped = 0
    for record in records:
        faces = corpus.faces.get(record.image_id, ())
        surviving = [
            f
            for f in faces
            if f.conf_gender >= conf_threshold and f.conf_race >= conf_threshold
        ]
        dropped += len(faces) - len(surviving)
        kept += len(surviving)
        if not surviving:
            continue
        used += 1
        n = len(surviving)
        for f in surviving:
            gender_sums[f.gender] += 1.0 / n
            race_sums[f.race] += 1.0 / n
    if used == 0:
        raise DemographicsError(
            f"no image of model={model_id!r} activity={activity!r} period={period!r} "
            f"retains a face at confidence >= {conf_threshold}"
        )
    gender = DemographicDistribution(
        "gender", {g: v / used for g, v in sorted(gender_sums.items())}
    )
    race = DemographicDistribution(
        "race", {g: v / used for g, v in sorted(race_sums.items())}
    )
    return FaceAggregate(
        gender=gender,
        race=race,
        images_used=used,
        images_excluded=len(records) - used,
        faces_kept=kept,
        faces_dropped=dropped,
    )


def _template(axis_pair: str) -> str:
    name = {"race": "baseline_race.txt", "continent": "baseline_continent.txt"}[axis_pair]
    return resources.files("histeval.data").joinpath(name).read_text("utf-8")


def baseline_messages(activity_text: str, period_label: str, axes) -> list:
    """Chat messages asking for percentage breakdowns on the requested axes."""
    axes = tuple(axes)
    unknown = set(axes) - set(AXES)
    if unknown:
        raise DemographicsError(f"unknown baseline axes {sorted(unknown)}")
    if "race" in axes and "continent" in axes:
        raise DemographicsError("race and continent baselines use separate requests")
    body = _template("continent" if "continent" in axes else "race")
    text = body.format(activity=activity_text, period=period_label)
    return [{"role": "user", "text": text}]


_REPAIR_NOTE = (
    "The previous answer could not be parsed into percentages summing to 100. "
    "Reply again with one line per group in the form 'Group: NN%'."
)


def _parse_axis(text: str, axis: str, groups) -> dict:
    # Longest group names first so 'East Asian' is not consumed by 'Asian'-style overlaps.
    found = {}
    taken = []
    for group in sorted(groups, key=len, reverse=True):
        name = re.escape(group).replace(r"\ ", r"\s+")
        pattern = re.compile(
            rf"(?<![A-Za-z]){name}(?![A-Za-z])[^0-9%]{{0,24}}?([0-9]+(?:\.[0-9]+)?)\s*%?",
            re.IGNORECASE,
        )
        for m in pattern.finditer(text):
            span = m.span()
            if any(s < span[1] and span[0] < e for s, e in taken):
                continue
            found[group] = float(m.group(1))
            taken.append(span)
            break
    return found


def parse_baseline_reply(text: str, axes) -> dict:
    """Percent breakdowns per axis from a free-form reply.

    Each axis must account for 100 +/- 2 percent; within tolerance the shares
    are renormalized to sum exactly 1.
    """
    out = {}
    for axis in axes:
        values = _parse_axis(text, axis, AXIS_GROUPS[axis])
        total = sum(values.values())
        if not values or abs(total - 100.0) > PERCENT_SUM_TOL:
            raise DemographicsError(
                f"{axis} percentages sum to {total}, outside 100 +/- {PERCENT_SUM_TOL}"
            )
        out[axis] = DemographicDistribution(axis, {g: v / total for g, v in values.items()})
    return out


def llm_baseline(
    gateway: "Gateway",
    endpoint: "EndpointConfig",
    activity_text: str,
    period_label: str,
    axes=("gender", "race"),
) -> dict:
    """Query an endpoint for the plausible breakdown of one (activity, period) cell.

    A reply failing the 100 +/- 2 sum check is retried once with a repair
    instruction before surfacing an error.
    """
    messages = baseline_messages(activity_text, period_label, axes)
    reply = gateway.complete(endpoint, messages)
    try:
        return parse_baseline_reply(reply, axes)
    except DemographicsError:
        retry = messages + [
            {"role": "assistant", "text": reply},
            {"role": "user", "text": _REPAIR_NOTE},
        ]
        reply = gateway.complete(endpoint, retry)
        return parse_baseline_reply(reply, axes)


def deviation(
    model_dist: DemographicDistribution,
    baseline_dist: DemographicDistribution,
    activity: str = "",
    period: str = "",
) -> list:
    """One-sided representation gaps per group; absent groups count as share 0."""
    if model_dist.axis != baseline_dist.axis:
        raise DemographicsError(
            f"axis mismatch: {model_dist.axis!r} vs {baseline_dist.axis!r}"
        )
    groups = [
        g
        for g in AXIS_GROUPS[model_dist.axis]
        if g in model_dist.shares or g in baseline_dist.shares
    ]
    records = []
    for group in groups:
        p = model_dist.share(group)
        p_hat = baseline_dist.share(group)
        under = p_hat - p if p < p_hat else 0.0
        over = p - p_hat if p > p_hat else 0.0
        records.append(
            DeviationRecord(activity=activity, period=period, group=group, under=under, over=over)
        )
    return records


def aggregate_by_category(records, manifest) -> dict:
    """Mean under/over per (category, period, group) plus per-category summaries.

    The per-category summary averages over every activity-period cell in the
    category; its ``avg`` is the mean of all its per-group under and over values.
    """
    by_cat_period: dict = {}
    by_cat: dict = {}
    for rec in records:
        category = manifest.category_of(rec.activity).id
        by_cat_period.setdefault((category, rec.period, rec.group), []).append(rec)
        by_cat.setdefault(category, {}).setdefault(rec.group, []).append(rec)

    def _mean(values):
        return sum(values) / len(values)

    per_category_period = {
        key: {
            "under": _mean([r.under for r in recs]),
            "over": _mean([r.over for r in recs]),
        }
        for key, recs in sorted(by_cat_period.items())
    }
    per_category = {}
    for category, groups in sorted(by_cat.items()):
        summary = {
            group: {
                "under": _mean([r.under for r in recs]),
                "over": _mean([r.over for r in recs]),
            }
            for group, recs in sorted(groups.items())
        }
        cells = [v["under"] for v in summary.values()] + [v["over"] for v in summary.values()]
        per_category[category] = {"groups": summary, "avg": _mean(cells)}
    return {"per_category_period": per_category_period, "per_category": per_category}


def cohen_kappa(a, b) -> float:
    """Chance-corrected agreement between two label sequences."""
    if len(a) != len(b):
        raise DemographicsError("sequences must have equal length")
    if not a:
        raise DemographicsError("empty label sequences")
    n = len(a)
    po = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    pe = sum(counts_a[c] * counts_b.get(c, 0) for c in counts_a) / (n * n)
    if pe == 1.0:
        # Both raters constant on the same class; agreement is exact.
        return 1.0
    return (po - pe) / (1.0 - pe)


def cross_classifier_agreement(obs_a, obs_b, mapping=None) -> dict:
    """Percent agreement and Cohen's kappa, overall and one-vs-rest per class.

    ``mapping`` relabels both sequences before any statistic (label merges such
    as collapsing the two Asian categories).
    """
    if len(obs_a) != len(obs_b):
        raise DemographicsError("paired observations must have equal length")
    if not obs_a:
        raise DemographicsError("empty pairing")
    if mapping:
        obs_a = [mapping.get(x, x) for x in obs_a]
        obs_b = [mapping.get(x, x) for x in obs_b]
    n = len(obs_a)
    percent = sum(1 for x, y in zip(obs_a, obs_b) if x == y) / n
    per_class = {}
    for cls in sorted(set(obs_a) | set(obs_b)):
        bin_a = [x == cls for x in obs_a]
        bin_b = [x == cls for x in obs_b]
        per_class[cls] = {
            "percent": sum(1 for x, y in zip(bin_a, bin_b) if x == y) / n,
            "cohen_kappa": cohen_kappa(bin_a, bin_b),
        }
    return {
        "percent": percent,
        "cohen_kappa": cohen_kappa(obs_a, obs_b),
        "per_class": per_class,
    }


def mae_validation(estimates: dict, reference: dict) -> dict:
    """Mean absolute error between estimate and reference percentage tables.

    Both arguments map period -> {group: percentage points}. Returns per-group
    and per-period means plus the grand mean over all cells.
    """
    if set(estimates) != set(reference):
        raise DemographicsError(
            f"period sets differ: {sorted(estimates)} vs {sorted(reference)}"
        )
    if not estimates:
        raise DemographicsError("empty estimate table")
    per_group_cells: dict = {}
    per_period: dict = {}
    all_cells = []
    for period in sorted(estimates):
        est_row = estimates[period]
        ref_row = reference[period]
        if set(est_row) != set(ref_row):
            raise DemographicsError(
                f"group sets differ in period {period!r}: "
                f"{sorted(est_row)} vs {sorted(ref_row)}"
            )
        if not est_row:
            raise DemographicsError(f"period {period!r} has no cells")
        row_errors = []
        for group in sorted(est_row):
            err = abs(float(est_row[group]) - float(ref_row[group]))
            per_group_cells.setdefault(group, []).append(err)
            row_errors.append(err)
            all_cells.append(err)
        per_period[period] = sum(row_errors) / len(row_errors)
    per_group = {g: sum(v) / len(v) for g, v in sorted(per_group_cells.items())}
    return {
        "per_group": per_group,
        "per_period": per_period,
        "aggregate": sum(all_cells) / len(all_cells),
    }

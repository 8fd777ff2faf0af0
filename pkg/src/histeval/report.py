"""Pure renderers for machine-readable and human-readable result tables.

JSON structures are the source of truth; markdown and CSV derive from them.
Every renderer is deterministic: stable ordering everywhere, fixed float
precision in display strings (two decimals for dominance scores and
deviations).
"""

from __future__ import annotations

import csv
import io
import json

from .errors import ReportError

GROUP_ABBR = {
    "male": "M",
    "female": "F",
    "White": "W",
    "Black": "B",
    "Latino": "Lat",
    "East Asian": "EAs",
    "Southeast Asian": "SEAs",
    "Indian": "Ind",
    "Middle Eastern": "ME",
    "Africa": "Af",
    "Asia": "As",
    "Europe": "Eu",
    "North America": "NAm",
    "South America": "SAm",
    "Oceania": "Oc",
}

GROUP_ORDER = (
    "male",
    "female",
    "White",
    "Black",
    "Latino",
    "East Asian",
    "Southeast Asian",
    "Indian",
    "Middle Eastern",
    "Africa",
    "Asia",
    "Europe",
    "North America",
    "South America",
    "Oceania",
)

ARROW_UP = "↑"
ARROW_DOWN = "↓"
UNCHANGED = "↔"
STYLE_CHANGED = "⇄"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _vsd_cell(result) -> dict:
    return {
        "score": result.score,
        "dominant": result.dominant,
        "second": result.second,
        "ci_dominant": list(result.ci_dominant),
        "ci_second": list(result.ci_second),
        "significant": result.significant,
        "display": f"{_fmt(result.score)} & {result.dominant}"
        + ("" if result.significant else "*"),
    }


def render_vsd_table(results, mitigated=None) -> dict:
    """Dominance table: one row per period, one column per model.

    Non-significant cells carry a trailing asterisk. With a mitigated result
    set, each mitigated cell also gets a score-direction marker (up, down,
    unchanged) and a style-changed marker.
    """
    if not results:
        raise ReportError("no dominance results to render")
    base = {(r.period, r.model_id): r for r in results}
    periods = sorted({p for p, _ in base})
    models = sorted({m for _, m in base})
    rows = []
    mitigated_by_key = None
    if mitigated is not None:
        mitigated_by_key = {(r.period, r.model_id): r for r in mitigated}
        if {p for p, _ in mitigated_by_key} != set(periods):
            raise ReportError(
                "mitigated results cover a different period set than the base results"
            )
    for period in periods:
        cells = {}
        for model in models:
            result = base.get((period, model))
            if result is None:
                continue
            cells[model] = _vsd_cell(result)
        row = {"period": period, "cells": cells}
        if mitigated_by_key is not None:
            mitigation = {}
            for (mperiod, mmodel), mresult in mitigated_by_key.items():
                if mperiod != period or (period, mmodel) not in base:
                    continue
                base_result = base[(period, mmodel)]
                mit_score, base_score = round(mresult.score, 2), round(base_result.score, 2)
                direction = UNCHANGED
                if mit_score > base_score:
                    direction = ARROW_UP
                elif mit_score < base_score:
                    direction = ARROW_DOWN
                style_marker = (
                    STYLE_CHANGED if mresult.dominant != base_result.dominant else UNCHANGED
                )
                markers = direction + style_marker
                if markers == UNCHANGED + UNCHANGED:
                    markers = UNCHANGED
                cell = _vsd_cell(mresult)
                cell["markers"] = markers
                cell["display"] = f"{cell['display']} {markers}"
                mitigation[mmodel] = cell
            row["mitigated"] = mitigation
        rows.append(row)
    return {"models": models, "periods": periods, "rows": rows}


def vsd_table_markdown(table: dict) -> str:
    models = table["models"]
    has_mitigation = any("mitigated" in row for row in table["rows"])
    header = ["Period"] + models
    if has_mitigation:
        header += [f"{m} (mitigated)" for m in models]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in table["rows"]:
        cells = [row["period"]]
        cells += [row["cells"].get(m, {}).get("display", "") for m in models]
        if has_mitigation:
            cells += [row.get("mitigated", {}).get(m, {}).get("display", "") for m in models]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append(
        f"Legend: `*` dominance not statistically significant; {ARROW_UP}/{ARROW_DOWN} "
        f"score increase/decrease; {UNCHANGED} unchanged; {STYLE_CHANGED} style changed."
    )
    return "\n".join(lines) + "\n"


def _score_row(s) -> dict:
    return {
        "canonical_id": s.canonical_id,
        "period": s.period,
        "model": s.model_id,
        "n_detected": s.n_detected,
        "n_proposed": s.n_proposed,
        "N": s.N,
        "frequency": s.frequency,
        "severity": s.severity,
    }


def render_anachronism_report(scores, rates, k: int = 15) -> dict:
    """Score table plus per-model top-k rankings by frequency and severity."""
    rows = [_score_row(s) for s in scores]
    rows.sort(key=lambda r: (r["model"], r["period"], -r["frequency"], r["canonical_id"]))
    models = sorted({r["model"] for r in rows})
    top_frequency = {}
    top_severity = {}
    for model in models:
        model_rows = [r for r in rows if r["model"] == model]
        by_freq = sorted(model_rows, key=lambda r: (-r["frequency"], r["canonical_id"]))
        by_sev = sorted(model_rows, key=lambda r: (-r["severity"], r["canonical_id"]))
        top_frequency[model] = by_freq[:k]
        top_severity[model] = by_sev[:k]
    rates_out = {
        model: {period: rate for period, rate in sorted(periods.items())}
        for model, periods in sorted(rates.items())
    }
    return {
        "scores": rows,
        "overall_rates": rates_out,
        "top_frequency": top_frequency,
        "top_severity": top_severity,
        "k": k,
    }


def anachronism_markdown(report: dict) -> str:
    lines = []
    if report["overall_rates"]:
        lines.append("### Overall anachronism rate")
        lines.append("")
        lines.append("| Model | Period | Rate |")
        lines.append("|---|---|---|")
        for model, periods in report["overall_rates"].items():
            for period, rate in periods.items():
                lines.append(f"| {model} | {period} | {_fmt(rate)} |")
        lines.append("")
    for title, ranking in (
        ("frequency", report["top_frequency"]),
        ("severity", report["top_severity"]),
    ):
        lines.append(f"### Top {report['k']} elements by {title}")
        lines.append("")
        lines.append("| Model | Element | Period | Freq. (%) | Sev. |")
        lines.append("|---|---|---|---|---|")
        for model, rows in ranking.items():
            for r in rows:
                lines.append(
                    f"| {model} | {r['canonical_id']} | {r['period']} "
                    f"| {100 * r['frequency']:.3f} | {_fmt(r['severity'])} |"
                )
        lines.append("")
    return "\n".join(lines) + "\n"


def render_demographics_report(category_aggregate: dict, validations=None) -> dict:
    """Category-level deviation table with per-group U-/O- columns and Avg."""
    per_category = category_aggregate.get("per_category", {})
    groups_present = sorted(
        {g for cat in per_category.values() for g in cat["groups"]},
        key=lambda g: (GROUP_ORDER.index(g) if g in GROUP_ORDER else len(GROUP_ORDER), g),
    )
    columns = [f"U-{GROUP_ABBR.get(g, g)}" for g in groups_present] + [
        f"O-{GROUP_ABBR.get(g, g)}" for g in groups_present
    ]
    rows = []
    for category in sorted(per_category):
        entry = per_category[category]
        values = {}
        for g in groups_present:
            cell = entry["groups"].get(g, {"under": 0.0, "over": 0.0})
            values[f"U-{GROUP_ABBR.get(g, g)}"] = cell["under"]
            values[f"O-{GROUP_ABBR.get(g, g)}"] = cell["over"]
        rows.append({"category": category, "values": values, "avg": entry["avg"]})
    out = {"columns": columns + ["Avg"], "groups": groups_present, "rows": rows}
    if validations is not None:
        out["validations"] = validations
    return out


def demographics_markdown(report: dict) -> str:
    header = ["Category"] + report["columns"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in report["rows"]:
        cells = [row["category"]]
        cells += [f"{100 * row['values'][c]:.2f}" for c in report["columns"][:-1]]
        cells.append(f"**{100 * row['avg']:.2f}**")
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append("Values are percentage points vs the LLM-estimated baseline "
                 "(an estimate, not ground truth).")
    return "\n".join(lines) + "\n"


def to_canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(to_canonical_json(obj))


def rows_to_csv(rows, fieldnames) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in fieldnames})
    return buf.getvalue()

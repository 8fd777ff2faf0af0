"""Command-line pipeline orchestration.

Every subcommand operates on a run directory holding a ``run.json`` state
file plus one JSON artifact per completed stage; the corpus directory itself
is never written to. Commands are idempotent given identical inputs and
cache. Exit codes: 0 success, 1 validation error, 2 endpoint error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace as dc_replace
from pathlib import Path

from . import anachronism as anch
from . import demographics as demog
from . import report as reporting
from .corpus import attach_sidecar, ingest_corpus
from .errors import EndpointError, HistEvalError
from .gateway import Gateway, load_endpoints_file
from .manifest import build_manifest, save_manifest
from .style import (
    PrecisionProfile,
    ProbeConfig,
    VsdResult,
    bootstrap_vsd,
    classify,
    relabel_monochrome,
    style_distribution,
    train_linear_probe,
)

RUN_STATE = "run.json"
LOCK_FILE = ".lock"
CORPUS_INDEX = "corpus_index.jsonl"


class RunDir:
    def __init__(self, path):
        self.path = Path(path)

    @property
    def state_path(self) -> Path:
        return self.path / RUN_STATE

    def load_state(self) -> dict:
        if not self.state_path.is_file():
            return {"manifest": None, "corpus": None, "sidecars": {}, "stages": {}}
        return json.loads(self.state_path.read_text(encoding="utf-8"))

    def save_state(self, state: dict) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        self.state_path.write_text(
            json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def write_artifact(self, name: str, obj) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        reporting.write_json(self.path / name, obj)

    def read_artifact(self, name: str):
        path = self.path / name
        if not path.is_file():
            raise HistEvalError(
                f"run artifact {name!r} not found in {self.path}; "
                f"run the producing stage first"
            )
        return json.loads(path.read_text(encoding="utf-8"))

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        self._lock = self.path / LOCK_FILE
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise HistEvalError(
                f"run directory {self.path} is locked by another process "
                f"(remove {self._lock} if that process is gone)"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self._lock.unlink(missing_ok=True)
        return False


def _load_manifest(state):
    return build_manifest(state.get("manifest"))


def _load_corpus(run: RunDir, state):
    info = state.get("corpus")
    if not info:
        raise HistEvalError("no corpus ingested; run `histeval ingest` first")
    manifest = _load_manifest(state)
    snapshot = run.path / CORPUS_INDEX
    index = snapshot if snapshot.is_file() else info.get("index")
    corpus = ingest_corpus(info["root"], manifest, index=index)
    for kind, path in sorted(state.get("sidecars", {}).items()):
        corpus = attach_sidecar(corpus, kind, path)
    return corpus, manifest


def _gateway(args) -> Gateway:
    replay = not getattr(args, "record", False)
    return Gateway(cache_dir=args.cache, replay=replay, max_in_flight=args.max_in_flight)


def _endpoint_set(args) -> dict:
    if not args.endpoints:
        raise HistEvalError("--endpoints CONFIG is required for this command")
    return load_endpoints_file(args.endpoints)


def _role_endpoint(endpoint_set: dict, role: str, override=None):
    endpoint_id = override or endpoint_set.get(role)
    if not endpoint_id:
        raise HistEvalError(f"endpoint config names no {role!r} endpoint")
    try:
        return endpoint_set["endpoints"][endpoint_id]
    except KeyError:
        raise HistEvalError(f"unknown endpoint id {endpoint_id!r}") from None


# -- subcommands -------------------------------------------------------------


def cmd_manifest(args, run: RunDir) -> int:
    manifest = build_manifest(args.source)
    state = run.load_state()
    if args.action == "validate":
        print(
            f"manifest ok: {len(manifest.activities)} activities, "
            f"{len(manifest.categories)} categories, {len(manifest.periods)} periods, "
            f"{len(manifest)} prompts"
        )
        return 0
    state["manifest"] = args.source
    run.save_state(state)
    out = Path(args.out) if args.out else run.path / "manifest.json"
    save_manifest(manifest, out)
    prompts = [
        {"activity": p.activity, "period": p.period, "text": p.text}
        for p in manifest.prompts()
    ]
    run.write_artifact("prompts.json", prompts)
    print(f"wrote {out} and prompts.json ({len(prompts)} prompts)")
    return 0


def cmd_ingest(args, run: RunDir) -> int:
    state = run.load_state()
    if args.manifest:
        state["manifest"] = args.manifest
    manifest = _load_manifest(state)
    corpus = ingest_corpus(args.root, manifest, index=args.index)
    root = Path(args.root).resolve()
    with open(run.path / CORPUS_INDEX, "w", encoding="utf-8") as f:
        for r in corpus.records:
            row = {
                "image_id": r.image_id,
                "model_id": r.model_id,
                "activity": r.activity,
                "period": r.period,
                "replicate": r.replicate,
                "path": os.path.relpath(Path(r.path).resolve(), root),
                "sha256": r.sha256,
            }
            f.write(json.dumps(row, sort_keys=True) + "\n")
    state["corpus"] = {"root": str(root), "index": args.index}
    state["sidecars"] = {}
    run.save_state(state)
    counts = corpus.counts()
    print(f"ingested {len(corpus)} records from {root}")
    for model in sorted(counts):
        per_period = ", ".join(f"{p}={n}" for p, n in sorted(counts[model].items()))
        print(f"  {model}: {per_period}")
    return 0


def cmd_attach(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, _ = _load_corpus(run, state)
    attach_sidecar(corpus, args.kind, args.file)  # validates before recording
    state.setdefault("sidecars", {})[args.kind] = str(Path(args.file).resolve())
    run.save_state(state)
    print(f"attached {args.kind} sidecar from {args.file}")
    return 0


def _read_probe_training(emb_path, label_path):
    vectors = {}
    with open(emb_path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                vectors[row["id"]] = row["vector"]
    examples = []
    with open(label_path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                if row["id"] not in vectors:
                    raise HistEvalError(f"label id {row['id']!r} has no embedding")
                examples.append((vectors[row["id"]], row["label"]))
    return examples


def cmd_style_run(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, _ = _load_corpus(run, state)
    probe_info = None
    if corpus.styles is not None:
        observations = dict(corpus.styles)
    elif corpus.embeddings is not None:
        if not args.probe_train:
            raise HistEvalError(
                "embeddings sidecar attached but no --probe-train EMB LABELS given"
            )
        examples = _read_probe_training(*args.probe_train)
        probe = train_linear_probe(examples, ProbeConfig(seed=args.seed))
        probe_info = {
            "classes": list(probe.classes),
            "train_accuracy": probe.train_accuracy,
            "train_macro_f1": probe.train_macro_f1,
        }
        run.write_artifact(
            "probe.json",
            {
                "classes": list(probe.classes),
                "weights": probe.weights.tolist(),
                "bias": probe.bias.tolist(),
            },
        )
        observations = {
            image_id: classify(probe, vector, image_id=image_id)
            for image_id, vector in corpus.embeddings.items()
        }
    else:
        raise HistEvalError(
            "style run needs a 'styles' or 'embeddings' sidecar attached; neither is present"
        )

    relabeled = 0
    for image_id, obs in sorted(observations.items()):
        if obs.label != "photography":
            continue
        new_obs = relabel_monochrome(obs, corpus.record(image_id).path, args.threshold)
        if new_obs.label != obs.label:
            relabeled += 1
        observations[image_id] = new_obs

    corpus = dc_replace(corpus, styles=observations)
    profile = PrecisionProfile.perfect()
    if args.precision:
        doc = json.loads(Path(args.precision).read_text(encoding="utf-8"))
        profile = PrecisionProfile(
            precision=doc.get("precision", {}), confusion=doc.get("confusion")
        )
    results = []
    distributions = []
    for model in corpus.models():
        for period in sorted({r.period for r in corpus.select(model_id=model)}):
            dist = style_distribution(corpus, model, period)
            labels = [
                corpus.styles[r.image_id]
                for r in corpus.select(model_id=model, period=period)
            ]
            result = bootstrap_vsd(
                labels,
                profile,
                replicates=args.bootstrap,
                seed=args.seed,
                model_id=model,
                period=period,
            )
            distributions.append(
                {
                    "model": model,
                    "period": period,
                    "counts": dist.counts,
                    "proportions": dist.proportions,
                }
            )
            results.append(
                {
                    "model": model,
                    "period": period,
                    "score": result.score,
                    "dominant": result.dominant,
                    "second": result.second,
                    "second_share": result.second_share,
                    "ci_dominant": list(result.ci_dominant),
                    "ci_second": list(result.ci_second),
                    "significant": result.significant,
                    "replicates": result.replicates,
                    "n_labels": result.n_labels,
                }
            )
    artifact = {
        "results": results,
        "distributions": distributions,
        "threshold": args.threshold,
        "seed": args.seed,
        "replicates": args.bootstrap,
        "relabeled_monochrome": relabeled,
        "probe": probe_info,
    }
    run.write_artifact("style.json", artifact)
    state.setdefault("stages", {})["style"] = "style.json"
    run.save_state(state)
    print(f"style: {len(results)} (model, period) cells, {relabeled} relabeled monochrome")
    return 0


def _proposal_question(cluster_proposals) -> str:
    ordered = sorted(cluster_proposals, key=lambda p: (p.element, p.activity, p.period))
    return ordered[0].question


def cmd_anachronism_propose(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, manifest = _load_corpus(run, state)
    endpoint = _role_endpoint(_endpoint_set(args), "proposal")
    gateway = _gateway(args)
    proposals = []
    skipped = []
    for activity, period_id in corpus.pairs():
        period = manifest.period(period_id)
        if not period.anachronism_eligible:
            skipped.append([activity, period_id])
            continue
        prompt = manifest.prompt(activity, period_id)
        proposals.extend(anch.propose(gateway, endpoint, prompt, period))
    elements = anch.normalize(proposals)
    lookup = anch.canonical_map(elements)
    by_canonical: dict = {}
    for p in proposals:
        by_canonical.setdefault(lookup[p.element].canonical_id, []).append(p)
    artifact = {
        "proposals": [
            {
                "activity": p.activity,
                "period": p.period,
                "element": p.element,
                "question": p.question,
                "source_model": p.source_model,
            }
            for p in proposals
        ],
        "elements": [
            {
                "canonical_id": e.canonical_id,
                "representative": e.representative,
                "surface_forms": sorted(e.surface_forms),
                "question": _proposal_question(by_canonical[e.canonical_id]),
            }
            for e in sorted(elements, key=lambda e: e.canonical_id)
        ],
        "skipped_ineligible": skipped,
    }
    run.write_artifact("proposals.json", artifact)
    state.setdefault("stages", {})["proposals"] = "proposals.json"
    run.save_state(state)
    print(
        f"proposals: {len(proposals)} raw, {len(elements)} canonical elements, "
        f"{len(skipped)} ineligible pairs skipped"
    )
    return 0


def _load_proposals(run: RunDir):
    doc = run.read_artifact("proposals.json")
    proposals = [
        anch.AnachronismProposal(
            activity=p["activity"],
            period=p["period"],
            element=p["element"],
            question=p["question"],
            source_model=p["source_model"],
        )
        for p in doc["proposals"]
    ]
    questions = {e["canonical_id"]: e["question"] for e in doc["elements"]}
    elements = [
        anch.CanonicalElement(
            canonical_id=e["canonical_id"],
            representative=e["representative"],
            surface_forms=frozenset(e["surface_forms"]),
        )
        for e in doc["elements"]
    ]
    return proposals, elements, questions


def cmd_anachronism_verify(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, manifest = _load_corpus(run, state)
    endpoint_set = _endpoint_set(args)
    endpoints = [_role_endpoint(endpoint_set, "vqa", e) for e in endpoint_set["vqa"]] or []
    if not endpoints:
        raise HistEvalError("endpoint config names no 'vqa' endpoints")
    gateway = _gateway(args)
    proposals, elements, questions = _load_proposals(run)
    lookup = anch.canonical_map(elements)
    element_by_id = {e.canonical_id: e for e in elements}

    pair_elements: dict = {}
    for p in proposals:
        pair_elements.setdefault((p.activity, p.period), set()).add(
            lookup[p.element].canonical_id
        )

    tasks = []
    for model in corpus.models():
        for (activity, period), canonical_ids in sorted(pair_elements.items()):
            for record in corpus.select(model_id=model, activity=activity, period=period):
                for canonical_id in sorted(canonical_ids):
                    tasks.append((record, element_by_id[canonical_id]))

    def run_task(task):
        record, element = task
        return anch.verify(gateway, record, element, questions[element.canonical_id], endpoints)

    with ThreadPoolExecutor(max_workers=args.max_in_flight) as pool:
        verdicts = list(pool.map(run_task, tasks))
    verdicts.sort(key=lambda v: (v.image_id, v.canonical_id))
    with open(run.path / "verdicts.jsonl", "w", encoding="utf-8") as f:
        for v in verdicts:
            f.write(
                json.dumps(
                    {
                        "image_id": v.image_id,
                        "canonical_id": v.canonical_id,
                        "answers": dict(sorted(v.answers.items())),
                        "majority": v.majority,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    state.setdefault("stages", {})["verdicts"] = "verdicts.jsonl"
    run.save_state(state)
    detected = sum(1 for v in verdicts if v.majority == anch.DETECTED)
    print(f"verified {len(verdicts)} (image, element) pairs; {detected} detected")
    return 0


def _load_verdicts(run: RunDir):
    path = run.path / "verdicts.jsonl"
    if not path.is_file():
        raise HistEvalError("verdicts.jsonl not found; run `anachronism verify` first")
    verdicts = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                verdicts.append(
                    anch.AnachronismVerdict(
                        image_id=row["image_id"],
                        canonical_id=row["canonical_id"],
                        answers=row["answers"],
                        majority=row["majority"],
                    )
                )
    return verdicts


def cmd_anachronism_score(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, manifest = _load_corpus(run, state)
    proposals, elements, _ = _load_proposals(run)
    verdicts = _load_verdicts(run)
    scores = []
    rates: dict = {}
    for model in corpus.models():
        for period in sorted({r.period for r in corpus.select(model_id=model)}):
            if not manifest.period(period).anachronism_eligible:
                continue
            if not any(p.period == period for p in proposals):
                continue
            scores.extend(
                anch.score(verdicts, proposals, corpus, model, period, elements=elements)
            )
            rates.setdefault(model, {})[period] = anch.overall_rate(
                verdicts, corpus, model, period
            )
    artifact = {
        "scores": [
            {
                "canonical_id": s.canonical_id,
                "period": s.period,
                "model": s.model_id,
                "n_detected": s.n_detected,
                "n_proposed": s.n_proposed,
                "N": s.N,
                "frequency": s.frequency,
                "severity": s.severity,
            }
            for s in scores
        ],
        "overall_rates": rates,
    }
    if corpus.annotations:
        artifact["human_agreement"] = anch.human_agreement(verdicts, corpus.annotations)
    run.write_artifact("anachronism_scores.json", artifact)
    state.setdefault("stages", {})["anachronism"] = "anachronism_scores.json"
    run.save_state(state)
    print(f"scored {len(scores)} element rows across {len(rates)} model(s)")
    return 0


def cmd_demographics_run(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, manifest = _load_corpus(run, state)
    if corpus.faces is None:
        raise HistEvalError("demographics run needs a 'faces' sidecar attached")
    endpoint = _role_endpoint(_endpoint_set(args), "baseline", args.baseline_endpoint)
    gateway = _gateway(args)

    include_latino = args.groups == "full"
    race_groups = demog.RACE_GROUPS if include_latino else demog.METRIC_RACE_GROUPS
    aggregates = []
    baselines: dict = {}
    deviations = []
    undefined_cells = []
    for activity, period in corpus.pairs():
        key = (activity, period)
        if key not in baselines:
            activity_text = manifest.activity(activity).text
            period_label = manifest.period(period).label
            baselines[key] = demog.llm_baseline(
                gateway, endpoint, activity_text, period_label, axes=("gender", "race")
            )
        for model in corpus.models():
            if not corpus.select(model_id=model, activity=activity, period=period):
                continue
            try:
                agg = demog.aggregate_faces(corpus, model, activity, period, args.conf)
            except demog.DemographicsError as exc:
                undefined_cells.append(
                    {"model": model, "activity": activity, "period": period, "reason": str(exc)}
                )
                continue
            aggregates.append(
                {
                    "model": model,
                    "activity": activity,
                    "period": period,
                    "gender": agg.gender.shares,
                    "race": agg.race.shares,
                    "images_used": agg.images_used,
                    "images_excluded": agg.images_excluded,
                    "faces_kept": agg.faces_kept,
                    "faces_dropped": agg.faces_dropped,
                }
            )
            base = baselines[key]
            deviations += [
                {
                    "model": model,
                    "axis": "gender",
                    "activity": d.activity,
                    "period": d.period,
                    "group": d.group,
                    "under": d.under,
                    "over": d.over,
                }
                for d in demog.deviation(agg.gender, base["gender"], activity, period)
            ]
            try:
                model_race = agg.race.restricted(race_groups)
            except demog.DemographicsError as exc:
                undefined_cells.append(
                    {"model": model, "activity": activity, "period": period, "reason": str(exc)}
                )
                continue
            base_race = (
                base["race"].restricted(race_groups)
                if not include_latino
                else base["race"]
            )
            deviations += [
                {
                    "model": model,
                    "axis": "race",
                    "activity": d.activity,
                    "period": d.period,
                    "group": d.group,
                    "under": d.under,
                    "over": d.over,
                }
                for d in demog.deviation(model_race, base_race, activity, period)
            ]

    per_model_category = {}
    for model in corpus.models():
        records = [
            demog.DeviationRecord(
                activity=d["activity"],
                period=d["period"],
                group=d["group"],
                under=d["under"],
                over=d["over"],
            )
            for d in deviations
            if d["model"] == model
        ]
        if records:
            per_model_category[model] = demog.aggregate_by_category(records, manifest)

    artifact = {
        "aggregates": aggregates,
        "baselines": [
            {
                "activity": activity,
                "period": period,
                "gender": dists["gender"].shares,
                "race": dists["race"].shares,
            }
            for (activity, period), dists in sorted(baselines.items())
        ],
        "deviations": deviations,
        "category": {
            model: {
                "per_category": agg["per_category"],
                "per_category_period": {
                    "|".join(k): v for k, v in agg["per_category_period"].items()
                },
            }
            for model, agg in sorted(per_model_category.items())
        },
        "conf_threshold": args.conf,
        "include_latino": include_latino,
        "baseline_note": "baselines are LLM estimates, not historical ground truth",
        "undefined_cells": undefined_cells,
    }
    run.write_artifact("demographics.json", artifact)
    state.setdefault("stages", {})["demographics"] = "demographics.json"
    run.save_state(state)
    print(
        f"demographics: {len(aggregates)} cells, {len(baselines)} baselines, "
        f"{len(undefined_cells)} undefined cells"
    )
    return 0


def cmd_validate_mae(args, run: RunDir) -> int:
    state = run.load_state()
    reference: dict = {}
    with open(args.reference, encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            reference.setdefault(row["period"], {})[row["group"]] = float(
                row["share_percent"]
            )
    if args.estimates:
        estimates = json.loads(Path(args.estimates).read_text(encoding="utf-8"))
        estimates = {p: {g: float(v) for g, v in row.items()} for p, row in estimates.items()}
    else:
        doc = run.read_artifact("demographics.json")
        sums: dict = {}
        counts: dict = {}
        for row in doc["baselines"]:
            period = row["period"]
            for axis in ("gender", "race"):
                for group, share in row[axis].items():
                    sums.setdefault(period, {}).setdefault(group, 0.0)
                    counts.setdefault(period, {}).setdefault(group, 0)
                    sums[period][group] += share * 100.0
                    counts[period][group] += 1
        estimates = {
            period: {
                group: sums[period][group] / counts[period][group]
                for group in reference.get(period, {})
                if group in sums[period]
            }
            for period in reference
            if period in sums
        }
    result = demog.mae_validation(estimates, reference)
    run.write_artifact("validate_mae.json", result)
    state.setdefault("stages", {})["validate_mae"] = "validate_mae.json"
    run.save_state(state)
    print(f"MAE aggregate: {result['aggregate']:.2f} percentage points")
    return 0


def _face_labels(path):
    rows = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                rows[row["image_id"]] = row.get("faces", [])
    return rows


def cmd_validate_agreement(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, _ = _load_corpus(run, state)
    if corpus.faces is None:
        raise HistEvalError("validate agreement needs a 'faces' sidecar attached")
    other = _face_labels(args.other)
    gender_a, gender_b, race_a, race_b = [], [], [], []
    skipped = 0
    for image_id, faces in sorted(corpus.faces.items()):
        other_faces = other.get(image_id)
        if other_faces is None or len(other_faces) != len(faces):
            skipped += 1
            continue
        for mine, theirs in zip(faces, other_faces):
            gender_a.append(mine.gender)
            gender_b.append(theirs["gender"])
            race_a.append(mine.race)
            race_b.append(theirs["race"])
    mapping = None if args.no_asian_merge else demog.ASIAN_MERGE
    result = {
        "gender": demog.cross_classifier_agreement(gender_a, gender_b),
        "race": demog.cross_classifier_agreement(race_a, race_b, mapping=mapping),
        "n_faces": len(gender_a),
        "n_images_skipped": skipped,
        "asian_merge": not args.no_asian_merge,
    }
    run.write_artifact("validate_agreement.json", result)
    state.setdefault("stages", {})["validate_agreement"] = "validate_agreement.json"
    run.save_state(state)
    print(
        f"agreement: gender {result['gender']['percent']:.3f} "
        f"(kappa {result['gender']['cohen_kappa']:.3f}), "
        f"race {result['race']['percent']:.3f} (kappa {result['race']['cohen_kappa']:.3f})"
    )
    return 0


def _vsd_results_from_artifact(doc) -> list:
    return [
        VsdResult(
            model_id=r["model"],
            period=r["period"],
            score=r["score"],
            dominant=r["dominant"],
            second=r["second"],
            ci_dominant=tuple(r["ci_dominant"]),
            ci_second=tuple(r["ci_second"]),
            significant=r["significant"],
            replicates=r["replicates"],
            second_share=r.get("second_share", 0.0),
            n_labels=r.get("n_labels", 0),
        )
        for r in doc["results"]
    ]


def cmd_report(args, run: RunDir) -> int:
    state = run.load_state()
    corpus, _ = _load_corpus(run, state)
    stages = state.get("stages", {})
    report: dict = {
        "schema": "histeval-report/1",
        "corpus": {
            "root": state["corpus"]["root"],
            "records": len(corpus),
            "models": list(corpus.models()),
            "periods": list(corpus.periods()),
            "counts": corpus.counts(),
        },
    }
    markdown = ["# Evaluation report", ""]
    csv_files = {}

    if "style" in stages:
        doc = run.read_artifact(stages["style"])
        results = _vsd_results_from_artifact(doc)
        mitigated = None
        if args.compare:
            other = RunDir(args.compare)
            mitigated_doc = other.read_artifact("style.json")
            mitigated = _vsd_results_from_artifact(mitigated_doc)
        table = reporting.render_vsd_table(results, mitigated=mitigated)
        report["style"] = {
            "table": table,
            "distributions": doc["distributions"],
            "relabeled_monochrome": doc["relabeled_monochrome"],
        }
        markdown += ["## Visual style dominance", "", reporting.vsd_table_markdown(table)]
        csv_rows = [
            {
                **{k: r[k] for k in ("model", "period", "score", "dominant", "second")},
                "ci_dominant_lo": r["ci_dominant"][0],
                "ci_dominant_hi": r["ci_dominant"][1],
                "ci_second_lo": r["ci_second"][0],
                "ci_second_hi": r["ci_second"][1],
                "significant": r["significant"],
            }
            for r in doc["results"]
        ]
        csv_files["style.csv"] = reporting.rows_to_csv(
            csv_rows,
            [
                "model",
                "period",
                "score",
                "dominant",
                "second",
                "ci_dominant_lo",
                "ci_dominant_hi",
                "ci_second_lo",
                "ci_second_hi",
                "significant",
            ],
        )

    if "anachronism" in stages:
        doc = run.read_artifact(stages["anachronism"])
        scores = [
            anch.AnachronismScore(
                canonical_id=s["canonical_id"],
                period=s["period"],
                model_id=s["model"],
                n_detected=s["n_detected"],
                n_proposed=s["n_proposed"],
                N=s["N"],
                frequency=s["frequency"],
                severity=s["severity"],
            )
            for s in doc["scores"]
        ]
        rendered = reporting.render_anachronism_report(scores, doc["overall_rates"])
        if "human_agreement" in doc:
            rendered["human_agreement"] = doc["human_agreement"]
        report["anachronism"] = rendered
        markdown += ["## Historical consistency", "", reporting.anachronism_markdown(rendered)]
        csv_files["anachronism_scores.csv"] = reporting.rows_to_csv(
            doc["scores"],
            [
                "model",
                "period",
                "canonical_id",
                "n_detected",
                "n_proposed",
                "N",
                "frequency",
                "severity",
            ],
        )

    if "demographics" in stages:
        doc = run.read_artifact(stages["demographics"])
        validations = {}
        if "validate_mae" in stages:
            validations["mae"] = run.read_artifact(stages["validate_mae"])
        if "validate_agreement" in stages:
            validations["agreement"] = run.read_artifact(stages["validate_agreement"])
        demo_section = {
            "include_latino": doc["include_latino"],
            "baseline_note": doc["baseline_note"],
            "undefined_cells": doc["undefined_cells"],
            "tables": {},
        }
        markdown += ["## Demographic representation", ""]
        for model, aggregate in sorted(doc["category"].items()):
            rendered = reporting.render_demographics_report(
                aggregate, validations=validations or None
            )
            demo_section["tables"][model] = rendered
            markdown += [f"### {model}", "", reporting.demographics_markdown(rendered)]
        report["demographics"] = demo_section
        csv_files["demographic_deviations.csv"] = reporting.rows_to_csv(
            doc["deviations"],
            ["model", "axis", "activity", "period", "group", "under", "over"],
        )
        if validations:
            report["validation"] = validations

    run.write_artifact("report.json", report)
    (run.path / "report.md").write_text("\n".join(markdown) + "\n", encoding="utf-8")
    for name, content in csv_files.items():
        (run.path / name).write_text(content, encoding="utf-8")
    print(f"wrote report.json, report.md and {len(csv_files)} CSV file(s) to {run.path}")
    return 0


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_gateway_args(parser):
    parser.add_argument("--endpoints", help="endpoint-set config file (JSON or TOML)")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--replay",
        action="store_true",
        default=True,
        help="serve all completions from the cache; never touch the network (default)",
    )
    mode.add_argument(
        "--record",
        dest="record",
        action="store_true",
        help="query endpoints and record replies into the cache",
    )
    parser.add_argument("--cache", help="response cache directory (default RUN/cache)")
    parser.add_argument("--max-in-flight", type=int, default=4)


def build_parser() -> _Parser:
    parser = _Parser(prog="histeval", description=__doc__)
    parser.add_argument("--run", default="run", help="run directory (default ./run)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("manifest", help="emit or validate the prompt grid")
    p.add_argument("action", choices=["build", "validate"])
    p.add_argument("--source", help="manifest JSON (default: bundled grid)")
    p.add_argument("--out", help="output path for `build`")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("ingest", help="index an image corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--index", help="explicit index.jsonl overriding the directory layout")
    p.add_argument("--manifest", help="manifest JSON (default: bundled grid)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("attach", help="attach a sidecar observation file")
    p.add_argument("--kind", required=True, choices=["styles", "embeddings", "faces", "annotations"])
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_attach)

    p = sub.add_parser("style", help="stylistic pillar")
    style_sub = p.add_subparsers(dest="action", required=True)
    pr = style_sub.add_parser("run")
    pr.add_argument("--probe-train", nargs=2, metavar=("EMB", "LABELS"))
    pr.add_argument("--threshold", type=float, default=10.0)
    pr.add_argument("--bootstrap", type=int, default=5000)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--precision", help="precision profile JSON")
    pr.set_defaults(func=cmd_style_run)

    p = sub.add_parser("anachronism", help="historical-consistency pillar")
    anach_sub = p.add_subparsers(dest="action", required=True)
    pp = anach_sub.add_parser("propose")
    _add_gateway_args(pp)
    pp.set_defaults(func=cmd_anachronism_propose)
    pv = anach_sub.add_parser("verify")
    _add_gateway_args(pv)
    pv.set_defaults(func=cmd_anachronism_verify)
    ps = anach_sub.add_parser("score")
    ps.set_defaults(func=cmd_anachronism_score)

    p = sub.add_parser("demographics", help="demographic-representation pillar")
    demo_sub = p.add_subparsers(dest="action", required=True)
    pd = demo_sub.add_parser("run")
    _add_gateway_args(pd)
    pd.add_argument("--baseline-endpoint", help="endpoint id overriding the config's baseline role")
    pd.add_argument("--conf", type=float, default=0.7)
    pd.add_argument(
        "--groups",
        choices=["metric", "full"],
        default="metric",
        help="race group set: 'metric' renormalizes Latino away, 'full' keeps it",
    )
    pd.set_defaults(func=cmd_demographics_run)

    p = sub.add_parser("validate", help="validation statistics")
    val_sub = p.add_subparsers(dest="action", required=True)
    pm = val_sub.add_parser("mae")
    pm.add_argument("--reference", required=True, help="CSV with period,group,share_percent")
    pm.add_argument("--estimates", help="JSON {period: {group: percent}} overriding run baselines")
    pm.set_defaults(func=cmd_validate_mae)
    pa = val_sub.add_parser("agreement")
    pa.add_argument("--other", required=True, help="faces JSONL from another classifier")
    pa.add_argument("--no-asian-merge", action="store_true")
    pa.set_defaults(func=cmd_validate_agreement)

    p = sub.add_parser("report", help="assemble report.json / report.md / CSVs")
    p.add_argument("--compare", help="other run directory treated as the mitigated corpus")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "cache") and not args.cache:
        args.cache = str(Path(args.run) / "cache")
    try:
        with RunDir(args.run) as run:
            return args.func(args, run)
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return 2
    except HistEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

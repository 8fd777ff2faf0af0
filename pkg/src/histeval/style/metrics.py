"""Per-period style distributions, dominance scores, and their bootstrap CIs.

The dominance score of a (model, period) cell is the largest single-style
share. Confidence intervals come from resampling image labels with
replacement and perturbing each sampled label by the classifier's per-class
precision (kept with probability precision[c], otherwise reassigned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import StyleError
from .classes import CLASS_ORDER, MONOCHROME, PRE_RELABEL_CLASSES

PROFILE_ROW_TOL = 1e-6


@dataclass(frozen=True)
class StyleDistribution:
    model_id: str
    period: str
    counts: dict
    proportions: dict

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class PrecisionProfile:
    """Per-class precision, optionally with a full predicted->true confusion."""

    precision: dict
    confusion: dict | None = None

    def __post_init__(self):
        for cls, value in self.precision.items():
            if cls not in CLASS_ORDER:
                raise StyleError(f"unknown class {cls!r} in precision profile")
            if not 0.0 <= value <= 1.0:
                raise StyleError(f"precision[{cls!r}]={value} outside [0, 1]")
        if self.confusion is not None:
            for predicted, row in self.confusion.items():
                total = sum(row.values())
                if abs(total - 1.0) > PROFILE_ROW_TOL:
                    raise StyleError(
                        f"confusion row {predicted!r} sums to {total}, expected 1"
                    )
                diag = row.get(predicted, 0.0)
                expected = self.precision.get(predicted)
                if expected is not None and abs(diag - expected) > PROFILE_ROW_TOL:
                    raise StyleError(
                        f"precision[{predicted!r}]={expected} does not equal "
                        f"confusion diagonal {diag}"
                    )

    def precision_for(self, cls: str) -> float:
        """Monochrome inherits the photography precision unless given its own."""
        if cls in self.precision:
            return self.precision[cls]
        if cls == MONOCHROME and "photography" in self.precision:
            return self.precision["photography"]
        return 1.0

    @classmethod
    def perfect(cls) -> "PrecisionProfile":
        return cls(precision={c: 1.0 for c in CLASS_ORDER})


@dataclass(frozen=True)
class VsdResult:
    model_id: str
    period: str
    score: float
    dominant: str
    second: str
    ci_dominant: tuple
    ci_second: tuple
    significant: bool
    replicates: int
    second_share: float = 0.0
    n_labels: int = 0


def style_distribution(corpus, model_id: str, period: str) -> StyleDistribution:
    """Label histogram over the six classes for one (model, period) cell."""
    if corpus.styles is None:
        raise StyleError("styles sidecar not attached")
    records = corpus.select(model_id=model_id, period=period)
    if not records:
        raise StyleError(f"no images for model={model_id!r} period={period!r}")
    missing = [r.image_id for r in records if r.image_id not in corpus.styles]
    if missing:
        raise StyleError(
            f"{len(missing)} image(s) of model={model_id!r} period={period!r} "
            f"lack style labels: {missing[:5]}{'...' if len(missing) > 5 else ''}"
        )
    counts = {c: 0 for c in CLASS_ORDER}
    for r in records:
        counts[corpus.styles[r.image_id].label] += 1
    return distribution_from_counts(model_id, period, counts)


def distribution_from_counts(model_id: str, period: str, counts: dict) -> StyleDistribution:
    full = {c: int(counts.get(c, 0)) for c in CLASS_ORDER}
    unknown = set(counts) - set(CLASS_ORDER)
    if unknown:
        raise StyleError(f"unknown classes in counts: {sorted(unknown)}")
    total = sum(full.values())
    if total == 0:
        raise StyleError("empty style distribution")
    proportions = {c: n / total for c, n in full.items()}
    return StyleDistribution(model_id, period, full, proportions)


def vsd(dist: StyleDistribution) -> tuple:
    """(score, dominant, second); ties resolve by the canonical class order."""
    if dist.total == 0:
        raise StyleError("empty style distribution")
    ordered = sorted(
        CLASS_ORDER, key=lambda c: (-dist.proportions[c], CLASS_ORDER.index(c))
    )
    dominant, second = ordered[0], ordered[1]
    return dist.proportions[dominant], dominant, second


def _replacement_cdfs(profile: PrecisionProfile) -> np.ndarray:
    """Row-stochastic replacement distributions as cumulative sums.

    With a confusion matrix, the off-diagonal row renormalized; otherwise
    uniform over the other four pre-relabel classes (monochrome reassigns as
    photography does).
    """
    k = len(CLASS_ORDER)
    rows = np.zeros((k, k))
    for i, cls in enumerate(CLASS_ORDER):
        row = None
        if profile.confusion is not None and cls in profile.confusion:
            raw = dict(profile.confusion[cls])
            raw.pop(cls, None)
            total = sum(raw.values())
            if total > 0:
                row = np.zeros(k)
                for target, mass in raw.items():
                    if target not in CLASS_ORDER:
                        raise StyleError(f"unknown class {target!r} in confusion row")
                    row[CLASS_ORDER.index(target)] = mass / total
        if row is None:
            effective = "photography" if cls == MONOCHROME else cls
            others = [c for c in PRE_RELABEL_CLASSES if c != effective]
            row = np.zeros(k)
            for target in others:
                row[CLASS_ORDER.index(target)] = 1.0 / len(others)
        rows[i] = row
    return np.cumsum(rows, axis=1)


def bootstrap_vsd(
    labels,
    profile: PrecisionProfile | None = None,
    replicates: int = 5000,
    level: float = 0.95,
    seed: int = 0,
    model_id: str = "",
    period: str = "",
) -> VsdResult:
    """Dominance score with precision-aware bootstrap confidence intervals.

    Each replicate resamples labels with replacement, then independently keeps
    or reassigns every sampled label according to the profile, and recomputes
    the shares of the point-estimate dominant and runner-up styles. The CI is
    the empirical (1-level)/2 percentile band; dominance is significant when
    the dominant band lies wholly above the runner-up band. Replicates draw
    from seed-derived child streams, so results do not depend on execution
    order.
    """
    if replicates < 1:
        raise StyleError("replicates must be >= 1")
    if not 0.0 < level < 1.0:
        raise StyleError("level must lie in (0, 1)")
    if profile is None:
        profile = PrecisionProfile.perfect()
    names = [obs.label if hasattr(obs, "label") else str(obs) for obs in labels]
    if not names:
        raise StyleError("no labels to bootstrap")
    counts: dict = {}
    for name in names:
        if name not in CLASS_ORDER:
            raise StyleError(f"unknown style label {name!r}")
        counts[name] = counts.get(name, 0) + 1
    dist = distribution_from_counts(model_id, period, counts)
    score, dominant, second = vsd(dist)

    codes = np.array([CLASS_ORDER.index(name) for name in names])
    keep_p = np.array([profile.precision_for(c) for c in CLASS_ORDER])
    cdfs = _replacement_cdfs(profile)
    dom_idx = CLASS_ORDER.index(dominant)
    sec_idx = CLASS_ORDER.index(second)
    n = len(codes)

    dom_shares = np.empty(replicates)
    sec_shares = np.empty(replicates)
    children = np.random.SeedSequence(seed).spawn(replicates)
    for i in range(replicates):
        rng = np.random.default_rng(children[i])
        sample = codes[rng.integers(0, n, n)]
        keep = rng.random(n) < keep_p[sample]
        if not keep.all():
            flipped = sample[~keep]
            draws = rng.random(flipped.shape[0])
            sample = sample.copy()
            sample[~keep] = (cdfs[flipped] <= draws[:, None]).sum(axis=1)
        dom_shares[i] = (sample == dom_idx).mean()
        sec_shares[i] = (sample == sec_idx).mean()

    lo_q = 100 * (1 - level) / 2
    hi_q = 100 - lo_q
    ci_dom = (float(np.percentile(dom_shares, lo_q)), float(np.percentile(dom_shares, hi_q)))
    ci_sec = (float(np.percentile(sec_shares, lo_q)), float(np.percentile(sec_shares, hi_q)))
    return VsdResult(
        model_id=model_id,
        period=period,
        score=score,
        dominant=dominant,
        second=second,
        ci_dominant=ci_dom,
        ci_second=ci_sec,
        significant=ci_dom[0] > ci_sec[1],
        replicates=replicates,
        second_share=dist.proportions[second],
        n_labels=n,
    )

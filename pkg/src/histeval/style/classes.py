"""Style label vocabulary and per-image observations.

Five classifier classes plus the post-processing ``monochrome`` label
(photography relabeled by low colorfulness). All tie-breaking anywhere in the
style pillar uses ``CLASS_ORDER``.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import StyleError

PRE_RELABEL_CLASSES = ("drawing", "engraving", "illustration", "painting", "photography")
MONOCHROME = "monochrome"
CLASS_ORDER = PRE_RELABEL_CLASSES + (MONOCHROME,)

PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class StyleObservation:
    image_id: str
    label: str
    probs: dict | None = None

    def __post_init__(self):
        if self.label not in CLASS_ORDER:
            raise StyleError(f"unknown style label {self.label!r} for {self.image_id!r}")
        if self.probs is not None:
            if MONOCHROME in self.probs:
                raise StyleError(
                    f"{self.image_id!r}: probs must not contain {MONOCHROME!r}"
                )
            unknown = set(self.probs) - set(PRE_RELABEL_CLASSES)
            if unknown:
                raise StyleError(f"{self.image_id!r}: unknown classes in probs: {sorted(unknown)}")
            total = sum(self.probs.values())
            if abs(total - 1.0) > PROB_SUM_TOL:
                raise StyleError(
                    f"{self.image_id!r}: probs sum to {total}, expected 1 +/- {PROB_SUM_TOL}"
                )

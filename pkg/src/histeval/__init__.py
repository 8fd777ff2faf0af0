"""Evaluation engine for historical representation in text-to-image corpora.

Three pillars over an ingested image corpus plus pluggable LLM/VLM endpoints:
implicit stylistic associations (dominance scores with precision-aware
bootstrap CIs), historical consistency (LLM-proposed anachronisms verified by
a VQA ensemble), and demographic representation (face observations vs
LLM-estimated baselines).
"""

__version__ = "0.1.0"

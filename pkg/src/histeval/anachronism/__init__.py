from .metrics import AnachronismScore, fleiss_kappa, human_agreement, overall_rate, score
from .normalize import (
    SIMILARITY_THRESHOLD,
    CanonicalElement,
    canonical_id_for,
    canonical_map,
    normalize,
    similarity,
)
from .proposals import (
    QUESTION_SUFFIX,
    AnachronismProposal,
    parse_proposal_reply,
    proposal_messages,
    propose,
)
from .verify import (
    ABSTAIN,
    DETECTED,
    NOT_DETECTED,
    AnachronismVerdict,
    majority_outcome,
    parse_yes_no,
    verify,
    vqa_messages,
)

__all__ = [
    "ABSTAIN",
    "DETECTED",
    "NOT_DETECTED",
    "QUESTION_SUFFIX",
    "SIMILARITY_THRESHOLD",
    "AnachronismProposal",
    "AnachronismScore",
    "AnachronismVerdict",
    "CanonicalElement",
    "canonical_id_for",
    "canonical_map",
    "fleiss_kappa",
    "human_agreement",
    "majority_outcome",
    "normalize",
    "overall_rate",
    "parse_proposal_reply",
    "parse_yes_no",
    "proposal_messages",
    "propose",
    "score",
    "similarity",
    "verify",
    "vqa_messages",
]

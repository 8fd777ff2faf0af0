"""VQA-ensemble verification of proposed anachronisms.

Each configured vision endpoint answers the element's yes/no question for one
image; the verdict is the majority over non-abstaining endpoints. Ties and
all-abstain resolve to not_detected, a deliberate bias against over-reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import AnachronismError, EndpointError, ReplayMissError

DETECTED = "detected"
NOT_DETECTED = "not_detected"

YES = "yes"
NO = "no"
ABSTAIN = "abstain"


@dataclass(frozen=True)
class AnachronismVerdict:
    image_id: str
    canonical_id: str
    answers: dict
    majority: str


def parse_yes_no(text: str) -> str:
    """Leading yes/no token of a reply; anything else abstains."""
    for token in text.casefold().split():
        word = token.strip(".,!:;\"'*()[]`")
        if not word:
            continue
        if word == YES:
            return YES
        if word == NO:
            return NO
        return ABSTAIN
    return ABSTAIN


def majority_outcome(answers: dict) -> str:
    yes = sum(1 for a in answers.values() if a == YES)
    no = sum(1 for a in answers.values() if a == NO)
    return DETECTED if yes > no else NOT_DETECTED


def vqa_messages(question: str, image) -> list:
    return [{"role": "user", "text": question, "image": image}]


def verify(gateway, image_record, element, question: str, endpoints) -> AnachronismVerdict:
    """Ensemble verdict for one (image, element) pair.

    An endpoint that keeps failing after the gateway's retries records an
    abstain; a replay-cache miss is a configuration problem and propagates.
    """
    endpoints = list(endpoints)
    if not endpoints:
        raise AnachronismError("verify requires at least one endpoint")
    messages = vqa_messages(question, image_record.path)
    answers = {}
    for endpoint in endpoints:
        try:
            reply = gateway.complete(endpoint, messages)
        except ReplayMissError:
            raise
        except EndpointError:
            answers[endpoint.endpoint_id] = ABSTAIN
            continue
        answers[endpoint.endpoint_id] = parse_yes_no(reply)
    return AnachronismVerdict(
        image_id=image_record.image_id,
        canonical_id=element.canonical_id if hasattr(element, "canonical_id") else str(element),
        answers=answers,
        majority=majority_outcome(answers),
    )

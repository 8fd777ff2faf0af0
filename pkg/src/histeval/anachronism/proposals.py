"""LLM-guided anachronism proposal.

For an eligible (activity, period) prompt the endpoint returns a JSON object
listing candidate anachronistic elements together with one yes/no
identification question each. A reply violating that contract is retried once
with a repair instruction, then surfaced as an error.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

from ..errors import AnachronismError
from ..manifest import Period, PromptSpec

QUESTION_SUFFIX = "Answer with 'yes' or 'no'."

ELEMENTS_FIELD = "possible_anachronisms"
QUESTIONS_FIELD = "questions_to_identify_anachronisms"

_REPAIR_NOTE = (
    "The previous reply was not a valid JSON object with the fields "
    f'"{ELEMENTS_FIELD}" (list of strings) and "{QUESTIONS_FIELD}" '
    "(object mapping each element to its question). Reply again with exactly "
    "that JSON structure and nothing else."
)


@dataclass(frozen=True)
class AnachronismProposal:
    activity: str
    period: str
    element: str
    question: str
    source_model: str

    def __post_init__(self):
        if not self.question.strip().endswith(QUESTION_SUFFIX):
            raise AnachronismError(
                f"question for element {self.element!r} must end with "
                f"{QUESTION_SUFFIX!r}: {self.question!r}"
            )


def proposal_messages(prompt: PromptSpec) -> list:
    template = (
        resources.files("histeval.data").joinpath("proposal_instruction.txt").read_text("utf-8")
    )
    return [{"role": "user", "text": template.format(prompt=prompt.text)}]


_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def parse_proposal_reply(text: str) -> list:
    """(element, question) pairs from a contract-conforming JSON reply."""
    stripped = text.strip()
    fence = _FENCE.match(stripped)
    if fence:
        stripped = fence.group(1).strip()
    try:
        doc = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise AnachronismError(f"proposal reply is not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise AnachronismError("proposal reply must be a JSON object")
    elements = doc.get(ELEMENTS_FIELD)
    questions = doc.get(QUESTIONS_FIELD)
    if not isinstance(elements, list) or not all(isinstance(e, str) for e in elements):
        raise AnachronismError(f'"{ELEMENTS_FIELD}" must be a list of strings')
    if not isinstance(questions, dict):
        raise AnachronismError(f'"{QUESTIONS_FIELD}" must be an object')
    pairs = []
    for element in elements:
        question = questions.get(element)
        if not isinstance(question, str) or not question.strip():
            raise AnachronismError(f"element {element!r} has no identification question")
        if not question.strip().endswith(QUESTION_SUFFIX):
            raise AnachronismError(
                f"question for {element!r} does not end with {QUESTION_SUFFIX!r}"
            )
        pairs.append((element, question))
    return pairs


def propose(gateway, endpoint, prompt: PromptSpec, period: Period) -> list:
    """Candidate anachronisms for one prompt; empty list is a valid outcome."""
    if prompt.period != period.id:
        raise AnachronismError(
            f"prompt period {prompt.period!r} does not match period {period.id!r}"
        )
    if not period.anachronism_eligible:
        raise AnachronismError(
            f"period {period.id!r} is not eligible for anachronism evaluation"
        )
    messages = proposal_messages(prompt)
    reply = gateway.complete(endpoint, messages)
    try:
        pairs = parse_proposal_reply(reply)
    except AnachronismError:
        retry = messages + [
            {"role": "assistant", "text": reply},
            {"role": "user", "text": _REPAIR_NOTE},
        ]
        reply = gateway.complete(endpoint, retry)
        pairs = parse_proposal_reply(reply)
    return [
        AnachronismProposal(
            activity=prompt.activity,
            period=prompt.period,
            element=element,
            question=question,
            source_model=endpoint.model_name,
        )
        for element, question in pairs
    ]

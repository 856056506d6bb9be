"""Abstraction of intentions into short concept phrases."""
from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor

from .backends import BackendError, GenParams, Generator
from .graph import EdgeKind, NodeKind, TypedGraph
from .intentions import GenerationError

log = logging.getLogger(__name__)

CONCEPT_TEMPLATE = (
    "I will give you an INTENTION. You need to give several phrases containing 1-3 words for the ABSTRACT "
    "INTENTION of this INTENTION. You must return your answer in the following format: "
    "phrases1,phrases2,phrases3,...., which means you can't return anything other than answers.\n"
    "These abstract intention words should fulfill the following requirements:\n"
    "1. The ABSTRACT INTENTION phrases can well represent the INTENTION.\n"
    "2. The ABSTRACT INTENTION phrases don't have a lot of less relevant word meanings. For example, "
    "\"spring\" is not a good abstract intention word because it can represent both a coiled metal device "
    "and the season of the year.\n"
    "3. The ABSTRACT INTENTION phrases of the same INTENTION cannot be semantically similar to each other. "
    "For example, health and wellness are two close synonyms, so they can't be together.\n"
    "INTENTION: Moisturize dry skin while enjoying a special effect bath.\n"
    "Your answer: hydration, skincare\n"
    "INTENTION: Create a festive atmosphere for a Christmas party.\n"
    "Your answer: party planning, celebration, decorations, holiday spirit\n"
    "INTENTION: {intention}.\n"
    "Your answer:"
)

MAX_CONCEPT_WORDS = 3
MAX_CONCEPTS_PER_INTENTION = 8

_PUNCT = re.compile(r"[^\w\s-]", re.UNICODE)


def render_concept_prompt(intention: str) -> str:
    text = intention.strip().rstrip(".").strip()
    if not text:
        raise ValueError("empty intention")
    return CONCEPT_TEMPLATE.format(intention=text[0].upper() + text[1:])


def normalize_concept(phrase: str) -> str:
    phrase = _PUNCT.sub(" ", phrase.lower()).replace("_", " ")
    words = [w.strip("-") for w in phrase.split()]
    return " ".join(w for w in words if w)


def parse_concepts(completion: str) -> list[str]:
    out: list[str] = []
    for part in completion.replace("\n", ",").split(","):
        phrase = normalize_concept(part)
        if not phrase or len(phrase.split()) > MAX_CONCEPT_WORDS or phrase in out:
            continue
        out.append(phrase)
    return out


def _add_concepts(g: TypedGraph, intention_id: str, phrases: list[str]) -> tuple[list[str], bool]:
    capped = len(phrases) > MAX_CONCEPTS_PER_INTENTION
    ids = []
    for phrase in phrases[:MAX_CONCEPTS_PER_INTENTION]:
        cid = g.add_node(NodeKind.CONCEPT, phrase)
        g.add_edge(intention_id, cid, EdgeKind.INTENTION_TO_CONCEPT, 1.0)
        ids.append(cid)
    return ids, capped


def conceptualize(g: TypedGraph, intention_id: str, backend: Generator, params: GenParams = GenParams()) -> list[str]:
    node = g.node(intention_id)
    if node.kind is not NodeKind.INTENTION:
        raise ValueError(f"{intention_id!r} is not an intention")
    try:
        completion = backend.generate(render_concept_prompt(node.text), params)
    except BackendError as exc:
        raise GenerationError(intention_id, exc) from exc
    return _add_concepts(g, intention_id, parse_concepts(completion))[0]


def conceptualize_all(
    g: TypedGraph, backend: Generator, params: GenParams = GenParams(), parallelism: int = 4
) -> list[dict]:
    intentions = g.nodes(NodeKind.INTENTION)

    def call(node):
        try:
            return backend.generate(render_concept_prompt(node.text), params), None
        except BackendError as exc:
            return None, exc

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(call, intentions))

    report = []
    for node, (completion, err) in zip(intentions, results):
        if err is not None:
            log.error("intention %s skipped: %s", node.id, err)
            report.append({"intention_id": node.id, "n_concepts": 0, "status": "error", "error": str(err)})
            continue
        ids, capped = _add_concepts(g, node.id, parse_concepts(completion))
        status = "capped" if capped else ("ok" if ids else "empty")
        report.append({"intention_id": node.id, "n_concepts": len(ids), "status": status})
    return report


def concepts_of(g: TypedGraph, intention_id: str) -> list[str]:
    return [cid for cid, _ in g.neighbors(intention_id, EdgeKind.INTENTION_TO_CONCEPT, "out")]


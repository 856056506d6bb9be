from pathlib import Path

import pytest

from rigkit.backends import MockGenerator
from rigkit.concepts import (
    MAX_CONCEPTS_PER_INTENTION,
    conceptualize,
    conceptualize_all,
    concepts_of,
    parse_concepts,
    render_concept_prompt,
)
from rigkit.graph import EdgeKind, NodeKind, TypedGraph

GOLDEN = Path(__file__).parent / "golden"


def test_prompt_contains_examples():
    p = render_concept_prompt("moisturize dry skin while enjoying a special effect bath")
    assert "Your answer: hydration, skincare\n" in p
    assert "party planning, celebration, decorations, holiday spirit" in p
    assert "give several phrases containing 1-3 words" in p
    assert p.endswith("INTENTION: Moisturize dry skin while enjoying a special effect bath.\nYour answer:")
    assert p == render_concept_prompt("moisturize dry skin while enjoying a special effect bath")


def test_prompt_golden():
    expected = (GOLDEN / "concept_prompt_drawstring.txt").read_text(encoding="utf-8")
    assert render_concept_prompt("personalize their drawstring bags") == expected
    assert render_concept_prompt("Personalize their drawstring bags.") == expected


@pytest.mark.parametrize("text,expected", [
    ("playtime, construction, gift", ["playtime", "construction", "gift"]),
    ("a, a, A", ["a"]),
    ("surface preparation for large wooden boards, prep", ["prep"]),
    ("", []),
    ("Home-Comfort!, well-being ,  ", ["home-comfort", "well-being"]),
])
def test_parse(text, expected):
    assert parse_concepts(text) == expected


def test_conceptualize_paper_example():
    g = TypedGraph()
    i = g.add_node(NodeKind.INTENTION, "personalize their drawstring bags")
    ids = conceptualize(g, i, MockGenerator())
    assert {g.node(c).text for c in ids} == {"personalization", "gift", "accessorizing"}
    assert all(e.score == 1.0 for e in g.edges(EdgeKind.INTENTION_TO_CONCEPT))


def test_shared_concept_coalesces():
    g = TypedGraph()
    a = g.add_node(NodeKind.INTENTION, "personalize their drawstring bags")
    b = g.add_node(NodeKind.INTENTION, "purchase a construction dump truck toy for a 2-year-old boy or girl")
    conceptualize_all(g, MockGenerator())
    gift = g.find(NodeKind.CONCEPT, "gift")
    assert gift in concepts_of(g, a) and gift in concepts_of(g, b)
    assert len(g.neighbors(gift, EdgeKind.INTENTION_TO_CONCEPT, "in")) == 2


class _Scripted:
    def __init__(self, text):
        self.text = text

    def generate(self, prompt, params):
        return self.text


def test_empty_and_capped_flags():
    g = TypedGraph()
    g.add_node(NodeKind.INTENTION, "relax")
    report = conceptualize_all(g, _Scripted("this phrase is far too long"))
    assert report[0]["status"] == "empty" and g.stats().edges["IntentionToConcept"] == 0
    many = ", ".join(f"c{k}" for k in range(MAX_CONCEPTS_PER_INTENTION + 3))
    report = conceptualize_all(g, _Scripted(many))
    assert report[0]["status"] == "capped" and report[0]["n_concepts"] == MAX_CONCEPTS_PER_INTENTION


def test_all_concepts_short():
    g = TypedGraph()
    for t in ("make coffee at home", "froth milk for lattes", "go camping in the mountains"):
        g.add_node(NodeKind.INTENTION, t)
    conceptualize_all(g, MockGenerator())
    for c in g.nodes(NodeKind.CONCEPT):
        assert 1 <= len(c.text.split()) <= 3 and c.text == c.text.lower()

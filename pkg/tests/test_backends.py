import hashlib
import random
import string

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from rigkit.backends import (
    BackendInputError,
    BackendProtocolError,
    BackendTransportError,
    Embedder,
    GenParams,
    Generator,
    HashEmbedder,
    HttpEmbedder,
    HttpGenerator,
    HttpScorer,
    MockGenerator,
    MockScorer,
    Scorer,
)
from rigkit.intentions import ItemRecord, SessionRecord, render_intention_prompt
from rigkit.server import create_app


def _coffee_prompt():
    return render_intention_prompt(SessionRecord("s", [ItemRecord("1", "coffee beans"), ItemRecord("2", "milk frother")]))


def test_mock_generator_intentions():
    out = MockGenerator().generate(_coffee_prompt(), GenParams())
    assert out == "intention 1: make coffee at home\nintention 2: froth milk for lattes"


def test_mock_generator_deterministic_and_seeded():
    prompt = render_intention_prompt(SessionRecord("s", [ItemRecord("1", "garden hose"), ItemRecord("2", "rake")]))
    a = MockGenerator(seed=3).generate(prompt)
    assert a == MockGenerator(seed=3).generate(prompt)
    outs = {MockGenerator(seed=s).generate(prompt) for s in range(12)}
    assert len(outs) > 1


def test_mock_generator_rejects_empty_prompt():
    with pytest.raises(BackendInputError):
        MockGenerator().generate("  ")


def test_gen_params_validation():
    with pytest.raises(ValueError):
        GenParams(max_tokens=0)
    with pytest.raises(ValueError):
        GenParams(temperature=-1)


def test_mock_scorer_override_and_fuzz():
    stmt = "People make coffee at home, and simultaneously, they froth milk for lattes."
    s = MockScorer({stmt: 0.95})
    assert s.plausibility(stmt) == 0.95
    rng = random.Random(0)
    for _ in range(1000):
        text = "".join(rng.choice(string.ascii_letters + " ") for _ in range(rng.randint(1, 40))) + "x"
        v = s.plausibility(text)
        assert 0.0 <= v <= 1.0
        assert v == s.plausibility(text)
    with pytest.raises(BackendInputError):
        s.plausibility("")


def test_mock_scorer_ceiling():
    s = MockScorer(seed=1, ceiling=0.5)
    assert all(s.plausibility(f"statement {k}") < 0.5 for k in range(200))


def test_protocols():
    assert isinstance(MockGenerator(), Generator)
    assert isinstance(MockScorer(), Scorer)
    assert isinstance(HashEmbedder(), Embedder)


def test_hash_embedder_oracle():
    # buckets recomputed by hand: md5 of the token, first 8 bytes big-endian, mod d
    def bucket(tok):
        return int(hashlib.md5(tok.encode()).hexdigest()[:16], 16) % 8

    expected = np.zeros(8)
    for tok in ("coffee", "mug"):
        expected[bucket(tok)] += 1
    expected /= np.sqrt((expected ** 2).sum())
    np.testing.assert_array_equal(HashEmbedder(8).embed("Coffee, mug!"), expected)


def test_hash_embedder_norm_and_scale():
    e = HashEmbedder()
    np.testing.assert_array_equal(e.embed("a a"), e.embed("a"))
    rng = random.Random(2)
    for _ in range(100):
        text = " ".join("".join(rng.choice("abcxyz") for _ in range(3)) for _ in range(rng.randint(1, 6)))
        assert abs(np.linalg.norm(e.embed(text)) - 1) < 1e-6
    with pytest.raises(BackendInputError):
        e.embed("!!!")


def _transport(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_http_retries_then_transport_error():
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(500)

    gen = HttpGenerator("http://backend", retries=3, backoff=0, client=_transport(handler))
    with pytest.raises(BackendTransportError):
        gen.generate("hello")
    assert len(calls) == 3


def test_http_recovers_after_failures():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) < 3:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json={"text": "ok"})

    gen = HttpGenerator("http://backend", retries=3, backoff=0, client=_transport(handler))
    assert gen.generate("hello", GenParams(max_tokens=5)) == "ok"
    body = calls[-1].read()
    assert b'"max_tokens":5' in body.replace(b" ", b"") and calls[-1].url.path == "/generate"


@pytest.mark.parametrize("response", [
    httpx.Response(200, json={"nope": 1}),
    httpx.Response(200, content=b"not json"),
    httpx.Response(400, json={"detail": "bad"}),
])
def test_http_protocol_errors(response):
    gen = HttpGenerator("http://backend", backoff=0, client=_transport(lambda r: response))
    with pytest.raises(BackendProtocolError):
        gen.generate("hello")


def test_http_scorer_rejects_out_of_range():
    scorer = HttpScorer("http://backend", client=_transport(lambda r: httpx.Response(200, json={"score": 1.5})))
    with pytest.raises(BackendProtocolError):
        scorer.plausibility("x")


def test_server_round_trip():
    overrides = {"People x usually before they y.": 0.92}
    client = TestClient(create_app(MockGenerator(), MockScorer(overrides), HashEmbedder(16)))
    gen = HttpGenerator("http://testserver", client=client)
    assert gen.generate(_coffee_prompt()) == MockGenerator().generate(_coffee_prompt())
    assert HttpScorer("http://testserver", client=client).plausibility("People x usually before they y.") == 0.92
    vec = HttpEmbedder("http://testserver", dim=16, client=client).embed("coffee mug")
    np.testing.assert_allclose(vec, HashEmbedder(16).embed("coffee mug"))
    assert client.post("/score", json={"statement": ""}).status_code == 422
    assert client.post("/embed", json={"text": "!!"}).status_code == 422
    with pytest.raises(BackendProtocolError):
        HttpEmbedder("http://testserver", dim=8, client=client).embed("coffee")

"""Session ingestion and session-level intention generation."""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .backends import BackendError, GenParams, Generator
from .graph import EdgeKind, NodeKind, TypedGraph, normalize_text

log = logging.getLogger(__name__)

INTENTION_TEMPLATE = (
    "Below is a user's chronological record list:\n"
    "{session}\n"
    "Explain the basic intentions of this user exactly. Output several different intentions one by one "
    "to answer the following question: Users buy these items because they want to:\n"
    "intention 1: {{a simple verb phrase within 10 words}}\n"
    "intention 2: {{a simple verb phrase within 10 words}}\n"
    "..."
)

MAX_INTENTION_WORDS = 15
DESC_CHARS = 200

_TAG = re.compile(r"^\s*intention\s*\d*\s*[:.)\-]\s*", re.IGNORECASE)
_BULLET = re.compile(r"^\s*(?:[-*•]+|\d+\s*[.)])\s*")
_QUOTES = "\"'“”‘’`"


class SessionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ItemRecord:
    id: str
    title: str
    desc: str = ""


@dataclass
class SessionRecord:
    session_id: str
    items: list[ItemRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError(f"session {self.session_id!r} has no items")
        for it in self.items:
            if not it.title.strip():
                raise ValueError(f"item {it.id!r} in session {self.session_id!r} has no title")

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "items": [{"id": it.id, "title": it.title, "desc": it.desc} for it in self.items],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "SessionRecord":
        items = [ItemRecord(str(it["id"]), it["title"], it.get("desc") or "") for it in rec["items"]]
        return cls(str(rec["session_id"]), items)


@dataclass(frozen=True)
class RawIntention:
    line_index: int
    raw: str
    normalized: str


def read_sessions(path: str | Path) -> list[SessionRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(SessionRecord.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise SessionFormatError(f"{path}:{lineno}: bad session record ({exc})") from None
    return out


def write_sessions(sessions: Iterable[SessionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def item_node_id(item_id: str) -> str:
    return f"item:{item_id}"


def session_node_id(session_id: str) -> str:
    return f"session:{session_id}"


def ingest_session(g: TypedGraph, session: SessionRecord) -> str:
    """Add the session, its items and ordered ItemToSession edges."""
    sid = g.add_node(NodeKind.SESSION, session.session_id, node_id=session_node_id(session.session_id))
    for pos, it in enumerate(session.items):
        attrs = {"desc": it.desc} if it.desc else {}
        iid = g.add_node(NodeKind.ITEM, it.title, attrs, node_id=item_node_id(it.id))
        g.add_edge(iid, sid, EdgeKind.ITEM_TO_SESSION, 1.0, position=pos)
    return sid


def render_intention_prompt(session: SessionRecord) -> str:
    lines = []
    for k, it in enumerate(session.items, 1):
        line = f"{k}. {it.title.strip()}"
        desc = " ".join(it.desc.split())[:DESC_CHARS]
        if desc:
            line += f" — {desc}"
        lines.append(line)
    return INTENTION_TEMPLATE.format(session="\n".join(lines))


def _clean(line: str) -> str:
    line = _TAG.sub("", line, count=1)
    line = _BULLET.sub("", line, count=1)
    line = line.strip().strip(_QUOTES).strip()
    return line.rstrip(".!;,").strip().strip(_QUOTES).strip()


def parse_intentions(completion: str) -> list[RawIntention]:
    out: list[RawIntention] = []
    seen: set[str] = set()
    for idx, raw in enumerate(completion.splitlines()):
        if not raw.strip() or raw.rstrip().endswith(":"):
            continue
        normalized = normalize_text(_clean(raw))
        if not normalized or normalized in seen:
            continue
        if len(normalized.split()) > MAX_INTENTION_WORDS:
            continue
        seen.add(normalized)
        out.append(RawIntention(idx, raw, normalized))
    return out


class GenerationError(Exception):
    def __init__(self, key: str, cause: Exception):
        super().__init__(f"{key}: {cause}")
        self.key = key
        self.cause = cause


def _add_intentions(g: TypedGraph, session_id: str, parsed: list[RawIntention]) -> list[str]:
    sid = session_node_id(session_id)
    ids = []
    for p in parsed:
        iid = g.add_node(NodeKind.INTENTION, p.normalized)
        g.add_edge(sid, iid, EdgeKind.SESSION_TO_INTENTION, 1.0)
        ids.append(iid)
    return ids


def generate_session_intentions(
    g: TypedGraph, session: SessionRecord, backend: Generator, params: GenParams = GenParams()
) -> list[str]:
    if not g.has_node(session_node_id(session.session_id)):
        raise KeyError(f"session {session.session_id!r} not ingested")
    try:
        completion = backend.generate(render_intention_prompt(session), params)
    except BackendError as exc:
        raise GenerationError(session.session_id, exc) from exc
    return _add_intentions(g, session.session_id, parse_intentions(completion))


def generate_all(
    g: TypedGraph,
    sessions: list[SessionRecord],
    backend: Generator,
    params: GenParams = GenParams(),
    parallelism: int = 4,
) -> list[dict]:
    """Generate intentions for every session; returns the run report.

    Backend calls fan out over a thread pool; graph writes happen in session
    order so the result does not depend on scheduling.
    """

    def call(session: SessionRecord):
        try:
            return backend.generate(render_intention_prompt(session), params), None
        except BackendError as exc:
            return None, exc

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(call, sessions))

    report = []
    for session, (completion, err) in zip(sessions, results):
        if err is not None:
            log.error("session %s skipped: %s", session.session_id, err)
            report.append({"session_id": session.session_id, "n_intentions": 0, "status": "error", "error": str(err)})
            continue
        ids = _add_intentions(g, session.session_id, parse_intentions(completion))
        status = "ok" if ids else "empty"
        if not ids:
            log.warning("session %s produced no intentions", session.session_id)
        report.append({"session_id": session.session_id, "n_intentions": len(ids), "status": status})
    return report

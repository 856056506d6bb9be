"""Synthetic planted-theme session data with matching mock backend tables.

Items belong to groups inside themes. A session is drawn from one group,
with each position replaced by an item from another theme at the noise
rate. The manifest carries the lookup tables that make the mock generator
and scorer reproduce the planted structure: every item maps to one of its
group's intentions. Groups cycle through three evidence channels:

* concept: the group's intentions share concepts, no relations pass;
* relation: assertions between the group's intentions pass the
  threshold, the intentions get no concepts;
* both: shared concepts and passing relations.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .intentions import ItemRecord, SessionRecord, write_sessions
from .relations import RelationType, render_assertion

THEMES = ("kitchen", "garden", "fitness", "office", "travel", "pets", "crafts", "audio", "camping", "baby")
GROUPS = ("alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
          "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango")
VERBS = ("prepare", "organize", "upgrade", "repair")
CHANNELS = ("concept", "relation", "both")


@dataclass
class SyntheticSpec:
    n_themes: int = 3
    items_per_theme: int = 200
    n_sessions: int = 5000
    min_len: int = 3
    max_len: int = 8
    noise: float = 0.1
    groups_per_theme: int = 10
    intentions_per_group: int = 2
    popularity_skew: float = 1.0
    seed: int = 7

    def __post_init__(self) -> None:
        if min(self.n_themes, self.items_per_theme, self.n_sessions, self.min_len, self.groups_per_theme,
               self.intentions_per_group) < 1:
            raise ValueError("counts must be positive")
        if self.n_themes > len(THEMES) or self.groups_per_theme > len(GROUPS):
            raise ValueError("too many themes or groups for the built-in vocabularies")
        if self.intentions_per_group > len(VERBS):
            raise ValueError(f"at most {len(VERBS)} intentions per group")
        if self.max_len < self.min_len:
            raise ValueError("max_len < min_len")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")


def synth(spec: SyntheticSpec) -> tuple[list[SessionRecord], dict]:
    rng = np.random.default_rng(spec.seed)
    groups = min(spec.groups_per_theme, spec.items_per_theme)

    items: list[ItemRecord] = []
    item_meta: dict[str, dict] = {}
    members: dict[tuple[int, int], list[int]] = {}
    intentions: dict[str, str] = {}
    concepts: dict[str, list[str]] = {}
    group_intentions: dict[tuple[int, int], list[str]] = {}
    channel: dict[tuple[int, int], str] = {}
    for t in range(spec.n_themes):
        theme = THEMES[t]
        for gi in range(groups):
            name = GROUPS[gi]
            channel[(t, gi)] = CHANNELS[gi % len(CHANNELS)]
            phrases = [f"{VERBS[v]} the {name} {theme} kit" for v in range(spec.intentions_per_group)]
            group_intentions[(t, gi)] = phrases
            for p in phrases:
                concepts[p] = [] if channel[(t, gi)] == "relation" else [f"{name} {theme}", f"{name} {theme} care"]
            members[(t, gi)] = []
        for k in range(spec.items_per_theme):
            gi = k % groups
            item_id = f"p{len(items):05d}"
            title = f"{GROUPS[gi]} {theme} product {k}"
            members[(t, gi)].append(len(items))
            items.append(ItemRecord(item_id, title, f"A {theme} item from the {GROUPS[gi]} line."))
            item_meta[item_id] = {"theme": t, "group": gi}
            phrases = group_intentions[(t, gi)]
            intentions[title] = phrases[(k // groups) % len(phrases)]

    overrides = {}
    for key, phrases in group_intentions.items():
        if channel[key] == "concept":
            continue
        for a in phrases:
            for b in phrases:
                if a == b:
                    continue
                for r in RelationType:
                    overrides[render_assertion(a, b, r)] = 0.95

    theme_of = np.array([item_meta[it.id]["theme"] for it in items])
    sessions: list[SessionRecord] = []
    session_meta: dict[str, dict] = {}
    for n in range(spec.n_sessions):
        t = int(rng.integers(spec.n_themes))
        gi = int(rng.integers(groups))
        pool = members[(t, gi)]
        weights = 1.0 / np.arange(1, len(pool) + 1) ** spec.popularity_skew
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        picks = rng.choice(len(pool), size=min(length, len(pool)), replace=False, p=weights / weights.sum())
        seq = [pool[p] for p in picks]
        others = np.flatnonzero(theme_of != t)
        if others.size:
            for pos in range(len(seq)):
                if rng.random() < spec.noise:
                    seq[pos] = int(rng.choice(others))
        sid = f"s{n:05d}"
        sessions.append(SessionRecord(sid, [items[k] for k in seq]))
        session_meta[sid] = {"theme": t, "group": gi}

    manifest = {
        "spec": asdict(spec),
        "themes": list(THEMES[: spec.n_themes]),
        "groups": [{"theme": t, "group": gi, "channel": channel[(t, gi)], "intentions": group_intentions[(t, gi)]}
                   for (t, gi) in sorted(group_intentions)],
        "items": item_meta,
        "sessions": session_meta,
        "mock": {
            "intentions": intentions,
            "concepts": concepts,
            "score_overrides": overrides,
            "score_ceiling": 0.5,
        },
    }
    return sessions, manifest


def write_synth(spec: SyntheticSpec, sessions_path: str | Path, manifest_path: str | Path) -> tuple[list[SessionRecord], dict]:
    sessions, manifest = synth(spec)
    write_sessions(sessions, sessions_path)
    Path(manifest_path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return sessions, manifest

"""Link crime-database actor names to token identifiers with 3-gram Jaccard scores."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

DEFAULT_KEYWORDS = frozenset({"dao", "network", "finance", "protocol"})
ID_THRESHOLD = 0.8
NAME_THRESHOLD = 0.7
KEYWORD_THRESHOLD = 0.5

_STRIP = re.compile(r"[^a-z0-9 ]")
_SPACE = re.compile(r"\s+")


@dataclass(frozen=True)
class Token:
    token_id: str
    token_name: str


@dataclass(frozen=True)
class MatchCandidate:
    actor: str
    token_id: str
    token_name: str
    score_id: float
    score_name: float
    matched: bool
    rule: str  # id_0.8, name_0.7, keyword_0.5, or "" when unmatched


def normalize_name(text: str) -> str:
    t = _SPACE.sub(" ", text.lower())
    return _SPACE.sub(" ", _STRIP.sub("", t)).strip()


def chunk3(text: str) -> frozenset[str]:
    out = set()
    for word in text.split():
        if len(word) < 3:
            out.add(word)
        else:
            out.update(word[i:i + 3] for i in range(len(word) - 2))
    return frozenset(out)


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def similarity(x: str, y: str) -> float:
    return jaccard(chunk3(normalize_name(x)), chunk3(normalize_name(y)))


def match_actors(actors: Sequence[str], tokens: Sequence[Token],
                 keywords: Iterable[str] = DEFAULT_KEYWORDS, id_threshold: float = ID_THRESHOLD,
                 name_threshold: float = NAME_THRESHOLD,
                 keyword_threshold: float = KEYWORD_THRESHOLD) -> list[MatchCandidate]:
    """Score every actor-token pair; all pairs are returned for manual review.

    The reported rule is the first satisfied of id, name, keyword.
    """
    kw = {normalize_name(k) for k in keywords}
    out = []
    for actor in sorted(set(actors)):
        a = chunk3(normalize_name(actor))
        for tok in sorted(tokens, key=lambda t: (t.token_id, t.token_name)):
            s_id = jaccard(a, chunk3(normalize_name(tok.token_id)))
            name_norm = normalize_name(tok.token_name)
            s_name = jaccard(a, chunk3(name_norm))
            has_kw = bool(kw & set(name_norm.split()))
            if s_id >= id_threshold:
                rule = f"id_{id_threshold:g}"
            elif s_name >= name_threshold:
                rule = f"name_{name_threshold:g}"
            elif has_kw and s_name >= keyword_threshold:
                rule = f"keyword_{keyword_threshold:g}"
            else:
                rule = ""
            out.append(MatchCandidate(actor, tok.token_id, tok.token_name, s_id, s_name,
                                      bool(rule), rule))
    return out


def load_keywords(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip() and not w.startswith("#"))

"""
Character-overlap entity linking.

Questions and entity names are compared in a canonical form: lowercased, with
whitespace runs collapsed; mentions additionally lose punctuation at their
edges. All lengths and positions are in characters of that canonical form.
"""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass
from typing import Mapping

from data_structures.ranked_list import RankedList
from errors import ConfigError, DomainError, ParseError, ReformatError

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

MAX_MENTION_WORDS = 6
EDGE_PUNCTUATION = string.punctuation


def normalize(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class Mention:
    """ An n-gram of the normalized question starting at character `start`. """
    text: str
    start: int

    def __post_init__(self):
        if self.start < 0:
            raise DomainError(f"mention start must be >= 0, got {self.start}")

    @property
    def length(self) -> int:
        return len(self.text)

    @property
    def end(self) -> int:
        return self.start + len(self.text)

    def overlaps(self, other: Mention) -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class LinkerScore:
    entity_id: str
    mention: Mention | None
    score: float


def enumerate_mentions(q: str, max_words: int = MAX_MENTION_WORDS) -> list[Mention]:
    """ Word-aligned n-grams of up to `max_words` words of an already normalized question. """
    words = [(m.start(), m.end()) for m in re.finditer(r"\S+", q)]
    seen = set()
    mentions = []
    for i in range(len(words)):
        for j in range(i, min(len(words), i + max_words)):
            start, end = words[i][0], words[j][1]
            raw = q[start:end]
            text = raw.strip(EDGE_PUNCTUATION)
            if not text:
                continue
            mention = Mention(text, start + len(raw) - len(raw.lstrip(EDGE_PUNCTUATION)))
            if mention not in seen:
                seen.add(mention)
                mentions.append(mention)
    return mentions


def lccs_len(m: str, e: str) -> int:
    """
    Length of the longest run of consecutive characters shared by m and e.

    Complexity:
        O(|m| * |e|) time, O(|e|) space with a single rolling row.
    """
    if not m or not e:
        return 0
    best = 0
    previous = [0] * (len(e) + 1)
    for i in range(1, len(m) + 1):
        current = [0] * (len(e) + 1)
        for j in range(1, len(e) + 1):
            if m[i - 1] == e[j - 1]:
                current[j] = previous[j - 1] + 1
                if current[j] > best:
                    best = current[j]
        previous = current
    return best


def mention_value(q: str, e: str, mention: Mention, with_position: bool) -> float:
    """ Score one mention of normalized q against normalized entity name e.

    The position feature is added last, so three-term == two-term + p_m/|q| exactly.
    """
    overlap = lccs_len(mention.text, e)
    value = overlap / len(q) + overlap / len(e)
    if with_position:
        value = value + mention.start / len(q)
    return value


def _best_mention(q: str, e_name: str, with_position: bool,
                  exclude: Mention | None = None) -> tuple[float, Mention | None]:
    qn = normalize(q)
    en = normalize(e_name).strip(EDGE_PUNCTUATION)
    if not qn or not en:
        raise DomainError("linker scores need a non-empty question and entity name")
    best_key = None
    best: tuple[float, Mention | None] = (0.0, None)
    for mention in enumerate_mentions(qn):
        if exclude is not None and mention.overlaps(exclude):
            continue
        # zero-overlap mentions never count, whatever their position
        if lccs_len(mention.text, en) == 0:
            continue
        value = mention_value(qn, en, mention, with_position)
        key = (value, -mention.length, -mention.start)
        if best_key is None or key > best_key:
            best_key = key
            best = (value, mention)
    return best


def simple_linker_score(q: str, e_name: str) -> tuple[float, Mention | None]:
    """
    max over mentions m of |m^e|/|q| + |m^e|/|e| + p_m/|q|.

    Among equal scores the shorter mention wins, then the earlier one.

    Returns:
        (score, best mention); (0.0, None) when no mention shares a character.

    :raises DomainError: empty question or entity name
    """
    return _best_mention(q, e_name, with_position=True)


def constraint_linker_score(q: str, e_name: str, exclude: Mention | None = None) -> tuple[float, Mention | None]:
    """ Two-feature variant without the position term; mentions overlapping `exclude` are skipped. """
    return _best_mention(q, e_name, with_position=False, exclude=exclude)


def link_top_k(q: str, catalog: Mapping[str, str], k: int) -> list[LinkerScore]:
    """
    EL_K(q): the best k entities by simple_linker_score.

    Args:
        q: question text
        catalog: entity id -> surface name
        k: number of entities to keep

    Returns:
        Non-increasing scores, ties broken by entity id; zero-score entities are left out.

    :raises ConfigError: k < 1
    """
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    ranked: RankedList[LinkerScore] = RankedList(capacity=k)
    for entity_id, name in catalog.items():
        score, mention = simple_linker_score(q, name)
        if score > 0.0:
            ranked.add(LinkerScore(entity_id, mention, score), score, entity_id)
    logger.debug("linked %d entities for %r", len(ranked), q)
    return ranked.values()


def entity_catalog(kb) -> dict[str, str]:
    """ Linkable entities of a knowledge base: everything except CVT nodes. """
    return {e.id: e.name for e in kb.entities.values() if not e.cvt}


def locate_mention(q: str, text: str) -> Mention:
    """ First occurrence of a mention text inside the normalized question.
    :raises ReformatError: text not found
    """
    qn = normalize(q)
    needle = normalize(text)
    start = qn.find(needle) if needle else -1
    if start < 0:
        raise ReformatError(f"mention {text!r} not found in {qn!r}")
    return Mention(needle, start)


def replace_mention(q: str, mention: Mention | str) -> str:
    """
    The normalized question with the mention replaced by the <e> token.

    A Mention must sit exactly at its recorded position; a plain string is
    replaced at its first occurrence.

    :raises ReformatError: the mention is not in the question
    """
    qn = normalize(q)
    if isinstance(mention, str):
        mention = locate_mention(q, mention)
    elif qn[mention.start:mention.end] != mention.text:
        raise ReformatError(f"mention {mention.text!r} not found at {mention.start} in {qn!r}")
    return normalize(f"{qn[:mention.start]} <e> {qn[mention.end:]}")


@dataclass(frozen=True)
class LinkedRecord:
    entity_id: str
    mention_text: str
    score: float


def load_linked_results(path: str) -> dict[str, list[LinkedRecord]]:
    """ Pre-linked results, "question id<TAB>entity id<TAB>mention<TAB>score" per line.

    Returns:
        question id -> records ordered by score (descending), then entity id.
    """
    results: dict[str, RankedList[LinkedRecord]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.rstrip("\r\n")
            if not stripped.strip() or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != 4:
                raise ParseError(path, line_no, f"expected 4 tab-separated fields, got {len(fields)}")
            qid, entity_id, mention, raw_score = fields
            try:
                score = float(raw_score)
            except ValueError:
                raise ParseError(path, line_no, f"bad score {raw_score!r}") from None
            results.setdefault(qid, RankedList()).add(LinkedRecord(entity_id, mention, score), score, entity_id)
    return {qid: ranked.values() for qid, ranked in results.items()}

"""
Dataset files and relation-detection task construction.

Gold-parse file, one question per line, tab separated::

    qid  question  topic entity  chain  constraints  answers

where the chain is ``r1`` or ``r1|r2``, constraints are ``node;entity;relation``
entries joined by ``|`` and answers are entity ids joined by ``|`` (the last two
may be empty).

Task file, one training record per line::

    qid  question with <e>  gold chain  candidate chains

where candidate chains are ``;``-separated chains other than the gold one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from errors import ChainOverflowError, DomainError, ParseError
from kb import Constraint, KnowledgeBase, RelationChain
from linker import replace_mention, simple_linker_score
from scorer_util import QuestionInput, RelationInput
from trainer import TrainingExample

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

CHAIN_SEP = "|"
POOL_SEP = ";"
CONSTRAINT_FIELD_SEP = ";"


@dataclass(frozen=True)
class GoldParse:
    qid: str
    question: str
    topic: str
    chain: RelationChain
    constraints: tuple[Constraint, ...] = ()
    answers: tuple[str, ...] = ()


@dataclass(frozen=True)
class DatasetRecord:
    """ One relation-detection example: the gold chain and the other candidate chains. """
    qid: str
    question: str
    gold: RelationChain
    pool: tuple[RelationChain, ...]

    def to_example(self) -> TrainingExample:
        gold = RelationInput.from_chain(self.gold)
        return TrainingExample(QuestionInput.from_text(self.question), gold,
                               [gold] + [RelationInput.from_chain(c) for c in self.pool])


def parse_chain(text: str) -> RelationChain:
    """ "r1" or "r1|r2".
    :raises DomainError: empty relation names or a chain longer than two
    """
    parts = text.split(CHAIN_SEP)
    if any(not p.strip() for p in parts):
        raise DomainError(f"empty relation in chain {text!r}")
    return RelationChain(tuple(p.strip() for p in parts))


def format_chain(chain: RelationChain) -> str:
    return CHAIN_SEP.join(chain.relations)


def _parse_constraints(text: str) -> tuple[Constraint, ...]:
    constraints = []
    for entry in filter(None, text.split(CHAIN_SEP)):
        fields = entry.split(CONSTRAINT_FIELD_SEP)
        if len(fields) != 3 or not all(f.strip() for f in fields):
            raise DomainError(f"constraint {entry!r} is not node;entity;relation")
        constraints.append(Constraint(*(f.strip() for f in fields)))
    return tuple(constraints)


def _data_lines(path: str) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.rstrip("\r\n")
            if not stripped.strip() or stripped.startswith("#"):
                continue
            yield line_no, stripped.split("\t")


def read_gold_parses(path: str) -> list[GoldParse]:
    """ :raises ParseError: wrong field count or an unparsable chain/constraint, with the line number """
    parses = []
    for line_no, fields in _data_lines(path):
        if len(fields) != 6:
            raise ParseError(path, line_no, f"expected 6 tab-separated fields, got {len(fields)}")
        qid, question, topic, chain, constraints, answers = (f.strip() for f in fields)
        if not qid or not question or not topic:
            raise ParseError(path, line_no, "question id, question and topic entity are required")
        try:
            parses.append(GoldParse(qid, question, topic, parse_chain(chain), _parse_constraints(constraints),
                                    tuple(a for a in answers.split(CHAIN_SEP) if a)))
        except DomainError as exc:
            raise ParseError(path, line_no, str(exc)) from exc
    return parses


def read_task(path: str) -> list[DatasetRecord]:
    """ :raises ParseError: wrong field count or an unparsable chain, with the line number """
    records = []
    for line_no, fields in _data_lines(path):
        if len(fields) != 4:
            raise ParseError(path, line_no, f"expected 4 tab-separated fields, got {len(fields)}")
        qid, question, gold, pool = fields
        if not qid.strip() or not question.strip():
            raise ParseError(path, line_no, "question id and question are required")
        try:
            chains = tuple(parse_chain(c) for c in pool.split(POOL_SEP) if c.strip())
            records.append(DatasetRecord(qid.strip(), question.strip(), parse_chain(gold), chains))
        except DomainError as exc:
            raise ParseError(path, line_no, str(exc)) from exc
    return records


def write_task(records: Iterable[DatasetRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            pool = POOL_SEP.join(format_chain(c) for c in r.pool)
            f.write(f"{r.qid}\t{r.question}\t{format_chain(r.gold)}\t{pool}\n")


def load_examples(path: str) -> list[TrainingExample]:
    return [record.to_example() for record in read_task(path)]


def build_relation_detection_task(kb: KnowledgeBase, parses: Sequence[GoldParse]) -> list[DatasetRecord]:
    """
    One record per usable parse: the gold chain as the positive and every
    other core-chain candidate of the topic entity as a negative.

    The topic mention replaced by <e> is the best mention of the entity's
    catalog name under simple_linker_score. Parses whose topic entity is
    unknown, unmentioned or has too many chains are skipped and counted in a
    warning; duplicates are kept.
    """
    records = []
    skipped = 0
    for parse in parses:
        if not kb.has_entity(parse.topic):
            logger.debug("%s: unknown topic entity %s", parse.qid, parse.topic)
            skipped += 1
            continue
        _, mention = simple_linker_score(parse.question, kb.name_of(parse.topic))
        if mention is None:
            logger.debug("%s: %s is not mentioned in the question", parse.qid, parse.topic)
            skipped += 1
            continue
        try:
            candidates = kb.core_chain_candidates(parse.topic)
        except ChainOverflowError as exc:
            logger.debug("%s: %s", parse.qid, exc)
            skipped += 1
            continue
        pool = tuple(c for c in candidates if c != parse.chain)
        records.append(DatasetRecord(parse.qid, replace_mention(parse.question, mention), parse.chain, pool))
    if skipped:
        logger.warning("skipped %d of %d parses with an unresolvable topic entity", skipped, len(parses))
    logger.info("built %d relation detection records", len(records))
    return records

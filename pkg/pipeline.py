"""
Two-step relation detection KBQA.

A question is answered in five stages: link candidate topic entities,
re-rank them with a first relation-detection pass over the raw question,
score every core chain of each remaining entity on the question with the
entity mention replaced by <e>, pick the best (entity, chain) pair and
finally attach constraints found around the chosen chain.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Mapping, Sequence

from data_structures.ranked_list import RankedList
from errors import ChainOverflowError, ConfigError, KbqaError, UnanswerableError, UsageError
from kb import Constraint, KnowledgeBase, NodeRole, RelationChain
from linker import (LinkedRecord, LinkerScore, Mention, constraint_linker_score, entity_catalog, link_top_k,
                    locate_mention, normalize, replace_mention)
from scorer_util import QuestionInput, RelationInput
from task_io import GoldParse

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

TYPE_MARKER = "type"


class Stage:
    LINKING = "linking"
    RERANKING = "reranking"
    RELATION_DETECTION = "relation detection"
    QUERY_GENERATION = "query generation"
    CONSTRAINT_DETECTION = "constraint detection"
    EXECUTION = "execution"


@dataclass
class PipelineConfig:
    """
    Pipeline knobs.

    Attributes:
        k: entities kept from the linker
        k_prime: entities kept after re-ranking, fewer than k
        top_l: best-scoring relations used for re-ranking
        alpha: weight of the linker score in the re-ranking score
        beta: weight of the re-ranking score in the query score
        theta: constraint-linker threshold
        rerank: when off, the K linked entities go to relation detection as
            they are, with their linker scores standing in for re-ranking scores
        constraints: when off, queries execute without constraints
        detector: frozen relation scorer (anything with score(question, relation))
    """
    k: int = 50
    k_prime: int = 10
    top_l: int = 5
    alpha: float = 0.6
    beta: float = 0.5
    theta: float = 0.6
    rerank: bool = True
    constraints: bool = True
    detector: object | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.k < 1 or self.top_l < 1:
            raise ConfigError("k and top_l must be positive")
        if not 1 <= self.k_prime < self.k:
            raise ConfigError(f"k_prime must be in [1, k), got k_prime={self.k_prime}, k={self.k}")
        for name in ("alpha", "beta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.theta <= 0:
            raise ConfigError(f"theta must be positive, got {self.theta}")

    def require_detector(self):
        if self.detector is None:
            raise ConfigError("the pipeline needs a relation detector")
        return self.detector


@dataclass(frozen=True)
class RerankedEntity:
    entity_id: str
    mention: Mention | None
    linker_score: float
    rerank_score: float


@dataclass(frozen=True)
class ScoredChain:
    chain: RelationChain
    score: float


@dataclass(frozen=True)
class QueryCandidate:
    topic: str
    chain: RelationChain
    constraints: tuple[Constraint, ...] = ()
    score: float = 0.0
    relation_score: float = 0.0


def relation_input(kb: KnowledgeBase, chain: RelationChain) -> RelationInput:
    """ Both token views of a chain, words taken from the KB relation catalog. """
    words = tuple(w for r in chain.relations for w in kb.relation(r).words)
    return RelationInput(words, chain.relations)


def rerank_entities(cfg: PipelineConfig, kb: KnowledgeBase, q: str,
                    initial: Sequence[LinkerScore]) -> list[RerankedEntity]:
    """
    EL'_K'(q): alpha * linker score + (1 - alpha) * best score among the entity's
    relations that are also among the question's top_l relations (0 when none are).

    Relations of every initial entity are scored on the raw question, without
    entity replacement. Ties go to the smaller entity id.

    :raises UsageError: empty initial list
    """
    if not initial:
        raise UsageError("re-ranking needs at least one linked entity")
    detector = cfg.require_detector()
    question = QuestionInput.from_text(q)
    relations = sorted(set().union(*(kb.relations_of_entity(link.entity_id) for link in initial)))

    top: RankedList[str] = RankedList(capacity=cfg.top_l)
    for r in relations:
        top.add(r, detector.score(question, relation_input(kb, RelationChain((r,)))), r)
    top_scores = {item.value: item.score for item in top}
    logger.debug("top relations for %r: %s", q, top_scores)

    ranked: RankedList[RerankedEntity] = RankedList(capacity=cfg.k_prime)
    for link in initial:
        shared = [top_scores[r] for r in kb.relations_of_entity(link.entity_id) if r in top_scores]
        best = max(shared) if shared else 0.0
        score = cfg.alpha * link.score + (1.0 - cfg.alpha) * best
        ranked.add(RerankedEntity(link.entity_id, link.mention, link.score, score), score, link.entity_id)
    return ranked.values()


def skip_rerank(initial: Sequence[LinkerScore]) -> list[RerankedEntity]:
    """ EL_K unchanged, each linker score doubling as the re-ranking score. """
    return [RerankedEntity(link.entity_id, link.mention, link.score, link.score) for link in initial]


def detect_relations(cfg: PipelineConfig, kb: KnowledgeBase, q: str, entity_id: str,
                     mention: Mention | str) -> list[ScoredChain]:
    """
    s_rel(r; e, q) for every core chain of the entity, best first (ties by chain).

    :raises ReformatError: the mention is not in the question
    :raises ChainOverflowError: the entity has too many candidate chains
    """
    detector = cfg.require_detector()
    question = QuestionInput.from_text(replace_mention(q, mention))
    ranked: RankedList[ScoredChain] = RankedList()
    for chain in kb.core_chain_candidates(entity_id):
        score = detector.score(question, relation_input(kb, chain))
        ranked.add(ScoredChain(chain, score), score, chain.relations)
    return ranked.values()


def generate_query(cfg: PipelineConfig, reranked: Sequence[RerankedEntity],
                   relation_scores: Mapping[str, Sequence[ScoredChain]]) -> QueryCandidate:
    """
    argmax over (e, r) of beta * s_rerank(e) + (1 - beta) * s_rel(r; e).

    Entities without scored chains are passed over. Ties go to the smaller
    entity id, then the smaller chain.

    :raises UnanswerableError: no entity has a scored chain
    """
    ranked: RankedList[QueryCandidate] = RankedList(capacity=1)
    for entity in reranked:
        for scored in relation_scores.get(entity.entity_id, ()):
            score = cfg.beta * entity.rerank_score + (1.0 - cfg.beta) * scored.score
            ranked.add(QueryCandidate(entity.entity_id, scored.chain, (), score, scored.score), score,
                       (entity.entity_id, scored.chain.relations))
    if ranked.is_empty():
        raise UnanswerableError(Stage.QUERY_GENERATION, "no candidate entity has a relation chain")
    return ranked.best().value


def date_year(name: str) -> str | None:
    """ The year of a name that is a calendar date (YYYY or YYYY-MM-DD), else None. """
    text = name.strip()
    if re.fullmatch(r"\d{4}", text):
        return text
    if re.fullmatch(r"\d{4}-\d{2}-\d{2}", text):
        try:
            datetime.strptime(text, "%Y-%m-%d")
        except ValueError:
            return None
        return text[:4]
    return None


def question_years(q: str) -> set[str]:
    return set(re.findall(r"(?<!\d)\d{4}(?!\d)", normalize(q)))


def detect_constraints(cfg: PipelineConfig, kb: KnowledgeBase, q: str, topic_mention: Mention | None,
                       candidate: QueryCandidate) -> QueryCandidate:
    """
    Attach (node, entity, relation) constraints found next to the executed chain.

    Each middle node of a two-relation chain and each answer node is expanded
    to its neighbours outside the query. A neighbour whose name is a date
    attaches iff the question holds a 4-digit token equal to its year; any
    other neighbour attaches when its constraint-linker score over question
    n-grams away from the topic mention exceeds theta. Answer nodes only
    consider neighbours reached through a relation whose name contains "type".
    """
    paths = kb.walk(candidate.topic, candidate.chain)
    query_nodes = {node for path in paths for node in path}
    attach_points = set()
    for path in paths:
        if len(candidate.chain) == 2:
            attach_points.add((NodeRole.MIDDLE, path[1]))
        attach_points.add((NodeRole.ANSWER, path[-1]))

    years = question_years(q)
    found = set()
    for role, node in sorted(attach_points):
        for _, neighbor, relation in kb.subgraph_neighbors([node], exclude=query_nodes):
            if role == NodeRole.ANSWER and TYPE_MARKER not in relation:
                continue
            name = kb.name_of(neighbor)
            year = date_year(name)
            if year is not None:
                attach = year in years
            else:
                score, _ = constraint_linker_score(q, name, exclude=topic_mention)
                attach = score > cfg.theta
            if attach:
                found.add(Constraint(role, neighbor, relation))
    if found:
        logger.debug("constraints for %r: %s", q, sorted(found))
    return replace(candidate, constraints=candidate.constraints + tuple(sorted(found - set(candidate.constraints))))


@dataclass
class AnswerResult:
    """ Outcome of one question; failed_stage names the stage that gave up, if any. """
    question: str
    query: QueryCandidate | None = None
    answers: frozenset[str] = frozenset()
    linked: list[LinkerScore] = field(default_factory=list)
    reranked: list[RerankedEntity] = field(default_factory=list)
    failed_stage: str | None = None
    message: str = ""

    @property
    def answered(self) -> bool:
        return self.failed_stage is None

    def to_record(self, kb: KnowledgeBase, qid: str | None = None) -> dict:
        record = {
            "qid": qid,
            "question": self.question,
            "failed_stage": self.failed_stage,
            "message": self.message,
            "linker_top": self.linked[0].entity_id if self.linked else None,
            "reranked_top": self.reranked[0].entity_id if self.reranked else None,
        }
        if self.query is not None:
            rerank = {e.entity_id: e.rerank_score for e in self.reranked}
            record.update({
                "entity": self.query.topic,
                "chain": str(self.query.chain),
                "constraints": [[c.node, c.entity, c.relation] for c in self.query.constraints],
                "answers": sorted(self.answers),
                "answer_names": sorted(kb.name_of(a) for a in self.answers),
                "scores": {
                    "rerank": rerank.get(self.query.topic),
                    "relation": self.query.relation_score,
                    "query": self.query.score,
                },
            })
        return record


def linker_scores_from_records(q: str, records: Sequence[LinkedRecord]) -> list[LinkerScore]:
    """ Pre-linked results as linker scores, each mention located in the question. """
    return [LinkerScore(r.entity_id, locate_mention(q, r.mention_text), r.score) for r in records]


def answer_question(cfg: PipelineConfig, kb: KnowledgeBase, q: str,
                    linked: Sequence[LinkerScore] | None = None,
                    catalog: Mapping[str, str] | None = None) -> AnswerResult:
    """
    Link, re-rank, detect relations, generate the top query, attach constraints
    and execute it.

    Args:
        cfg: pipeline knobs and the frozen detector
        kb: the knowledge base
        q: question text
        linked: pre-linked entities to use instead of link_top_k
        catalog: entity id -> name to link against; every non-CVT entity by default

    Returns:
        An AnswerResult; failures of any stage are reported in it, not raised.

    :raises ConfigError: no detector configured
    """
    cfg.require_detector()
    result = AnswerResult(q)
    stage = Stage.LINKING
    try:
        if linked is None:
            linked = link_top_k(q, catalog if catalog is not None else entity_catalog(kb), cfg.k)
        result.linked = list(linked)[:cfg.k]
        if not result.linked:
            raise UnanswerableError(stage, "no entity matches the question")

        stage = Stage.RERANKING
        result.reranked = rerank_entities(cfg, kb, q, result.linked) if cfg.rerank else skip_rerank(result.linked)

        stage = Stage.RELATION_DETECTION
        per_entity: dict[str, list[ScoredChain]] = {}
        mentions = {}
        for entity in result.reranked:
            if entity.mention is None:
                continue
            try:
                per_entity[entity.entity_id] = detect_relations(cfg, kb, q, entity.entity_id, entity.mention)
            except ChainOverflowError as exc:
                logger.warning("%s", exc)
                continue
            mentions[entity.entity_id] = entity.mention

        stage = Stage.QUERY_GENERATION
        query = generate_query(cfg, result.reranked, per_entity)

        if cfg.constraints:
            stage = Stage.CONSTRAINT_DETECTION
            query = detect_constraints(cfg, kb, q, mentions[query.topic], query)

        stage = Stage.EXECUTION
        result.answers = kb.execute_query(query.topic, query.chain, query.constraints)
        result.query = query
    except UnanswerableError as exc:
        result.failed_stage, result.message = exc.stage, exc.message
    except KbqaError as exc:
        result.failed_stage, result.message = stage, str(exc)
    if result.failed_stage is not None:
        logger.info("unanswerable at %s: %r (%s)", result.failed_stage, q, result.message)
    return result


RECALL_CUTOFFS = (1, 10, 20, 50)


@dataclass
class PipelineReport:
    """
    Accuracy figures over gold parses.

    query_accuracy: chosen (entity, chain) equals the gold (topic, chain)
    linker_top1 / reranked_top1: first entity of EL_K / EL'_K' is the gold topic
    chain_accuracy: chain correct among questions whose chosen entity is correct
    linker_recall / reranked_recall: cutoff -> share of questions whose gold topic
    is within the first cutoff entities of EL_K / EL'_K'
    """
    questions: int
    query_accuracy: float
    linker_top1: float
    reranked_top1: float
    chain_accuracy: float
    unanswered: int
    linker_recall: dict[int, float] = field(default_factory=dict)
    reranked_recall: dict[int, float] = field(default_factory=dict)


def recall_at(ranked: Sequence[Sequence[str]], gold: Sequence[str],
              cutoffs: Sequence[int] = RECALL_CUTOFFS) -> dict[int, float]:
    """ cutoff -> fraction of lists holding their gold id among the first cutoff ids. """
    if not gold:
        raise UsageError("recall of no questions")
    return {k: sum(g in ids[:k] for ids, g in zip(ranked, gold)) / len(gold) for k in cutoffs}


def evaluate_pipeline(cfg: PipelineConfig, kb: KnowledgeBase, parses: Sequence[GoldParse],
                      linked: Mapping[str, Sequence[LinkedRecord]] | None = None,
                      workers: int = 1) -> tuple[PipelineReport, list[AnswerResult]]:
    """ Answer every parsed question (on a thread pool when workers > 1) and score the chosen queries. """
    if not parses:
        raise UsageError("pipeline evaluation needs at least one parse")
    catalog = entity_catalog(kb)

    def run(parse: GoldParse) -> AnswerResult:
        pre = None
        if linked is not None:
            try:
                pre = linker_scores_from_records(parse.question, linked.get(parse.qid, []))
            except KbqaError as exc:
                return AnswerResult(parse.question, failed_stage=Stage.LINKING, message=str(exc))
        return answer_question(cfg, kb, parse.question, linked=pre, catalog=catalog)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, parses))
    else:
        results = [run(p) for p in parses]

    n = len(parses)
    gold = [p.topic for p in parses]
    exact = linker_hits = rerank_hits = topic_hits = chain_hits = 0
    for parse, result in zip(parses, results):
        linker_hits += bool(result.linked) and result.linked[0].entity_id == parse.topic
        rerank_hits += bool(result.reranked) and result.reranked[0].entity_id == parse.topic
        if result.query is not None and result.query.topic == parse.topic:
            topic_hits += 1
            if result.query.chain == parse.chain:
                chain_hits += 1
                exact += 1
    report = PipelineReport(
        questions=n,
        query_accuracy=exact / n,
        linker_top1=linker_hits / n,
        reranked_top1=rerank_hits / n,
        chain_accuracy=chain_hits / topic_hits if topic_hits else 0.0,
        unanswered=sum(not r.answered for r in results),
        linker_recall=recall_at([[e.entity_id for e in r.linked] for r in results], gold),
        reranked_recall=recall_at([[e.entity_id for e in r.reranked] for r in results], gold),
    )
    logger.info("pipeline accuracy %.4f over %d questions", report.query_accuracy, n)
    return report, results

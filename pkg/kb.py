"""
Immutable in-memory knowledge base.

Triples file: ``head<TAB>relation<TAB>tail`` per line, UTF-8, ``#`` comments.
Entity catalog file: ``id<TAB>surface name<TAB>cvt|plain``. Entities that
appear only in triples are catalogued as plain nodes named by their id.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Sequence

from errors import ChainOverflowError, DomainError, EntityLookupError, ParseError

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

CHAIN_CAP = 10_000
CVT = "cvt"
PLAIN = "plain"


def tokenize_relation(name: str) -> tuple[str, ...]:
    """ Relation name -> lowercased words, splitting on "_" and ".". """
    return tuple(w for w in re.split(r"[_.]+", name.lower()) if w)


@dataclass(frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    cvt: bool = False


@dataclass(frozen=True)
class Relation:
    id: str
    words: tuple[str, ...]

    @property
    def name(self) -> str:
        return self.id


@dataclass(frozen=True, order=True)
class RelationChain:
    """ One or two relations walked from the topic entity; printed as "r1-r2". """
    relations: tuple[str, ...]

    def __post_init__(self):
        if len(self.relations) not in (1, 2):
            raise DomainError(f"relation chains have length 1 or 2, got {self.relations}")

    def __len__(self) -> int:
        return len(self.relations)

    def __str__(self) -> str:
        return "-".join(self.relations)


class NodeRole:
    """ Position on a core chain that a constraint attaches to. """
    MIDDLE = "middle"
    ANSWER = "answer"
    OPTIONS = (
        MIDDLE,
        ANSWER,
    )


@dataclass(frozen=True, order=True)
class Constraint:
    """ Keep walks whose `node` is linked to `entity` by `relation`, in either direction. """
    node: str
    entity: str
    relation: str

    def __post_init__(self):
        if self.node not in NodeRole.OPTIONS:
            raise DomainError(f"constraint node must be one of {NodeRole.OPTIONS}, got {self.node!r}")


class KnowledgeBase:
    """ Directed multigraph of deduplicated triples with entity and relation catalogs.

    Nothing mutates a KnowledgeBase after construction, so one instance can be
    shared by any number of concurrent readers.
    """

    def __init__(self, triples: Iterable[Triple], entities: Iterable[Entity] = ()) -> None:
        unique = sorted(set(triples))
        catalog = {e.id: e for e in entities}
        for t in unique:
            for node in (t.head, t.tail):
                if node not in catalog:
                    catalog[node] = Entity(node, node)
        outgoing: dict[str, list[tuple[str, str]]] = {e: [] for e in catalog}
        incoming: dict[str, list[tuple[str, str]]] = {e: [] for e in catalog}
        for t in unique:
            outgoing[t.head].append((t.relation, t.tail))
            incoming[t.tail].append((t.relation, t.head))

        self._triples = tuple(unique)
        self._triple_set = frozenset(unique)
        self._entities = MappingProxyType(dict(sorted(catalog.items())))
        self._relations = MappingProxyType({r: Relation(r, tokenize_relation(r))
                                            for r in sorted({t.relation for t in unique})})
        self._outgoing = MappingProxyType({e: tuple(v) for e, v in outgoing.items()})
        self._incoming = MappingProxyType({e: tuple(v) for e, v in incoming.items()})

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def triples(self) -> tuple[Triple, ...]:
        return self._triples

    @property
    def entities(self) -> MappingProxyType:
        return self._entities

    @property
    def relations(self) -> MappingProxyType:
        return self._relations

    def has_entity(self, e: str) -> bool:
        return e in self._entities

    def entity(self, e: str) -> Entity:
        try:
            return self._entities[e]
        except KeyError:
            raise EntityLookupError(f"unknown entity {e!r}") from None

    def relation(self, r: str) -> Relation:
        try:
            return self._relations[r]
        except KeyError:
            raise EntityLookupError(f"unknown relation {r!r}") from None

    def name_of(self, e: str) -> str:
        return self.entity(e).name

    def outgoing(self, e: str) -> tuple[tuple[str, str], ...]:
        self.entity(e)
        return self._outgoing[e]

    def incoming(self, e: str) -> tuple[tuple[str, str], ...]:
        self.entity(e)
        return self._incoming[e]

    def has_edge(self, head: str, relation: str, tail: str) -> bool:
        return Triple(head, relation, tail) in self._triple_set

    def relations_of_entity(self, e: str) -> frozenset[str]:
        """ R_e: distinct relations on the outgoing edges of e.
        :raises EntityLookupError: unknown entity
        """
        return frozenset(r for r, _ in self.outgoing(e))

    def core_chain_candidates(self, e: str, cap: int = CHAIN_CAP) -> list[RelationChain]:
        """
        Every relation of e, and every r1-r2 where r2 leaves some tail of (e, r1).

        Returns:
            Duplicate-free chains sorted by their relation names.

        :raises EntityLookupError: unknown entity
        :raises ChainOverflowError: more than `cap` distinct chains
        :complexity: O(sum over tails of their out-degree)
        """
        chains: set[tuple[str, ...]] = set()
        for r1, tail in self.outgoing(e):
            chains.add((r1,))
            for r2, _ in self._outgoing[tail]:
                chains.add((r1, r2))
            if len(chains) > cap:
                raise ChainOverflowError(f"{e}: more than {cap} candidate chains")
        return [RelationChain(c) for c in sorted(chains)]

    def walk(self, e: str, chain: RelationChain) -> list[tuple[str, ...]]:
        """ All node paths (e, n1[, n2]) that follow the chain. """
        self.entity(e)
        for r in chain.relations:
            self.relation(r)
        paths = [(e,)]
        for r in chain.relations:
            paths = [p + (tail,) for p in paths for rel, tail in self._outgoing[p[-1]] if rel == r]
        return paths

    def execute_query(self, e: str, chain: RelationChain,
                      constraints: Sequence[Constraint] = ()) -> frozenset[str]:
        """
        Answers of the query (e, chain, constraints).

        A constraint on the middle node needs a length-2 chain. Constraints are
        conjunctive: a walk survives only if every one of them holds.

        :raises EntityLookupError: unknown entity or relation ids
        :raises DomainError: a middle-node constraint on a length-1 chain
        """
        for c in constraints:
            self.entity(c.entity)
            self.relation(c.relation)
            if c.node == NodeRole.MIDDLE and len(chain) < 2:
                raise DomainError("middle-node constraint on a length-1 chain")
        answers = set()
        for path in self.walk(e, chain):
            if all(self._holds(path, c) for c in constraints):
                answers.add(path[-1])
        return frozenset(answers)

    def _holds(self, path: tuple[str, ...], c: Constraint) -> bool:
        v = path[-1] if c.node == NodeRole.ANSWER else path[1]
        return self.has_edge(v, c.relation, c.entity) or self.has_edge(c.entity, c.relation, v)

    def subgraph_neighbors(self, nodes: Sequence[str],
                           exclude: Iterable[str] | None = None) -> list[tuple[str, str, str]]:
        """
        (v, c, r_c) for every edge touching each v, in both directions.

        Args:
            nodes: nodes of the query to expand
            exclude: neighbours to drop; defaults to `nodes` themselves
        """
        skip = set(nodes) if exclude is None else set(exclude)
        found = []
        for v in nodes:
            for r, c in self.outgoing(v):
                if c not in skip:
                    found.append((v, c, r))
            for r, c in self._incoming[v]:
                if c not in skip:
                    found.append((v, c, r))
        return found


def _split_fields(path: str, line_no: int, line: str, count: int) -> list[str] | None:
    stripped = line.rstrip("\r\n")
    if not stripped.strip() or stripped.lstrip().startswith("#"):
        return None
    fields = stripped.split("\t")
    if len(fields) != count or any(not f.strip() for f in fields):
        raise ParseError(path, line_no, f"expected {count} tab-separated fields, got {len(fields)}")
    return [f.strip() for f in fields]


def read_triples(path: str) -> list[Triple]:
    triples = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            fields = _split_fields(path, line_no, line, 3)
            if fields is not None:
                triples.append(Triple(*fields))
    return triples


def read_entities(path: str) -> list[Entity]:
    entities = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            fields = _split_fields(path, line_no, line, 3)
            if fields is None:
                continue
            kind = fields[2].lower()
            if kind not in (CVT, PLAIN):
                raise ParseError(path, line_no, f"entity kind must be {CVT} or {PLAIN}, got {fields[2]!r}")
            entities.append(Entity(fields[0], fields[1], kind == CVT))
    return entities


def load_triples(path: str, entity_path: str | None = None) -> KnowledgeBase:
    """ Build a KnowledgeBase from a triples file and an optional entity catalog.
    :raises ParseError: malformed line, with its 1-based number
    """
    entities = read_entities(entity_path) if entity_path else []
    kb = KnowledgeBase(read_triples(path), entities)
    logger.info("loaded %d triples, %d entities, %d relations from %s",
                len(kb), len(kb.entities), len(kb.relations), path)
    return kb


def dump_triples(kb: KnowledgeBase, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in kb.triples:
            f.write(f"{t.head}\t{t.relation}\t{t.tail}\n")


def dump_entities(kb: KnowledgeBase, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in kb.entities.values():
            f.write(f"{e.id}\t{e.name}\t{CVT if e.cvt else PLAIN}\n")

import os
import tempfile
import unittest

from ed_utils.decorators import number

from errors import ChainOverflowError, DomainError, EntityLookupError, ParseError
from kb import (Constraint, KnowledgeBase, NodeRole, RelationChain, Triple, dump_entities, dump_triples,
                load_triples, tokenize_relation)

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")


def toy_kb():
    return load_triples(os.path.join(FIXTURES, "toy_kb.tsv"), os.path.join(FIXTURES, "toy_entities.tsv"))


class TestLoading(unittest.TestCase):

    @number("kb.1")
    def test_load_fixture(self):
        kb = toy_kb()
        self.assertEqual(len(kb), 15)
        self.assertEqual(len(kb.entities), 18)
        self.assertEqual(kb.name_of("SwingTown"), "Swingtown")
        self.assertTrue(kb.entity("m.cvt1").cvt)
        self.assertFalse(kb.entity("GrantShow").cvt)
        self.assertEqual(kb.relation("common.topic.notable_types").words, ("common", "topic", "notable", "types"))

    @number("kb.2")
    def test_duplicates_and_uncatalogued_nodes(self):
        kb = KnowledgeBase([Triple("a", "r", "b"), Triple("a", "r", "b")])
        self.assertEqual(len(kb), 1)
        self.assertEqual(kb.name_of("b"), "b")
        self.assertEqual(kb.outgoing("b"), ())
        self.assertEqual(kb.incoming("b"), (("r", "a"),))

    @number("kb.3")
    def test_malformed_lines(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "kb.tsv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("# comment\na\tr\tb\n\na\tr\n")
            with self.assertRaises(ParseError) as ctx:
                load_triples(path)
            self.assertEqual(ctx.exception.line_no, 4)

            entities = os.path.join(tmp, "entities.tsv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("a\tr\tb\n")
            with open(entities, "w", encoding="utf-8") as f:
                f.write("a\tA\tplain\nb\tB\tcompound\n")
            with self.assertRaises(ParseError) as ctx:
                load_triples(path, entities)
            self.assertEqual(ctx.exception.line_no, 2)

    @number("kb.4")
    def test_dump_and_reload(self):
        kb = toy_kb()
        with tempfile.TemporaryDirectory() as tmp:
            triples, entities = os.path.join(tmp, "kb.tsv"), os.path.join(tmp, "entities.tsv")
            dump_triples(kb, triples)
            dump_entities(kb, entities)
            again = load_triples(triples, entities)
        self.assertEqual(again.triples, kb.triples)
        self.assertEqual(dict(again.entities), dict(kb.entities))


class TestTypes(unittest.TestCase):

    @number("kb.5")
    def test_relation_words(self):
        self.assertEqual(tokenize_relation("people.person.Place_of_birth"), ("people", "person", "place", "of", "birth"))
        self.assertEqual(tokenize_relation("plays_for"), ("plays", "for"))

    @number("kb.6")
    def test_chain_and_constraint(self):
        self.assertEqual(str(RelationChain(("starring_roles", "series"))), "starring_roles-series")
        self.assertEqual(len(RelationChain(("a",))), 1)
        for bad in ((), ("a", "b", "c")):
            with self.assertRaises(DomainError):
                RelationChain(bad)
        with self.assertRaises(DomainError):
            Constraint("first", "x", "r")

    @number("kb.7")
    def test_lookup_errors(self):
        kb = toy_kb()
        with self.assertRaises(EntityLookupError) as ctx:
            kb.entity("Nobody")
        self.assertIn("Nobody", str(ctx.exception))
        with self.assertRaises(EntityLookupError):
            kb.relation("spouse")
        with self.assertRaises(EntityLookupError):
            kb.relations_of_entity("Nobody")


class TestChains(unittest.TestCase):

    @number("kb.8")
    def test_relations_of_entity(self):
        kb = toy_kb()
        self.assertEqual(kb.relations_of_entity("GrantShow"), frozenset({"starring_roles", "plays_produced"}))
        self.assertEqual(kb.relations_of_entity("BostonRedSox"), frozenset())

    @number("kb.9")
    def test_core_chain_candidates(self):
        chains = [c.relations for c in toy_kb().core_chain_candidates("GrantShow")]
        self.assertEqual(chains, [("plays_produced",), ("starring_roles",), ("starring_roles", "from_year"),
                                  ("starring_roles", "series")])
        self.assertEqual(toy_kb().core_chain_candidates("BostonRedSox"), [])

    @number("kb.10")
    def test_chain_cap(self):
        with self.assertRaises(ChainOverflowError):
            toy_kb().core_chain_candidates("GrantShow", cap=2)


class TestQueries(unittest.TestCase):

    def setUp(self):
        self.kb = toy_kb()
        self.role_series = RelationChain(("starring_roles", "series"))

    @number("kb.11")
    def test_walk(self):
        paths = self.kb.walk("GrantShow", self.role_series)
        self.assertEqual(sorted(paths), [("GrantShow", "m.cvt1", "SwingTown"), ("GrantShow", "m.cvt2", "MelrosePlace"),
                                         ("GrantShow", "m.cvt3", "BigLove")])

    @number("kb.12")
    def test_execute_query(self):
        self.assertEqual(self.kb.execute_query("GrantShow", self.role_series),
                         frozenset({"SwingTown", "MelrosePlace", "BigLove"}))
        self.assertEqual(self.kb.execute_query("MikeKelley_writer", RelationChain(("episodes_written",))),
                         frozenset({"LoveWillFindAWay"}))
        self.assertEqual(self.kb.execute_query("MikeKelley_writer", RelationChain(("plays_for",))), frozenset())

    @number("kb.13")
    def test_constraints(self):
        year = Constraint(NodeRole.MIDDLE, "2008-05-12", "from_year")
        self.assertEqual(self.kb.execute_query("GrantShow", self.role_series, [year]), frozenset({"SwingTown"}))
        kind = Constraint(NodeRole.ANSWER, "TVProgram", "common.topic.notable_types")
        self.assertEqual(self.kb.execute_query("GrantShow", self.role_series, [kind]), frozenset({"SwingTown"}))
        other_year = Constraint(NodeRole.MIDDLE, "1992-07-08", "from_year")
        self.assertEqual(self.kb.execute_query("GrantShow", self.role_series, [kind, other_year]), frozenset())
        # an edge pointing at the node satisfies the constraint as well
        incoming = Constraint(NodeRole.ANSWER, "m.cvt1", "series")
        self.assertEqual(self.kb.execute_query("GrantShow", self.role_series, [incoming]), frozenset({"SwingTown"}))

    @number("kb.14")
    def test_query_errors(self):
        with self.assertRaises(DomainError):
            self.kb.execute_query("GrantShow", RelationChain(("starring_roles",)),
                                  [Constraint(NodeRole.MIDDLE, "2008-05-12", "from_year")])
        with self.assertRaises(EntityLookupError):
            self.kb.execute_query("Nobody", self.role_series)
        with self.assertRaises(EntityLookupError):
            self.kb.execute_query("GrantShow", RelationChain(("spouse",)))
        with self.assertRaises(EntityLookupError):
            self.kb.execute_query("GrantShow", self.role_series, [Constraint(NodeRole.ANSWER, "Nobody", "series")])

    @number("kb.15")
    def test_subgraph_neighbors(self):
        self.assertEqual(self.kb.subgraph_neighbors(["m.cvt1"]),
                         [("m.cvt1", "2008-05-12", "from_year"), ("m.cvt1", "SwingTown", "series"),
                          ("m.cvt1", "GrantShow", "starring_roles")])
        self.assertEqual(self.kb.subgraph_neighbors(["m.cvt1"], exclude=["GrantShow", "SwingTown"]),
                         [("m.cvt1", "2008-05-12", "from_year")])


if __name__ == '__main__':
    unittest.main()

import os
import tempfile
import unittest

import numpy as np

from ed_utils.decorators import number

from errors import ConfigError, DomainError, ParseError, ReformatError
from kb import load_triples
from linker import (Mention, constraint_linker_score, entity_catalog, enumerate_mentions, lccs_len, link_top_k,
                    load_linked_results, locate_mention, mention_value, normalize, replace_mention,
                    simple_linker_score)

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")
WORDS = ("mike", "kelley", "grant", "show", "tv", "who", "is", "a", "xyz", "lee")


def longest_shared_run(m, e):
    """ Longest substring of m that also occurs in e, by trying them all. """
    return max((j - i for i in range(len(m)) for j in range(i + 1, len(m) + 1) if m[i:j] in e), default=0)


def random_text(rng, low, high):
    return " ".join(rng.choice(WORDS, size=rng.integers(low, high + 1)))


def best_by_enumeration(q, e, with_position, exclude=None):
    """ Linker score of a single-spaced, punctuation-free q over every n-gram of up to six words. """
    words = q.split(" ")
    starts = [sum(len(w) + 1 for w in words[:i]) for i in range(len(words))]
    best_key, best = None, (0.0, None)
    for i in range(len(words)):
        for j in range(i, min(len(words), i + 6)):
            mention = Mention(" ".join(words[i:j + 1]), starts[i])
            if exclude is not None and mention.overlaps(exclude):
                continue
            overlap = longest_shared_run(mention.text, e)
            if overlap == 0:
                continue
            value = overlap / len(q) + overlap / len(e)
            if with_position:
                value = value + mention.start / len(q)
            key = (value, -mention.length, -mention.start)
            if best_key is None or key > best_key:
                best_key, best = key, (value, mention)
    return best


class TestText(unittest.TestCase):

    @number("linker.1")
    def test_normalize(self):
        self.assertEqual(normalize("  Mike \t KELLEY "), "mike kelley")

    @number("linker.2")
    def test_lccs(self):
        self.assertEqual(lccs_len("kelley", "mike kelley"), 6)
        self.assertEqual(lccs_len("abc", "xbcy"), 2)
        self.assertEqual(lccs_len("", "abc"), 0)
        self.assertEqual(lccs_len("abc", "xyz"), 0)
        for a, b in (("grant show", "show"), ("swingtown", "tv show")):
            self.assertEqual(lccs_len(a, b), lccs_len(b, a))

    @number("linker.16")
    def test_lccs_matches_substring_search(self):
        rng = np.random.default_rng(16)
        for _ in range(300):
            m = "".join(rng.choice(list("ab c"), size=rng.integers(0, 31)))
            e = "".join(rng.choice(list("ab c"), size=rng.integers(0, 31)))
            self.assertEqual(lccs_len(m, e), longest_shared_run(m, e), (m, e))

    @number("linker.3")
    def test_mentions(self):
        mentions = enumerate_mentions("who is mike?")
        self.assertEqual(len(mentions), 6)
        self.assertIn(Mention("mike", 7), mentions)
        self.assertIn(Mention("is mike", 4), mentions)
        self.assertEqual(len(enumerate_mentions("a b c d e f g h", max_words=2)), 8 + 7)

    @number("linker.4")
    def test_mention_geometry(self):
        self.assertEqual(Mention("show", 6).end, 10)
        self.assertTrue(Mention("grant show", 0).overlaps(Mention("show", 6)))
        self.assertFalse(Mention("grant", 0).overlaps(Mention("show", 6)))
        with self.assertRaises(DomainError):
            Mention("x", -1)


class TestScores(unittest.TestCase):

    @number("linker.5")
    def test_exact_name(self):
        score, mention = simple_linker_score("Mike Kelley", "Mike Kelley")
        self.assertEqual(score, 2.0)
        self.assertEqual(mention, Mention("mike kelley", 0))

    @number("linker.6")
    def test_position_breaks_repeats(self):
        score, mention = simple_linker_score("ab ab", "ab")
        self.assertAlmostEqual(score, 2.0)
        self.assertEqual(mention, Mention("ab", 3))
        score, mention = constraint_linker_score("ab ab", "ab")
        self.assertAlmostEqual(score, 1.4)
        self.assertEqual(mention, Mention("ab", 0))
        _, mention = constraint_linker_score("ab ab", "ab", exclude=Mention("ab", 0))
        self.assertEqual(mention, Mention("ab", 3))

    @number("linker.7")
    def test_position_term_is_additive(self):
        q, e = "what tv show did grant show play on", "grant show"
        for m in enumerate_mentions(q):
            self.assertEqual(mention_value(q, e, m, True), mention_value(q, e, m, False) + m.start / len(q))

    @number("linker.8")
    def test_no_overlap_and_empty(self):
        self.assertEqual(simple_linker_score("xyz", "ab"), (0.0, None))
        with self.assertRaises(DomainError):
            simple_linker_score("", "ab")
        with self.assertRaises(DomainError):
            simple_linker_score("what", "  ")

    @number("linker.17")
    def test_worked_examples(self):
        score, mention = simple_linker_score("who is mike kelley", "mike kelley")
        self.assertAlmostEqual(score, 2.0)
        self.assertEqual(mention, Mention("mike kelley", 7))
        score, mention = constraint_linker_score("who is mike kelley", "mike kelley")
        self.assertAlmostEqual(score, 11 / 18 + 1.0)
        self.assertAlmostEqual(score, 1.6111, places=4)
        self.assertEqual(lccs_len("mike kelley", "kelley mike"), 6)

    @number("linker.18")
    def test_simple_score_matches_enumeration(self):
        rng = np.random.default_rng(18)
        for _ in range(250):
            q, e = random_text(rng, 1, 9), random_text(rng, 1, 3)
            self.assertEqual(simple_linker_score(q, e), best_by_enumeration(q, e, True), (q, e))

    @number("linker.19")
    def test_constraint_score_matches_enumeration(self):
        rng = np.random.default_rng(19)
        for _ in range(250):
            q, e = random_text(rng, 1, 9), random_text(rng, 1, 3)
            exclude = None
            if rng.random() < 0.6:
                exclude = enumerate_mentions(q)[rng.integers(len(enumerate_mentions(q)))]
            self.assertEqual(constraint_linker_score(q, e, exclude=exclude),
                             best_by_enumeration(q, e, False, exclude), (q, e, exclude))


class TestLinking(unittest.TestCase):

    def setUp(self):
        self.kb = load_triples(os.path.join(FIXTURES, "toy_kb.tsv"), os.path.join(FIXTURES, "toy_entities.tsv"))

    @number("linker.9")
    def test_catalog_skips_cvt_nodes(self):
        catalog = entity_catalog(self.kb)
        self.assertNotIn("m.cvt1", catalog)
        self.assertEqual(catalog["GrantShow"], "Grant Show")
        self.assertEqual(len(catalog), 15)

    @number("linker.10")
    def test_top_k(self):
        links = link_top_k("which team did mike kelley play for", entity_catalog(self.kb), 3)
        self.assertEqual(len(links), 3)
        self.assertEqual([link.entity_id for link in links[:2]], ["MikeKelley_baseball", "MikeKelley_writer"])
        self.assertEqual(links[0].score, links[1].score)
        scores = [link.score for link in links]
        self.assertEqual(scores, sorted(scores, reverse=True))
        with self.assertRaises(ConfigError):
            link_top_k("anything", entity_catalog(self.kb), 0)

    @number("linker.11")
    def test_top_k_drops_zero_scores(self):
        self.assertEqual(link_top_k("qqq", {"a": "xyz"}, 5), [])


class TestReformat(unittest.TestCase):

    @number("linker.12")
    def test_replace_text(self):
        self.assertEqual(replace_mention("Which team did Mike  Kelley play for", "mike kelley"),
                         "which team did <e> play for")
        self.assertEqual(replace_mention("who is mike kelley", "mike kelley"), "who is <e>")
        with self.assertRaises(ReformatError):
            replace_mention("who is mike kelley", "grant show")

    @number("linker.13")
    def test_replace_mention_object(self):
        q = "what tv show did grant show play on"
        self.assertEqual(replace_mention(q, Mention("show", 23)), "what tv show did grant <e> play on")
        self.assertEqual(locate_mention(q, "show"), Mention("show", 8))
        with self.assertRaises(ReformatError):
            replace_mention(q, Mention("show", 3))


class TestLinkedResults(unittest.TestCase):

    @number("linker.14")
    def test_fixture_order(self):
        linked = load_linked_results(os.path.join(FIXTURES, "toy_linked.tsv"))
        self.assertEqual(sorted(linked), ["q1", "q2", "q3"])
        self.assertEqual([r.entity_id for r in linked["q1"]], ["MikeKelley_baseball", "MikeKelley_writer"])
        self.assertEqual([(r.entity_id, r.mention_text, r.score) for r in linked["q2"]],
                         [("GrantShow", "grant show", 1.6), ("SwingTown", "show", 0.4)])

    @number("linker.15")
    def test_malformed(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "linked.tsv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("q1\tA\ta\t0.5\nq1\tB\tb\thigh\n")
            with self.assertRaises(ParseError) as ctx:
                load_linked_results(path)
        self.assertEqual(ctx.exception.line_no, 2)


if __name__ == '__main__':
    unittest.main()

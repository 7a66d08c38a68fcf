import unittest
from ed_utils.decorators import number

from data_structures.ranked_list import RankedList


class TestRankedList(unittest.TestCase):

    @number("structures.1")
    def test_order(self):
        r = RankedList()
        for value, score in (("low", 0.1), ("high", 0.9), ("mid", 0.5)):
            r.add(value, score, value)
        self.assertEqual(r.values(), ["high", "mid", "low"])
        self.assertEqual(r.best().value, "high")
        self.assertEqual(len(r), 3)

    @number("structures.2")
    def test_ties_use_tie_break(self):
        r = RankedList()
        r.add("writer", 1.5, "MikeKelley_writer")
        r.add("baseball", 1.5, "MikeKelley_baseball")
        self.assertEqual(r.values(), ["baseball", "writer"])
        r.add("chain", 1.5, "MikeKelley_baseball")
        # equal keys keep insertion order
        self.assertEqual(r.values(), ["baseball", "chain", "writer"])

    @number("structures.3")
    def test_capacity(self):
        r = RankedList(capacity=2)
        self.assertTrue(r.add("a", 0.2, "a"))
        self.assertTrue(r.add("b", 0.3, "b"))
        self.assertFalse(r.add("c", 0.1, "c"))
        self.assertTrue(r.add("d", 0.5, "d"))
        self.assertEqual(r.values(), ["d", "b"])
        with self.assertRaises(ValueError):
            RankedList(capacity=0)

    @number("structures.4")
    def test_delete_and_clear(self):
        r = RankedList()
        with self.assertRaises(IndexError):
            r.best()
        r.add("a", 1.0, "a")
        r.add("b", 2.0, "b")
        self.assertEqual(r.delete_at_index(0).value, "b")
        with self.assertRaises(IndexError):
            r.delete_at_index(3)
        r.clear()
        self.assertTrue(r.is_empty())


if __name__ == '__main__':
    unittest.main()

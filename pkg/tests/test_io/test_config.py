import os
import unittest

from ed_utils.decorators import number

from config import build_config, load_config, parse_config, read_config
from errors import ConfigError

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")
TOY_CONFIG = os.path.join(FIXTURES, "toy.cfg")


class TestParse(unittest.TestCase):

    @number("io.10")
    def test_values_are_typed(self):
        values = parse_config(["# comment", "", "k = 20", "model=bilstm", "negatives = none",
                               "freeze_pretrained = yes", "alpha = 0.25"])
        self.assertEqual(values, {"k": 20, "model": "bilstm", "negatives": None, "freeze_pretrained": True,
                                  "alpha": 0.25})

    @number("io.11")
    def test_errors_name_the_line(self):
        cases = (
            (["k = 20", "just words"], "cfg:2:"),
            (["colour = red"], "cfg:1:"),
            (["k = 20", "", "k = 30"], "cfg:3:"),
            (["k = many"], "cfg:1:"),
            (["freeze_pretrained = perhaps"], "cfg:1:"),
            (["k ="], "cfg:1:"),
        )
        for lines, prefix in cases:
            with self.assertRaises(ConfigError) as ctx:
                parse_config(lines, "cfg")
            self.assertTrue(str(ctx.exception).startswith(prefix), str(ctx.exception))


class TestBuild(unittest.TestCase):

    @number("io.12")
    def test_fixture(self):
        cfg = load_config(TOY_CONFIG)
        self.assertEqual((cfg.pipeline.k, cfg.pipeline.k_prime, cfg.pipeline.theta), (20, 5, 0.6))
        self.assertEqual((cfg.scorer.model, cfg.scorer.hidden_size, cfg.scorer.embedding_dim), ("hr_bilstm", 6, 8))
        self.assertEqual((cfg.hyperparams.hidden_size, cfg.hyperparams.epochs), (6, 20))
        self.assertEqual((cfg.scorer.seed, cfg.hyperparams.seed), (7, 7))
        self.assertEqual(read_config(TOY_CONFIG)["learning_rate"], 0.5)

    @number("io.13")
    def test_defaults(self):
        cfg = load_config()
        self.assertEqual((cfg.pipeline.k, cfg.pipeline.k_prime, cfg.pipeline.top_l), (50, 10, 5))
        self.assertEqual((cfg.hyperparams.margin, cfg.hyperparams.learning_rate), (0.5, 0.5))
        self.assertEqual(cfg.scorer.model, "hr_bilstm")

    @number("io.14")
    def test_overrides(self):
        cfg = load_config(TOY_CONFIG, {"k": 30, "alpha": None, "hidden_size": 4})
        self.assertEqual(cfg.pipeline.k, 30)
        self.assertEqual(cfg.pipeline.alpha, 0.6)
        self.assertEqual((cfg.scorer.hidden_size, cfg.hyperparams.hidden_size), (4, 4))

    @number("io.15")
    def test_inconsistent_values(self):
        with self.assertRaises(ConfigError):
            build_config({"k": 5, "k_prime": 5})
        with self.assertRaises(ConfigError):
            build_config({"colour": "red"})
        with self.assertRaises(ConfigError):
            build_config({"model": "bilstm", "variant": "hidden_shortcut"})
        with self.assertRaises(ConfigError):
            load_config(TOY_CONFIG, {"model": "bilstm"})

    @number("io.16")
    def test_ablation_switches(self):
        cfg = load_config(TOY_CONFIG)
        self.assertTrue(cfg.pipeline.rerank and cfg.pipeline.constraints)
        values = parse_config(["rerank = no", "constraints = false"])
        self.assertEqual(values, {"rerank": False, "constraints": False})
        cfg = build_config(values)
        self.assertEqual((cfg.pipeline.rerank, cfg.pipeline.constraints), (False, False))
        cfg = load_config(TOY_CONFIG, {"rerank": None, "constraints": False})
        self.assertEqual((cfg.pipeline.rerank, cfg.pipeline.constraints), (True, False))
        with self.assertRaises(ConfigError):
            parse_config(["rerank = sometimes"])


if __name__ == '__main__':
    unittest.main()

import contextlib
import io
import json
import os
import struct
import tempfile
import unittest

from ed_utils.decorators import hide_errors, number

from checkpoint import MAGIC
from main import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from scorers import load_scorer
from task_io import read_task

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")
KB_ARGS = ["--kb", os.path.join(FIXTURES, "toy_kb.tsv"), "--entities", os.path.join(FIXTURES, "toy_entities.tsv")]
CONFIG_ARGS = ["--config", os.path.join(FIXTURES, "toy.cfg")]
PARSES = os.path.join(FIXTURES, "toy_parses.tsv")
SMALL_MODEL = ["--epochs", "2", "--hidden-size", "2", "--embedding-dim", "3"]
Q1 = "what tv episodes were mike kelley the writer of"
Q2 = "what tv show did grant show play on in 2008"


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        status = main(argv)
    return status, out.getvalue()


class TestExitCodes(unittest.TestCase):

    @number("io.20")
    def test_usage(self):
        self.assertEqual(run([])[0], EXIT_CONFIG)
        self.assertEqual(run(["link", "--question", "x"])[0], EXIT_CONFIG)
        status, out = run(["--help"])
        self.assertEqual(status, EXIT_OK)
        self.assertIn("pipeline-eval", out)

    @number("io.21")
    def test_bad_configuration(self):
        argv = ["link"] + KB_ARGS + ["--question", "who", "--alpha", "2"]
        self.assertEqual(run(argv)[0], EXIT_CONFIG)
        argv = ["link"] + KB_ARGS + ["--question", "who", "--model", "bicnn", "--view", "names"]
        self.assertEqual(run(argv)[0], EXIT_CONFIG)

    @number("io.22")
    def test_missing_and_malformed_files(self):
        self.assertEqual(run(["link", "--kb", os.path.join(FIXTURES, "absent.tsv"), "--question", "who"])[0],
                         EXIT_DATA)
        with tempfile.TemporaryDirectory() as tmp:
            fake = os.path.join(tmp, "fake.ckpt")
            with open(fake, "wb") as f:
                f.write(b"not a checkpoint")
            argv = ["answer"] + KB_ARGS + ["--checkpoint", fake, "--question", "who"]
            self.assertEqual(run(argv)[0], EXIT_DATA)
            with open(fake, "wb") as f:
                f.write(MAGIC + struct.pack("<HI", 1, 3) + b"{{{")
            argv = ["eval-rel", "--task", os.path.join(tmp, "task.tsv"), "--checkpoint", fake]
            self.assertEqual(run(argv)[0], EXIT_DATA)


class TestCommands(unittest.TestCase):

    @number("io.23")
    def test_link(self):
        argv = ["link"] + KB_ARGS + CONFIG_ARGS + ["--question", "which team did mike kelley play for", "-k", "3",
                                                   "--k-prime", "2"]
        status, out = run(argv)
        self.assertEqual(status, EXIT_OK)
        lines = out.splitlines()
        self.assertTrue(2 <= len(lines) <= 3)
        self.assertEqual(lines[0].split("\t")[:3], ["MikeKelley_baseball", "Mike Kelley", "mike kelley"])

    @number("io.24")
    def test_build_train_evaluate_answer(self):
        with tempfile.TemporaryDirectory() as tmp:
            task, ckpt = os.path.join(tmp, "task.tsv"), os.path.join(tmp, "model.ckpt")
            report = os.path.join(tmp, "report.jsonl")
            status, _ = run(["build-task"] + KB_ARGS + ["--parses", PARSES, "--out", task])
            self.assertEqual(status, EXIT_OK)
            self.assertEqual(len(read_task(task)), 3)

            status, _ = run(["train"] + CONFIG_ARGS + SMALL_MODEL + ["--task", task, "--checkpoint", ckpt,
                                                                     "--report", report])
            self.assertEqual(status, EXIT_OK)
            with open(report, encoding="utf-8") as f:
                self.assertEqual(len(f.readlines()), 2)

            status, out = run(["eval-rel", "--task", task, "--checkpoint", ckpt])
            self.assertEqual(status, EXIT_OK)
            accuracy = float(out.strip())
            self.assertTrue(0.0 <= accuracy <= 1.0)
            status, out = run(["eval-rel", "--task", task, "--checkpoint", ckpt, ckpt, "--workers", "2"])
            self.assertEqual((status, float(out.strip())), (EXIT_OK, accuracy))

            status, out = run(["answer"] + KB_ARGS + CONFIG_ARGS + ["--checkpoint", ckpt,
                                                                    "--question", "which team did mike kelley play for"])
            self.assertEqual(status, EXIT_OK)
            record = json.loads(out)
            self.assertEqual(record["qid"], "q")
            self.assertEqual(record["question"], "which team did mike kelley play for")
            self.assertEqual(record["linker_top"], "MikeKelley_baseball")

            status, out = run(["pipeline-eval"] + KB_ARGS + CONFIG_ARGS +
                              ["--checkpoint", ckpt, "--parses", PARSES,
                               "--linked", os.path.join(FIXTURES, "toy_linked.tsv")])
            self.assertEqual(status, EXIT_OK)
            lines = out.splitlines()
            self.assertEqual(lines[0], "questions\t3")
            self.assertTrue(lines[5].startswith("unanswered\t"))
            self.assertEqual([line.split("\t")[0] for line in lines[6:]],
                             ["recall@1", "recall@10", "recall@20", "recall@50"])
            self.assertEqual(lines[6].split("\t")[1], "0.667")
            self.assertEqual(lines[7].split("\t")[1:], ["1.000", "1.000"])

            status, out = run(["answer"] + KB_ARGS + CONFIG_ARGS +
                              ["--checkpoint", ckpt, "--question", Q1, "--no-rerank"])
            self.assertEqual(status, EXIT_OK)
            record = json.loads(out)
            self.assertEqual(record["reranked_top"], record["linker_top"])
            self.assertEqual(record["linker_top"], "MikeKelley_baseball")

    @number("io.25")
    def test_training_is_reproducible(self):
        with tempfile.TemporaryDirectory() as tmp:
            task = os.path.join(tmp, "task.tsv")
            run(["build-task"] + KB_ARGS + ["--parses", PARSES, "--out", task])
            blobs = []
            for name in ("a.ckpt", "b.ckpt"):
                path = os.path.join(tmp, name)
                self.assertEqual(run(["train"] + CONFIG_ARGS + SMALL_MODEL + ["--task", task, "--checkpoint", path])[0],
                                 EXIT_OK)
                with open(path, "rb") as f:
                    blobs.append(f.read())
        self.assertEqual(blobs[0], blobs[1])

    @hide_errors("A detector trained with fixtures/toy.cfg should answer the toy questions.")
    @number("io.26")
    def test_full_config_answers_toy_questions(self):
        with tempfile.TemporaryDirectory() as tmp:
            task, ckpt = os.path.join(tmp, "task.tsv"), os.path.join(tmp, "model.ckpt")
            run(["build-task"] + KB_ARGS + ["--parses", PARSES, "--out", task])
            self.assertEqual(run(["train"] + CONFIG_ARGS + ["--task", task, "--checkpoint", ckpt])[0], EXIT_OK)
            self.assertEqual(run(["eval-rel", "--task", task, "--checkpoint", ckpt]), (EXIT_OK, "1.000\n"))

            answer = ["answer"] + KB_ARGS + CONFIG_ARGS + ["--checkpoint", ckpt, "--question"]
            record = json.loads(run(answer + [Q1])[1])
            self.assertEqual(record["answer_names"], ["Love Will Find a Way"])
            record = json.loads(run(answer + [Q2])[1])
            self.assertEqual(record["answer_names"], ["Swingtown"])
            self.assertEqual(record["constraints"], [["middle", "2008-05-12", "from_year"]])
            record = json.loads(run(answer + [Q2, "--no-constraints"])[1])
            self.assertEqual(record["chain"], "starring_roles-series")
            self.assertEqual(record["constraints"], [])
            self.assertEqual(record["answer_names"], ["Big Love", "Melrose Place", "Swingtown"])

    @number("io.27")
    def test_grid_tuning(self):
        with tempfile.TemporaryDirectory() as tmp:
            task, ckpt = os.path.join(tmp, "task.tsv"), os.path.join(tmp, "model.ckpt")
            run(["build-task"] + KB_ARGS + ["--parses", PARSES, "--out", task])
            grid = ["--grid", "--grid-lr", "0.1", "0.5", "--grid-hidden", "2"]
            argv = ["train"] + CONFIG_ARGS + SMALL_MODEL + ["--task", task, "--checkpoint", ckpt] + grid
            self.assertEqual(run(argv)[0], EXIT_CONFIG)
            status, out = run(argv + ["--dev", task])
            self.assertEqual(status, EXIT_OK)
            self.assertRegex(out.splitlines()[0], r"^grid best: lr (0\.1|0\.5) hidden 2$")
            self.assertEqual(load_scorer(ckpt).config.hidden_size, 2)


if __name__ == '__main__':
    unittest.main()

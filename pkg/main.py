"""
Command-line entry point.

    python main.py train         --task T --checkpoint C [--dev D] [--report R] [--embeddings E]
                                 [--grid [--grid-lr LR ...] [--grid-hidden H ...]]
    python main.py eval-rel      --task T --checkpoint C [C ...] [--workers N]
    python main.py link          --kb KB [--entities ENT] --question Q [-k K]
    python main.py answer        --kb KB [--entities ENT] --checkpoint C (--question Q | --questions F) [--linked L]
                                 [--no-rerank] [--no-constraints]
    python main.py pipeline-eval --kb KB [--entities ENT] --checkpoint C --parses P [--linked L] [--workers N]
                                 [--no-rerank] [--no-constraints]
    python main.py build-task    --kb KB [--entities ENT] --parses P --out T

Every command takes --config FILE; the flags below override its values.
Exit status: 0 on success, 2 for configuration errors, 3 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Sequence

from config import RunConfig, load_config
from encoders import load_pretrained
from errors import DATA_ERRORS, ConfigError, ParseError, UsageError
from kb import load_triples
from linker import entity_catalog, link_top_k, load_linked_results
from pipeline import RECALL_CUTOFFS, answer_question, evaluate_pipeline, linker_scores_from_records
from scorer_util import HIDDEN_SIZE_GRID, LEARNING_RATE_GRID, build_scorer, build_vocabulary
from scorers import EnsembleScorer, load_scorer
from task_io import build_relation_detection_task, load_examples, read_gold_parses, write_task
from trainer import Hyperparams, evaluate_accuracy, grid_search, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

OVERRIDES = (
    # flag, config key, type
    ("--model", "model", str),
    ("--view", "view", str),
    ("--variant", "variant", str),
    ("--hidden-size", "hidden_size", int),
    ("--embedding-dim", "embedding_dim", int),
    ("--lr", "learning_rate", float),
    ("--margin", "margin", float),
    ("--epochs", "epochs", int),
    ("--negatives", "negatives", int),
    ("--seed", "seed", int),
    ("-k", "k", int),
    ("--k-prime", "k_prime", int),
    ("--top-l", "top_l", int),
    ("--alpha", "alpha", float),
    ("--beta", "beta", float),
    ("--theta", "theta", float),
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbqa", description="Relation detection and KBQA over a triple store.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable).")
    commands = p.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", help="key = value configuration file")
        for flag, key, kind in OVERRIDES:
            sub.add_argument(flag, dest=key, type=kind, default=None)
        return sub

    def kb_args(sub):
        sub.add_argument("--kb", required=True, help="triples file")
        sub.add_argument("--entities", help="entity catalog file")

    def ablation_args(sub):
        sub.add_argument("--no-rerank", dest="rerank", action="store_const", const=False, default=None,
                         help="send the linked entities to relation detection without re-ranking")
        sub.add_argument("--no-constraints", dest="constraints", action="store_const", const=False, default=None,
                         help="execute queries without constraint detection")

    sub = command("train", "Fit a relation detector on a task file.")
    sub.add_argument("--task", required=True)
    sub.add_argument("--dev")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--report")
    sub.add_argument("--embeddings", help="pretrained embeddings, 'token v1 ... vd' per line")
    sub.add_argument("--freeze-pretrained", dest="freeze_pretrained", action="store_true", default=None)
    sub.add_argument("--grid", action="store_true", help="tune learning rate and hidden size on --dev first")
    sub.add_argument("--grid-lr", dest="grid_lr", type=float, nargs="+", default=list(LEARNING_RATE_GRID))
    sub.add_argument("--grid-hidden", dest="grid_hidden", type=int, nargs="+", default=list(HIDDEN_SIZE_GRID))

    sub = command("eval-rel", "Relation detection accuracy of one checkpoint or an ensemble.")
    sub.add_argument("--task", required=True)
    sub.add_argument("--checkpoint", required=True, nargs="+")
    sub.add_argument("--workers", type=int, default=1)

    sub = command("link", "Print the top-K linked entities of a question.")
    kb_args(sub)
    sub.add_argument("--question", required=True)

    sub = command("answer", "Answer questions with the full pipeline.")
    kb_args(sub)
    sub.add_argument("--checkpoint", required=True, nargs="+")
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--question")
    group.add_argument("--questions", help="file of 'qid<TAB>question' lines")
    sub.add_argument("--linked", help="pre-linked results file")
    ablation_args(sub)

    sub = command("pipeline-eval", "Accuracy of the chosen (entity, chain) against gold parses.")
    kb_args(sub)
    sub.add_argument("--checkpoint", required=True, nargs="+")
    sub.add_argument("--parses", required=True)
    sub.add_argument("--linked", help="pre-linked results file")
    sub.add_argument("--workers", type=int, default=1)
    ablation_args(sub)

    sub = command("build-task", "Write a relation detection task from gold parses.")
    kb_args(sub)
    sub.add_argument("--parses", required=True)
    sub.add_argument("--out", required=True)
    return p


def load_detector(paths: Sequence[str]):
    scorers = [load_scorer(path) for path in paths]
    if len(scorers) == 1:
        return scorers[0]
    return EnsembleScorer(list(zip(paths, scorers)))


def read_questions(path: str) -> list[tuple[str, str]]:
    questions = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.rstrip("\r\n")
            if not stripped.strip():
                continue
            qid, sep, text = stripped.partition("\t")
            if not sep or not text.strip():
                raise ParseError(path, line_no, "expected 'qid<TAB>question'")
            questions.append((qid.strip(), text.strip()))
    return questions


def run_train(args, cfg: RunConfig) -> None:
    data = load_examples(args.task)
    dev = load_examples(args.dev) if args.dev else None
    examples = data + (dev or [])
    vocab = build_vocabulary((ex.question for ex in examples), (r for ex in examples for r in ex.pool + [ex.gold]))

    def build(hp: Hyperparams):
        model = build_scorer(replace(cfg.scorer, hidden_size=hp.hidden_size), vocab)
        if args.embeddings:
            if not hasattr(model, "embedding"):
                raise ConfigError(f"model {cfg.scorer.model} has no word embeddings to initialise")
            load_pretrained(args.embeddings, vocab, model.embedding)
        return model

    hp = cfg.hyperparams
    if args.grid:
        # the winner is trained again from scratch to write its checkpoint and report
        hp, _ = grid_search(build, data, dev, hp, learning_rates=args.grid_lr, hidden_sizes=args.grid_hidden)
        print(f"grid best: lr {hp.learning_rate} hidden {hp.hidden_size}")
    report = train(build(hp), data, hp, dev=dev, checkpoint_path=args.checkpoint, report_path=args.report)
    last = report.epochs[-1]
    print(f"epochs {len(report.epochs)}  loss {last.mean_loss:.6f}  train {last.train_accuracy:.3f}  "
          f"best epoch {report.best_epoch} ({report.best_accuracy:.3f})")


def run_eval_rel(args, cfg: RunConfig) -> None:
    detector = load_detector(args.checkpoint)
    print(f"{evaluate_accuracy(detector, load_examples(args.task), workers=args.workers):.3f}")


def run_link(args, cfg: RunConfig) -> None:
    kb = load_triples(args.kb, args.entities)
    for link in link_top_k(args.question, entity_catalog(kb), cfg.pipeline.k):
        mention = link.mention.text if link.mention else ""
        print(f"{link.entity_id}\t{kb.name_of(link.entity_id)}\t{mention}\t{link.score:.6f}")


def run_answer(args, cfg: RunConfig) -> None:
    kb = load_triples(args.kb, args.entities)
    cfg.pipeline.detector = load_detector(args.checkpoint)
    questions = [("q", args.question)] if args.question else read_questions(args.questions)
    linked = load_linked_results(args.linked) if args.linked else None
    catalog = entity_catalog(kb)
    for qid, question in questions:
        pre = linker_scores_from_records(question, linked.get(qid, [])) if linked is not None else None
        result = answer_question(cfg.pipeline, kb, question, linked=pre, catalog=catalog)
        print(json.dumps(result.to_record(kb, qid), sort_keys=True, ensure_ascii=False))


def run_pipeline_eval(args, cfg: RunConfig) -> None:
    kb = load_triples(args.kb, args.entities)
    cfg.pipeline.detector = load_detector(args.checkpoint)
    linked = load_linked_results(args.linked) if args.linked else None
    report, _ = evaluate_pipeline(cfg.pipeline, kb, read_gold_parses(args.parses), linked=linked,
                                  workers=args.workers)
    print(f"questions\t{report.questions}")
    print(f"accuracy\t{report.query_accuracy:.3f}")
    print(f"linker top-1\t{report.linker_top1:.3f}")
    print(f"reranked top-1\t{report.reranked_top1:.3f}")
    print(f"chain accuracy\t{report.chain_accuracy:.3f}")
    print(f"unanswered\t{report.unanswered}")
    for k in RECALL_CUTOFFS:
        print(f"recall@{k}\t{report.linker_recall[k]:.3f}\t{report.reranked_recall[k]:.3f}")


def run_build_task(args, cfg: RunConfig) -> None:
    kb = load_triples(args.kb, args.entities)
    records = build_relation_detection_task(kb, read_gold_parses(args.parses))
    write_task(records, args.out)
    print(f"{len(records)} records written to {args.out}")


COMMANDS = {
    "train": run_train,
    "eval-rel": run_eval_rel,
    "link": run_link,
    "answer": run_answer,
    "pipeline-eval": run_pipeline_eval,
    "build-task": run_build_task,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        overrides = {key: getattr(args, key, None) for _, key, _ in OVERRIDES}
        for key in ("freeze_pretrained", "rerank", "constraints"):
            overrides[key] = getattr(args, key, None)
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except DATA_ERRORS + (OSError,) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

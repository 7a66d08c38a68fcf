"""
Margin-ranking training of relation scorers and relation-detection accuracy.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from errors import ConfigError, UsageError
from scorer_util import HIDDEN_SIZE_GRID, LEARNING_RATE_GRID, QuestionInput, RelationInput
from scorers import RelationScorer
from tensor import Graph, Tensor, add, as_tensor, relu, sgd_step, sub

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

MAX_DEFAULT_NEGATIVES = 20


@dataclass
class TrainingExample:
    """ A question with its gold relation r+ and the candidate pool the negatives come from. """
    question: QuestionInput
    gold: RelationInput
    pool: list[RelationInput]

    def negatives(self) -> list[RelationInput]:
        return [r for r in self.pool if r != self.gold]


@dataclass
class Hyperparams:
    """
    Training settings.

    learning_rate is normally tuned over LEARNING_RATE_GRID and hidden_size over
    HIDDEN_SIZE_GRID. negatives=None samples every negative of pools with at
    most 20 of them, and 20 otherwise.
    """
    margin: float = 0.5
    learning_rate: float = 0.5
    hidden_size: int = 100
    epochs: int = 10
    negatives: int | None = None
    seed: int = 0
    freeze_pretrained: bool = False

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.hidden_size <= 0:
            raise ConfigError(f"hidden size must be positive, got {self.hidden_size}")
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.negatives is not None and self.negatives <= 0:
            raise ConfigError(f"negatives per example must be positive, got {self.negatives}")

    def negatives_for(self, available: int) -> int:
        wanted = self.negatives if self.negatives is not None else MAX_DEFAULT_NEGATIVES
        if self.negatives is None and available <= MAX_DEFAULT_NEGATIVES:
            return available
        return min(wanted, available)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    train_accuracy: float
    dev_accuracy: float | None = None


@dataclass
class TrainingReport:
    """ One record per epoch, in order, and the epoch whose parameters were checkpointed. """
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_accuracy: float | None = None

    def to_json_lines(self) -> str:
        return "".join(json.dumps(asdict(record), sort_keys=True) + "\n" for record in self.epochs)


def ranking_loss(s_pos: Tensor | float, s_neg: Tensor | float, margin: float) -> Tensor:
    """ max(0, margin - s_pos + s_neg); zero exactly when s_pos >= s_neg + margin. """
    return relu(add(sub(as_tensor([margin]), as_tensor(s_pos)), as_tensor(s_neg)))


def _sample(rng: np.random.Generator, negatives: list[RelationInput], count: int) -> list[RelationInput]:
    picks = rng.choice(len(negatives), size=count, replace=False)
    return [negatives[i] for i in sorted(picks)]


def _check_examples(model: RelationScorer, data: Sequence[TrainingExample]) -> None:
    for example in data:
        model.check_input(example.gold)
        for r in example.pool:
            model.check_input(r)


def train(model: RelationScorer, data: Sequence[TrainingExample], hp: Hyperparams,
          dev: Sequence[TrainingExample] | None = None,
          checkpoint_path: str | None = None,
          report_path: str | None = None) -> TrainingReport:
    """
    SGD on the summed hinge losses of each example against its sampled negatives.

    Examples are visited in an order shuffled per epoch, and negatives are drawn
    without replacement per epoch, both from a generator seeded with hp.seed,
    so a run is fully determined by its inputs. Examples with zero loss cause
    no update.

    Args:
        model: an unfrozen scorer
        data: training examples
        hp: training settings
        dev: optional examples for checkpoint selection
        checkpoint_path: where to save the parameters of the best epoch
            (best dev accuracy, train accuracy without dev examples)
        report_path: where to write one JSON record per epoch

    :raises UsageError: no examples, or a frozen model
    :raises ConfigError: an example the model's relation view cannot read
    """
    if not data:
        raise UsageError("training needs at least one example")
    if model.frozen:
        raise UsageError("cannot train a frozen scorer")
    _check_examples(model, data)
    if dev:
        _check_examples(model, dev)
    if hp.freeze_pretrained and hasattr(model, "embedding"):
        model.embedding.freeze_pretrained()

    rng = np.random.default_rng(hp.seed)
    params = model.parameters()
    report = TrainingReport()
    report_file = open(report_path, "w", encoding="utf-8") if report_path else None
    try:
        for epoch in range(1, hp.epochs + 1):
            total = 0.0
            for i in rng.permutation(len(data)):
                example = data[i]
                negatives = example.negatives()
                if not negatives:
                    continue
                chosen = _sample(rng, negatives, hp.negatives_for(len(negatives)))
                with Graph() as graph:
                    s_pos = model.score_tensor(example.question, example.gold)
                    loss = ranking_loss(s_pos, model.score_tensor(example.question, chosen[0]), hp.margin)
                    for r in chosen[1:]:
                        loss = add(loss, ranking_loss(s_pos, model.score_tensor(example.question, r), hp.margin))
                value = loss.item()
                total += value
                if value > 0.0:
                    graph.backward(loss)
                    sgd_step([p for p in params if p.grad is not None], hp.learning_rate)

            record = EpochRecord(epoch, total / len(data), evaluate_accuracy(model, data),
                                 evaluate_accuracy(model, dev) if dev else None)
            report.epochs.append(record)
            logger.info("epoch %d: loss %.6f, train accuracy %.4f%s", epoch, record.mean_loss,
                        record.train_accuracy,
                        "" if record.dev_accuracy is None else f", dev accuracy {record.dev_accuracy:.4f}")
            if report_file is not None:
                report_file.write(json.dumps(asdict(record), sort_keys=True) + "\n")

            accuracy = record.train_accuracy if record.dev_accuracy is None else record.dev_accuracy
            if report.best_accuracy is None or accuracy > report.best_accuracy:
                report.best_epoch, report.best_accuracy = epoch, accuracy
                if checkpoint_path:
                    model.save(checkpoint_path)
    finally:
        if report_file is not None:
            report_file.close()
    return report


def _is_correct(model, example: TrainingExample) -> bool:
    gold = model.score(example.question, example.gold)
    return all(model.score(example.question, r) < gold for r in example.negatives())


def evaluate_accuracy(model, data: Sequence[TrainingExample], workers: int = 1) -> float:
    """
    Fraction of examples whose gold relation strictly outscores every other pool member.

    A tie with the gold relation counts as a miss. With workers > 1 the
    examples are scored on a thread pool, which needs a model nobody is training.

    :raises UsageError: no examples, or workers < 1
    """
    if not data:
        raise UsageError("accuracy of no examples")
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    if workers == 1:
        hits = [_is_correct(model, ex) for ex in data]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(lambda ex: _is_correct(model, ex), data))
    return sum(hits) / len(data)


def grid_search(build: Callable[[Hyperparams], RelationScorer], data: Sequence[TrainingExample],
                dev: Sequence[TrainingExample], base: Hyperparams,
                learning_rates: Sequence[float] = LEARNING_RATE_GRID,
                hidden_sizes: Sequence[int] = HIDDEN_SIZE_GRID) -> tuple[Hyperparams, TrainingReport]:
    """
    Train one fresh scorer per (learning rate, hidden size) pair and keep the
    setting with the best dev accuracy; earlier grid points win ties.
    """
    if not dev:
        raise UsageError("grid search needs development examples")
    best: tuple[Hyperparams, TrainingReport] | None = None
    for lr in learning_rates:
        for hidden in hidden_sizes:
            hp = replace(base, learning_rate=lr, hidden_size=hidden)
            report = train(build(hp), data, hp, dev=dev)
            logger.info("grid lr=%s hidden=%d: dev accuracy %.4f", lr, hidden, report.best_accuracy)
            if best is None or report.best_accuracy > best[1].best_accuracy:
                best = (hp, report)
    return best

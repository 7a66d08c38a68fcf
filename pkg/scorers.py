"""
Relation scorers s_rel(r; q).

Every scorer maps a (question, relation) pair to a cosine in [-1, 1]. The
recurrent scorers share one embedding table between question words, relation
words and whole relation names; the CNN baselines read character-trigram
features instead.

Scores computed outside a Graph are plain numbers; inside one they are
differentiable, which is how the trainer uses them.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from typing import Iterable, Sequence

import numpy as np

from checkpoint import load_checkpoint, restore, save_checkpoint
from encoders import (RESERVED, BiLstmLayer, CnnLayer, EmbeddingTable, TrigramHasher, Vocabulary, check_residual_pair,
                      cnn_encode, combine_layers, embed, encode_question_deep, relation_token, run_bilstm,
                      trigram_matrix)
from errors import ConfigError, DomainError, ParseError, ShapeError, UsageError
from scorer_util import ModelKind, QuestionInput, RelationInput, RelationView, ScorerConfig, build_scorer, register
from tensor import (Tensor, concat, cosine, matmul, max_pool_rows, mul, softmax, sum_all, transpose,
                    weighted_sum_rows, zeros_parameter)

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)


class RelationScorer(ABC):
    """
    A trainable relation scorer.

    Attributes:
        config (ScorerConfig): model kind, view and sizes
        vocab (Vocabulary): token table the embeddings are indexed by
        frozen (bool): True once the parameters no longer take gradients
    """

    def __init__(self, config: ScorerConfig, vocab: Vocabulary) -> None:
        self.config = config
        self.vocab = vocab
        self.frozen = False

    @abstractmethod
    def parameters(self) -> list[Tensor]:
        """ Every trainable tensor, in a fixed order. """
        pass

    @abstractmethod
    def score_tensor(self, q: QuestionInput, r: RelationInput) -> Tensor:
        """ s_rel(r; q) as a 1-element tensor, differentiable inside a Graph. """
        pass

    def score(self, q: QuestionInput, r: RelationInput) -> float:
        return self.score_tensor(q, r).item()

    def score_many(self, q: QuestionInput, relations: Iterable[RelationInput]) -> list[float]:
        return [self.score(q, r) for r in relations]

    def check_input(self, r: RelationInput) -> None:
        """ :raises ConfigError: the relation lacks the tokens this scorer's view reads """
        view = self.config.view
        if view in (RelationView.WORDS, RelationView.BOTH) and not r.word_tokens:
            raise ConfigError(f"{self.config.model} reads relation words but {r.name_tokens} has none")
        if view in (RelationView.NAMES, RelationView.BOTH) and not r.name_tokens:
            raise ConfigError(f"{self.config.model} reads relation names but the relation has none")

    def freeze(self) -> None:
        """ Stop recording gradients; a frozen scorer is read-only and safe to share between threads. """
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        self.frozen = True

    def header(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "vocab": self.vocab.index_to_token[len(RESERVED):],
            "vocab_fingerprint": self.vocab.fingerprint(),
        }

    def save(self, path: str) -> None:
        save_checkpoint(path, self.parameters(), self.header())
        logger.info("saved %s scorer (%d parameters) to %s", self.config.model, len(self.parameters()), path)


# Recurrent scorers

class RecurrentScorer(RelationScorer):
    """ BiLSTM relation encoder plus a one- or two-layer BiLSTM question encoder. """

    question_depth = 1

    def __init__(self, config: ScorerConfig, vocab: Vocabulary) -> None:
        super().__init__(config, vocab)
        rng = np.random.default_rng(config.seed)
        d, h = config.embedding_dim, config.hidden_size
        self.embedding = EmbeddingTable(len(vocab), d, rng)
        self.relation_layer = BiLstmLayer(d, h, rng, "relation")
        self.question_layers = [BiLstmLayer(d, h, rng, "question1")]
        if self.question_depth == 2:
            self.question_layers.append(BiLstmLayer(2 * h, h, rng, "question2"))

    def parameters(self) -> list[Tensor]:
        params = self.embedding.parameters() + self.relation_layer.parameters()
        for layer in self.question_layers:
            params += layer.parameters()
        return params

    def encode_relation(self, r: RelationInput) -> Tensor:
        """
        h^r: one max-pool over the word rows and the name rows.

        The name sequence runs through the same BiLSTM, starting from the final
        states of the word sequence when both views are read.

        :raises DomainError: the view selects an empty token set
        """
        view = self.config.view
        row_sets = []
        init = None
        if view in (RelationView.WORDS, RelationView.BOTH):
            if not r.word_tokens:
                raise DomainError("relation has no word tokens")
            words, init = run_bilstm(self.relation_layer, embed(self.vocab, self.embedding, r.word_tokens))
            row_sets.append(words)
        if view in (RelationView.NAMES, RelationView.BOTH):
            if not r.name_tokens:
                raise DomainError("relation has no name tokens")
            names = [relation_token(n) for n in r.name_tokens]
            rel, _ = run_bilstm(self.relation_layer, embed(self.vocab, self.embedding, names), init=init)
            row_sets.append(rel)
        return max_pool_rows(row_sets[0] if len(row_sets) == 1 else concat(row_sets, axis=0))

    def encode_question(self, q: QuestionInput) -> Tensor | tuple[Tensor, Tensor]:
        x = embed(self.vocab, self.embedding, q.tokens)
        if self.question_depth == 1:
            hidden, _ = run_bilstm(self.question_layers[0], x)
            return max_pool_rows(hidden)
        return encode_question_deep(tuple(self.question_layers), x, self.config.variant)

    def score_tensor(self, q: QuestionInput, r: RelationInput) -> Tensor:
        return cosine(self.encode_question(q), self.encode_relation(r))


@register(ModelKind.BILSTM)
@register(ModelKind.BILSTM_WORDS)
@register(ModelKind.BILSTM_NAMES)
class BiLstmScorer(RecurrentScorer):
    """ Single-layer question encoder; the view decides which relation tokens are read. """
    question_depth = 1


@register(ModelKind.HR_BILSTM)
class HrBiLstmScorer(RecurrentScorer):
    """
    Hierarchical residual BiLSTM: both relation views against a two-layer
    question encoder whose layers are combined by the residual variant.
    """
    question_depth = 2


@register(ModelKind.WEIGHTED_SUM)
class WeightedSumScorer(RecurrentScorer):
    """ Two question layers scored separately and mixed by softmax([w1, w2]). """

    question_depth = 2

    def __init__(self, config: ScorerConfig, vocab: Vocabulary) -> None:
        super().__init__(config, vocab)
        self.layer_weights = zeros_parameter((2,), "layer_weights")

    def parameters(self) -> list[Tensor]:
        return super().parameters() + [self.layer_weights]

    def score_tensor(self, q: QuestionInput, r: RelationInput) -> Tensor:
        first, second = self.encode_question(q)
        h_r = self.encode_relation(r)
        both = concat([cosine(first, h_r), cosine(second, h_r)], axis=0)
        return sum_all(mul(softmax(self.layer_weights), both))


# Convolutional scorers

@register(ModelKind.HR_CNN)
class HrCnnScorer(RelationScorer):
    """ The hierarchical residual wiring with stacked CNN layers of width 2*d_h in place of BiLSTMs. """

    def __init__(self, config: ScorerConfig, vocab: Vocabulary) -> None:
        super().__init__(config, vocab)
        rng = np.random.default_rng(config.seed)
        d, width, w = config.embedding_dim, 2 * config.hidden_size, config.window
        self.embedding = EmbeddingTable(len(vocab), d, rng)
        self.relation_layer = CnnLayer(d, width, w, rng, "relation")
        self.question_layers = [CnnLayer(d, width, w, rng, "question1"), CnnLayer(width, width, w, rng, "question2")]

    def parameters(self) -> list[Tensor]:
        params = self.embedding.parameters() + self.relation_layer.parameters()
        for layer in self.question_layers:
            params += layer.parameters()
        return params

    def _convolve(self, layer: CnnLayer, x: Tensor) -> Tensor:
        return cnn_encode(layer.filters, layer.bias, x)

    def encode_relation(self, r: RelationInput) -> Tensor:
        view = self.config.view
        row_sets = []
        if view in (RelationView.WORDS, RelationView.BOTH):
            if not r.word_tokens:
                raise DomainError("relation has no word tokens")
            row_sets.append(self._convolve(self.relation_layer, embed(self.vocab, self.embedding, r.word_tokens)))
        if view in (RelationView.NAMES, RelationView.BOTH):
            if not r.name_tokens:
                raise DomainError("relation has no name tokens")
            names = [relation_token(n) for n in r.name_tokens]
            row_sets.append(self._convolve(self.relation_layer, embed(self.vocab, self.embedding, names)))
        return max_pool_rows(row_sets[0] if len(row_sets) == 1 else concat(row_sets, axis=0))

    def encode_question(self, q: QuestionInput) -> Tensor:
        first, second = self.question_layers
        check_residual_pair(first.d_out, second.d_in, second.d_out)
        gamma1 = self._convolve(first, embed(self.vocab, self.embedding, q.tokens))
        gamma2 = self._convolve(second, gamma1)
        return combine_layers(gamma1, gamma2, self.config.variant)

    def score_tensor(self, q: QuestionInput, r: RelationInput) -> Tensor:
        return cosine(self.encode_question(q), self.encode_relation(r))


def score_bicnn(q_text: str, r_text: str, hasher: TrigramHasher, layer: CnnLayer) -> Tensor:
    """
    cos(max-pooled CNN(q), max-pooled CNN(r)) over per-word trigram features,
    with one CNN shared by both sides.

    :raises DomainError: either text has no words
    """
    h_q = max_pool_rows(cnn_encode(layer.filters, layer.bias, trigram_matrix(hasher, q_text)))
    h_r = max_pool_rows(cnn_encode(layer.filters, layer.bias, trigram_matrix(hasher, r_text)))
    return cosine(h_q, h_r)


def score_apcnn(hq: Tensor, hr: Tensor) -> Tensor:
    """
    Attentive pooling over question rows hq [N x d] and relation rows hr [M x d].

    a_ij = hr_i . hq_j (the bilinear matrix is the identity); relation row i is
    weighted by softmax_i(max_j a_ij), question row j by softmax_j(max_i a_ij),
    and the score is the cosine of the two weighted sums.

    :raises ShapeError: rows of different widths
    :raises DomainError: a weighted sum is the zero vector
    """
    if hq.values.ndim != 2 or hr.values.ndim != 2 or hq.shape[1] != hr.shape[1]:
        raise ShapeError(f"score_apcnn {hq.shape} vs {hr.shape}")
    alignment = matmul(hr, transpose(hq))
    w_r = softmax(max_pool_rows(transpose(alignment)))
    w_q = softmax(max_pool_rows(alignment))
    return cosine(weighted_sum_rows(w_q, hq), weighted_sum_rows(w_r, hr))


class TrigramCnnScorer(RelationScorer):
    """ Shared CNN over hashed character trigrams of the question and relation words. """

    def __init__(self, config: ScorerConfig, vocab: Vocabulary) -> None:
        super().__init__(config, vocab)
        rng = np.random.default_rng(config.seed)
        self.hasher = TrigramHasher(config.trigram_buckets, config.seed)
        self.layer = CnnLayer(config.trigram_buckets, 2 * config.hidden_size, config.window, rng, "trigram_cnn")

    def parameters(self) -> list[Tensor]:
        return self.layer.parameters()

    def encode_rows(self, text: str) -> Tensor:
        return cnn_encode(self.layer.filters, self.layer.bias, trigram_matrix(self.hasher, text))


@register(ModelKind.BICNN)
class BiCnnScorer(TrigramCnnScorer):

    def score_tensor(self, q: QuestionInput, r: RelationInput) -> Tensor:
        return score_bicnn(q.text(), r.text(), self.hasher, self.layer)


@register(ModelKind.APCNN)
class ApCnnScorer(TrigramCnnScorer):

    def score_tensor(self, q: QuestionInput, r: RelationInput) -> Tensor:
        return score_apcnn(self.encode_rows(q.text()), self.encode_rows(r.text()))


# Ensembles

def ensemble_score(scores: Sequence[tuple[str, float]]) -> float:
    """ Unweighted mean of member scores; exact summation keeps it order-independent.
    :raises UsageError: no members
    """
    if not scores:
        raise UsageError("ensemble of no detectors")
    return math.fsum(s for _, s in scores) / len(scores)


class EnsembleScorer:
    """ Several frozen detectors scored together; read-only, no parameters of its own. """

    def __init__(self, members: Sequence[tuple[str, RelationScorer]]) -> None:
        if not members:
            raise UsageError("ensemble of no detectors")
        self.members = list(members)

    def score(self, q: QuestionInput, r: RelationInput) -> float:
        return ensemble_score([(name, member.score(q, r)) for name, member in self.members])

    def score_many(self, q: QuestionInput, relations: Iterable[RelationInput]) -> list[float]:
        return [self.score(q, r) for r in relations]


def load_scorer(path: str) -> RelationScorer:
    """
    Rebuild a frozen scorer from a checkpoint written by RelationScorer.save.

    :raises ParseError: malformed file, missing header fields or a vocabulary
        that does not match its recorded fingerprint
    """
    header, arrays = load_checkpoint(path)
    try:
        config = ScorerConfig(**header["config"])
        vocab = Vocabulary(header["vocab"])
        fingerprint = header["vocab_fingerprint"]
    except (KeyError, TypeError) as exc:
        raise ParseError(path, 0, f"incomplete scorer header: {exc}") from exc
    if vocab.fingerprint() != fingerprint:
        raise ParseError(path, 0, "vocabulary does not match its fingerprint")
    scorer = build_scorer(config, vocab)
    restore(scorer.parameters(), arrays, path)
    scorer.freeze()
    logger.info("loaded %s scorer from %s", config.model, path)
    return scorer

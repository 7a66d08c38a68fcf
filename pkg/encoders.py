"""
Sequence encoders: token embeddings, (deep, residual) BiLSTMs, a 1-d CNN and
the character-trigram hashing featurizer.

Sequences are encoded one at a time, unpadded; every function here builds
ordinary tensor operations, so it is differentiable inside a Graph.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from errors import ConfigError, DomainError, ParseError, ShapeError
from tensor import (Tensor, add, add_row_vector, concat, conv1d, matmul, max_pool_rows, mul, parameter,
                    sigmoid, take_rows, tanh, zeros_parameter)

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
ENTITY = "<e>"
RESERVED = (PAD, UNK, ENTITY)
RELATION_PREFIX = "rel::"

DEFAULT_TRIGRAM_BUCKETS = 15000


def relation_token(name: str) -> str:
    """ Vocabulary key of a whole relation name, kept apart from plain words. """
    return RELATION_PREFIX + name


class Vocabulary:
    """ Token <-> index bijection with <pad>=0, <unk>=1 and <e>=2 always present. """

    def __init__(self, tokens: Iterable[str] = ()) -> None:
        self.index_to_token: list[str] = []
        self.token_to_index: dict[str, int] = {}
        for token in RESERVED:
            self.add(token)
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self.token_to_index:
            self.token_to_index[token] = len(self.index_to_token)
            self.index_to_token.append(token)
        return self.token_to_index[token]

    def index(self, token: str) -> int:
        """ Index of a token, <unk> for anything unseen. """
        return self.token_to_index.get(token, self.token_to_index[UNK])

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.index_to_token).encode("utf-8")).hexdigest()


class EmbeddingTable:
    """ Embedding matrix [V x d] with a per-row record of which rows came pretrained.

    Attributes:
        matrix (Tensor): the trainable table
        pretrained (np.ndarray): bool per row, True for rows set by load_pretrained
    """

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator, name: str = "embedding") -> None:
        self.matrix = parameter((vocab_size, dim), rng, name)
        self.pretrained = np.zeros(vocab_size, dtype=bool)

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def freeze_pretrained(self) -> None:
        """ Keep pretrained rows fixed during SGD; randomly initialised rows still train. """
        self.matrix.update_mask = (~self.pretrained).astype(np.float64)[:, None]

    def parameters(self) -> list[Tensor]:
        return [self.matrix]


def embed(vocab: Vocabulary, table: EmbeddingTable, tokens: Sequence[str]) -> Tensor:
    """ Look up a token sequence, giving [T x d]; unseen tokens map to <unk>.
    :raises DomainError: empty token list
    :raises ShapeError: vocabulary larger than the table
    """
    if not tokens:
        raise DomainError("cannot embed an empty token list")
    indices = [vocab.index(t) for t in tokens]
    if max(indices) >= table.vocab_size:
        raise ShapeError(f"token index {max(indices)} outside table of {table.vocab_size} rows")
    return take_rows(table.matrix, indices)


def load_pretrained(path: str, vocab: Vocabulary, table: EmbeddingTable) -> tuple[int, int]:
    """ Fill rows of vocabulary words from a "token v1 ... vd" text file.

    Lines whose dimension differs from the table are skipped and counted.

    Returns:
        (rows loaded, lines skipped)

    :raises ParseError: a value that is not a decimal number
    """
    loaded = skipped = 0
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            token, raw = parts[0], parts[1:]
            if len(raw) != table.dim:
                skipped += 1
                continue
            try:
                vector = np.array([float(v) for v in raw])
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad embedding value: {exc}") from exc
            if token in vocab:
                row = vocab.index(token)
                table.matrix.values[row] = vector
                table.pretrained[row] = True
                loaded += 1
    if skipped:
        logger.warning("%s: skipped %d lines with dimension other than %d", path, skipped, table.dim)
    logger.info("%s: loaded %d pretrained rows", path, loaded)
    return loaded, skipped


# Recurrent encoders

LstmState = tuple[Tensor, Tensor]
GATES = ("input", "forget", "output", "candidate")


class LstmCell:
    """ One direction of a BiLSTM: W [d_in x d_h], U [d_h x d_h] and b [d_h] per gate. """

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator | None, name: str) -> None:
        self.d_in = d_in
        self.d_h = d_h

        def make(shape, label):
            if rng is None:
                return zeros_parameter(shape, f"{name}.{label}")
            return parameter(shape, rng, f"{name}.{label}")

        self.W = {g: make((d_in, d_h), f"W_{g}") for g in GATES}
        self.U = {g: make((d_h, d_h), f"U_{g}") for g in GATES}
        self.b = {g: make((d_h,), f"b_{g}") for g in GATES}

    def parameters(self) -> list[Tensor]:
        return [t for g in GATES for t in (self.W[g], self.U[g], self.b[g])]

    def zero_state(self) -> LstmState:
        return Tensor(np.zeros((1, self.d_h))), Tensor(np.zeros((1, self.d_h)))

    def step(self, x_t: Tensor, state: LstmState) -> LstmState:
        h, c = state

        def gate(g):
            return add_row_vector(add(matmul(x_t, self.W[g]), matmul(h, self.U[g])), self.b[g])

        i = sigmoid(gate("input"))
        f = sigmoid(gate("forget"))
        o = sigmoid(gate("output"))
        candidate = tanh(gate("candidate"))
        c_next = add(mul(f, c), mul(i, candidate))
        return mul(o, tanh(c_next)), c_next


class BiLstmLayer:
    """ Forward and backward LSTM cells; each output row is [forward ; backward] of width 2*d_h. """

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator | None, name: str) -> None:
        self.d_in = d_in
        self.d_h = d_h
        self.forward_cell = LstmCell(d_in, d_h, rng, f"{name}.fwd")
        self.backward_cell = LstmCell(d_in, d_h, rng, f"{name}.bwd")

    @property
    def d_out(self) -> int:
        return 2 * self.d_h

    def parameters(self) -> list[Tensor]:
        return self.forward_cell.parameters() + self.backward_cell.parameters()


def run_bilstm(layer: BiLstmLayer, x: Tensor,
               init: tuple[LstmState, LstmState] | None = None) -> tuple[Tensor, tuple[LstmState, LstmState]]:
    """
    Run both directions of a BiLSTM over x [T x d_in].

    Args:
        layer: the BiLSTM parameters
        x: input rows, T >= 1
        init: optional ((h, c) forward, (h, c) backward) initial states

    Returns:
        hidden [T x 2*d_h] and the final (forward, backward) states; the backward
        final state is the one reached after consuming row 0.

    :raises ShapeError: input width differs from layer.d_in
    """
    if x.values.ndim != 2 or x.shape[1] != layer.d_in:
        raise ShapeError(f"BiLSTM expects [T x {layer.d_in}], got {x.shape}")
    T = x.shape[0]
    fwd_state, bwd_state = init if init is not None else (layer.forward_cell.zero_state(),
                                                          layer.backward_cell.zero_state())
    rows = [take_rows(x, [t]) for t in range(T)]

    fwd_hidden = []
    for t in range(T):
        fwd_state = layer.forward_cell.step(rows[t], fwd_state)
        fwd_hidden.append(fwd_state[0])

    bwd_hidden: list[Tensor | None] = [None] * T
    for t in reversed(range(T)):
        bwd_state = layer.backward_cell.step(rows[t], bwd_state)
        bwd_hidden[t] = bwd_state[0]

    hidden = concat([concat(fwd_hidden, axis=0), concat(bwd_hidden, axis=0)], axis=1)
    return hidden, (fwd_state, bwd_state)


class ResidualVariant:
    """ How the two question layers are combined. """
    HIDDEN_SHORTCUT = "hidden_shortcut"
    POOLED_SHORTCUT = "pooled_shortcut"
    SECOND_LAYER_ONLY = "second_layer_only"
    WEIGHTED_SUM = "weighted_sum"
    OPTIONS = (
        HIDDEN_SHORTCUT,
        POOLED_SHORTCUT,
        SECOND_LAYER_ONLY,
        WEIGHTED_SUM,
    )


def check_residual_pair(first_width: int, second_in: int, second_width: int) -> None:
    """ gamma(1) + gamma(2) needs equal widths, and layer 2 reads layer-1 rows. """
    if first_width != second_width:
        raise ShapeError(f"residual layers must share width, got {first_width} and {second_width}")
    if second_in != first_width:
        raise ShapeError(f"second layer expects input width {second_in}, first layer gives {first_width}")


def combine_layers(gamma1: Tensor, gamma2: Tensor, variant: str) -> Tensor | tuple[Tensor, Tensor]:
    """ Pool two stacked layers of hidden rows according to the residual variant. """
    if variant == ResidualVariant.HIDDEN_SHORTCUT:
        return max_pool_rows(add(gamma1, gamma2))
    if variant == ResidualVariant.POOLED_SHORTCUT:
        return add(max_pool_rows(gamma1), max_pool_rows(gamma2))
    if variant == ResidualVariant.SECOND_LAYER_ONLY:
        return max_pool_rows(gamma2)
    if variant == ResidualVariant.WEIGHTED_SUM:
        return max_pool_rows(gamma1), max_pool_rows(gamma2)
    raise ConfigError(f"unknown residual variant {variant!r}")


def encode_question_deep(layers: tuple[BiLstmLayer, BiLstmLayer], q: Tensor,
                         variant: str) -> Tensor | tuple[Tensor, Tensor]:
    """
    Two stacked BiLSTMs over question embeddings q [N x d].

    hidden_shortcut pools Gamma1 + Gamma2; pooled_shortcut adds the two pooled
    vectors; second_layer_only pools Gamma2; weighted_sum returns both pooled
    vectors for the scorer to weigh.

    :raises ShapeError: layers with different hidden sizes or a mismatched layer-2 input
    """
    first, second = layers
    check_residual_pair(first.d_out, second.d_in, second.d_out)
    gamma1, _ = run_bilstm(first, q)
    gamma2, _ = run_bilstm(second, gamma1)
    return combine_layers(gamma1, gamma2, variant)


# Convolutional encoder

class CnnLayer:
    """ Filters [w x d_in x d_out] and bias [d_out]; the window must be odd. """

    def __init__(self, d_in: int, d_out: int, window: int, rng: np.random.Generator | None, name: str) -> None:
        if window <= 0 or window % 2 == 0:
            raise ConfigError(f"convolution window must be a positive odd number, got {window}")
        self.d_in = d_in
        self.d_out = d_out
        self.window = window
        if rng is None:
            self.filters = zeros_parameter((window, d_in, d_out), f"{name}.filters")
            self.bias = zeros_parameter((d_out,), f"{name}.bias")
        else:
            self.filters = parameter((window, d_in, d_out), rng, f"{name}.filters")
            self.bias = parameter((d_out,), rng, f"{name}.bias")

    def parameters(self) -> list[Tensor]:
        return [self.filters, self.bias]


def cnn_encode(filters: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """ tanh(conv(x) + bias) per position, [T x d_out], zero padded to keep T rows. """
    return tanh(add_row_vector(conv1d(x, filters), bias))


# Character trigrams

class TrigramHasher:
    """ Maps character trigrams to one of `buckets` slots with a seeded, process-stable hash. """

    def __init__(self, buckets: int = DEFAULT_TRIGRAM_BUCKETS, seed: int = 0) -> None:
        if buckets <= 0:
            raise ConfigError(f"trigram bucket count must be positive, got {buckets}")
        self.buckets = buckets
        self.seed = seed

    def bucket(self, trigram: str) -> int:
        digest = hashlib.blake2b(f"{self.seed}\x1f{trigram}".encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.buckets


def word_trigrams(word: str) -> list[str]:
    padded = f"#{word}#"
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


def trigram_featurize(hasher: TrigramHasher, text: str) -> Counter:
    """ Sparse bucket -> count vector of every trigram of every (lowercased) word. """
    counts: Counter = Counter()
    for word in text.lower().split():
        counts.update(hasher.bucket(t) for t in word_trigrams(word))
    return counts


def trigram_matrix(hasher: TrigramHasher, text: str) -> Tensor:
    """ One dense trigram-count row per word, [T x buckets], the BiCNN input.
    :raises DomainError: text without words
    """
    words = text.lower().split()
    if not words:
        raise DomainError("cannot featurize empty text")
    rows = np.zeros((len(words), hasher.buckets))
    for i, word in enumerate(words):
        for t in word_trigrams(word):
            rows[i, hasher.bucket(t)] += 1.0
    return Tensor(rows)

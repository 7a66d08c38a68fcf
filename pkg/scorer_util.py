"""
Scorer registry, scorer configuration and the question/relation input types.

Scorer classes register themselves under a model kind with ``@register``;
``get_scorers`` imports the module holding the registrations first.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from encoders import DEFAULT_TRIGRAM_BUCKETS, ENTITY, ResidualVariant, Vocabulary, relation_token
from errors import ConfigError, DomainError
from kb import RelationChain, tokenize_relation

__docformat__ = 'reStructuredText'

SCORERS: dict[str, type] = {}

HIDDEN_SIZE_GRID = (50, 100, 200, 400)
LEARNING_RATE_GRID = (0.1, 0.5, 1.0, 2.0)


class ModelKind:
    HR_BILSTM = "hr_bilstm"
    BILSTM = "bilstm"
    BILSTM_WORDS = "bilstm_words"
    BILSTM_NAMES = "bilstm_names"
    WEIGHTED_SUM = "weighted_sum"
    HR_CNN = "hr_cnn"
    BICNN = "bicnn"
    APCNN = "apcnn"
    OPTIONS = (
        HR_BILSTM,
        BILSTM,
        BILSTM_WORDS,
        BILSTM_NAMES,
        WEIGHTED_SUM,
        HR_CNN,
        BICNN,
        APCNN,
    )


class RelationView:
    WORDS = "words"
    NAMES = "names"
    BOTH = "both"
    OPTIONS = (
        WORDS,
        NAMES,
        BOTH,
    )


# Views a model kind accepts; the first entry is its default.
MODEL_VIEWS = {
    ModelKind.HR_BILSTM: (RelationView.BOTH, RelationView.WORDS, RelationView.NAMES),
    ModelKind.BILSTM: (RelationView.BOTH, RelationView.WORDS, RelationView.NAMES),
    ModelKind.BILSTM_WORDS: (RelationView.WORDS,),
    ModelKind.BILSTM_NAMES: (RelationView.NAMES,),
    ModelKind.WEIGHTED_SUM: (RelationView.BOTH, RelationView.WORDS, RelationView.NAMES),
    ModelKind.HR_CNN: (RelationView.BOTH, RelationView.WORDS, RelationView.NAMES),
    ModelKind.BICNN: (RelationView.WORDS,),
    ModelKind.APCNN: (RelationView.WORDS,),
}

# Residual variants a two-layer question encoder accepts; the first is the default.
MODEL_VARIANTS = {
    ModelKind.HR_BILSTM: (ResidualVariant.HIDDEN_SHORTCUT, ResidualVariant.POOLED_SHORTCUT,
                          ResidualVariant.SECOND_LAYER_ONLY),
    ModelKind.HR_CNN: (ResidualVariant.HIDDEN_SHORTCUT, ResidualVariant.POOLED_SHORTCUT,
                       ResidualVariant.SECOND_LAYER_ONLY),
    ModelKind.WEIGHTED_SUM: (ResidualVariant.WEIGHTED_SUM,),
}


@dataclass
class ScorerConfig:
    """
    Relation scorer settings.

    view and variant may be left as None to take the model kind's default;
    an explicit value the kind cannot use is a ConfigError.
    """
    model: str = ModelKind.HR_BILSTM
    view: str | None = None
    variant: str | None = None
    hidden_size: int = 100
    embedding_dim: int = 300
    window: int = 3
    trigram_buckets: int = DEFAULT_TRIGRAM_BUCKETS
    seed: int = 0

    def __post_init__(self):
        if self.model not in ModelKind.OPTIONS:
            raise ConfigError(f"unknown model kind {self.model!r}; expected one of {ModelKind.OPTIONS}")
        views = MODEL_VIEWS[self.model]
        if self.view is None:
            self.view = views[0]
        if self.view not in views:
            raise ConfigError(f"model {self.model} cannot use relation view {self.view!r}")
        variants = MODEL_VARIANTS.get(self.model, ())
        if self.variant is None and variants:
            self.variant = variants[0]
        if variants and self.variant not in variants:
            raise ConfigError(f"model {self.model} cannot use residual variant {self.variant!r}")
        if not variants and self.variant is not None:
            raise ConfigError(f"model {self.model} has a single-layer question encoder; no variant applies")
        for field_name in ("hidden_size", "embedding_dim", "window", "trigram_buckets"):
            if getattr(self, field_name) <= 0:
                raise ConfigError(f"{field_name} must be positive")
        if self.window % 2 == 0:
            raise ConfigError(f"window must be odd, got {self.window}")

    def to_dict(self) -> dict:
        return asdict(self)


def tokenize_question(text: str) -> tuple[str, ...]:
    """ Lowercased Unicode word tokens; the entity placeholder survives as one token. """
    return tuple(re.findall(r"<e>|\w+", text.lower()))


@dataclass(frozen=True)
class QuestionInput:
    """ Question word tokens, with the topic-entity mention replaced by <e> when bound. """
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise DomainError("a question needs at least one word token")
        if list(self.tokens).count(ENTITY) > 1:
            raise DomainError("a question holds at most one <e> token")

    @classmethod
    def from_text(cls, text: str) -> QuestionInput:
        return cls(tokenize_question(text))

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class RelationInput:
    """ Both token views of a relation or chain: its words (M1) and whole names (M2 <= 2). """
    word_tokens: tuple[str, ...]
    name_tokens: tuple[str, ...]

    def __post_init__(self):
        if len(self.name_tokens) > 2:
            raise DomainError(f"chains have at most two relations, got {self.name_tokens}")

    @classmethod
    def from_chain(cls, relations: Sequence[str] | RelationChain) -> RelationInput:
        names = tuple(relations.relations if isinstance(relations, RelationChain) else relations)
        words = tuple(w for name in names for w in tokenize_relation(name))
        return cls(words, names)

    @property
    def chain(self) -> RelationChain:
        return RelationChain(self.name_tokens)

    def text(self) -> str:
        return " ".join(self.word_tokens)


def build_vocabulary(questions: Iterable[QuestionInput], relations: Iterable[RelationInput]) -> Vocabulary:
    """ Every question word, relation word and relation name, in first-seen order. """
    vocab = Vocabulary()
    for q in questions:
        for token in q.tokens:
            vocab.add(token)
    for r in relations:
        for token in r.word_tokens:
            vocab.add(token)
        for name in r.name_tokens:
            vocab.add(relation_token(name))
    return vocab


def register(kind: str):
    """
    Scorer register decorator.

    Usage:  @register(ModelKind.HR_BILSTM)
            class HrBiLstmScorer(RelationScorer): ...
    """
    def wrap(cls):
        SCORERS[kind] = cls
        return cls
    return wrap


def get_scorers() -> dict[str, type]:
    import scorers  # noqa: F401  (forces the registrations)
    return SCORERS


def build_scorer(config: ScorerConfig, vocab: Vocabulary):
    """ Fresh, randomly initialised scorer for a config (seeded by config.seed). """
    return get_scorers()[config.model](config, vocab)

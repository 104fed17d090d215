"""Tokenization, vocabulary, corpus files, splits, and the toy corpus generator.

Corpora live on disk as UTF-8 JSONL: dialogue files carry ``{"input": ...,
"response": ...}`` objects, sentiment files ``{"text": ..., "label": 0|1}``.
A vocabulary is persisted as a JSON manifest ``{segmentation, tokens,
specials}`` with the four specials pinned to ids 0..3 so checkpoints stay
portable.
"""

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import regex

from .errors import EmptyCorpus, EmptySentence, InvalidSplit, ParseError

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

# \X = extended grapheme cluster; combining marks stay glued to their base.
_GRAPHEME = regex.compile(r"\X")


def tokenize(text: str, mode: str = "word") -> list[str]:
    """Split raw text into tokens: whitespace runs (word) or graphemes (char)."""
    if mode == "word":
        tokens = text.split()
    elif mode == "char":
        tokens = [g for g in _GRAPHEME.findall(text) if not g.isspace()]
    else:
        raise ValueError(f"unknown segmentation mode {mode!r}")
    if not tokens:
        raise EmptySentence(f"no tokens after {mode} tokenization of {text!r}")
    return tokens


@dataclass
class Vocabulary:
    """Token/id map with PAD, BOS, EOS, UNK pinned to ids 0..3."""

    tokens: list[str]
    segmentation: str
    max_size: int
    stoi: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIALS:
            raise ValueError("vocabulary must start with the four specials")
        self.stoi = {t: i for i, t in enumerate(self.tokens)}
        if len(self.stoi) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        manifest = {
            "segmentation": self.segmentation,
            "max_size": self.max_size,
            "specials": list(SPECIALS),
            "tokens": self.tokens[4:],
        }
        Path(path).write_text(json.dumps(manifest, ensure_ascii=False, indent=0))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        manifest = json.loads(Path(path).read_text())
        return cls(
            tokens=list(SPECIALS) + manifest["tokens"],
            segmentation=manifest["segmentation"],
            max_size=manifest["max_size"],
        )


def build_vocabulary(
    sentences: Iterable[Sequence[str]], max_size: int, segmentation: str = "word"
) -> Vocabulary:
    """Keep the ``max_size - 4`` most frequent tokens, ties by first occurrence."""
    if max_size < 5:
        raise ValueError("max_size must leave room for 4 specials plus 1 token")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    n_sentences = 0
    for sent in sentences:
        n_sentences += 1
        for tok in sent:
            counts[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = len(first_seen)
    if n_sentences == 0 or not counts:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    kept = ranked[: max_size - 4]
    return Vocabulary(tokens=list(SPECIALS) + kept, segmentation=segmentation, max_size=max_size)


@dataclass
class DialoguePair:
    x: list[str]
    y: list[str]


@dataclass
class LabeledSentence:
    text: list[str]
    label: int


def load_dialogue_corpus(path: str | Path, mode: str = "word") -> list[DialoguePair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict) or "input" not in obj or "response" not in obj:
                raise ParseError('expected object with "input" and "response"', lineno)
            try:
                pairs.append(DialoguePair(tokenize(obj["input"], mode), tokenize(obj["response"], mode)))
            except EmptySentence as exc:
                raise ParseError(str(exc), lineno) from exc
    if not pairs:
        raise EmptyCorpus(f"no dialogue pairs in {path}")
    return pairs


def load_sentiment_corpus(path: str | Path, mode: str = "word") -> list[LabeledSentence]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict) or "text" not in obj or "label" not in obj:
                raise ParseError('expected object with "text" and "label"', lineno)
            if obj["label"] not in (0, 1):
                raise ParseError(f"label {obj['label']!r} not in {{0,1}}", lineno)
            items.append(LabeledSentence(tokenize(obj["text"], mode), int(obj["label"])))
    if not items:
        raise EmptyCorpus(f"no labeled sentences in {path}")
    return items


def write_dialogue_corpus(path: str | Path, pairs: Iterable[DialoguePair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"input": " ".join(p.x), "response": " ".join(p.y)}, ensure_ascii=False))
            fh.write("\n")


def write_sentiment_corpus(path: str | Path, items: Iterable[LabeledSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in items:
            fh.write(json.dumps({"text": " ".join(s.text), "label": s.label}, ensure_ascii=False))
            fh.write("\n")


@dataclass
class CorpusSplit:
    train: list
    test: list
    seed: int


def split_corpus(items: Sequence, test_size: int, seed: int) -> CorpusSplit:
    """Deterministic shuffled split; a pure function of (item order, seed)."""
    if not 0 < test_size < len(items):
        raise InvalidSplit(f"test_size {test_size} out of range for {len(items)} items")
    order = list(range(len(items)))
    random.Random(seed).shuffle(order)
    test_idx = set(order[:test_size])
    train = [items[i] for i in range(len(items)) if i not in test_idx]
    test = [items[i] for i in range(len(items)) if i in test_idx]
    return CorpusSplit(train=train, test=test, seed=seed)


# ---------------------------------------------------------------------------
# Toy corpus generator
# ---------------------------------------------------------------------------
#
# Dialogues are built from templates over a small lexicon.  Every response
# template carries exactly one polarity slot filled from disjoint positive /
# negative word lists, so labels are linearly separable by unigram presence,
# and every input template has both a positive and a negative realization.

TOY_TOPICS = [
    "day", "movie", "food", "weather", "game", "music",
    "work", "trip", "party", "book", "coffee", "garden",
]

TOY_POSITIVE_WORDS = ["good", "great", "lovely", "happy", "wonderful", "fun"]
TOY_NEGATIVE_WORDS = ["bad", "awful", "sad", "gloomy", "terrible", "boring"]

TOY_INPUT_TEMPLATES = [
    "how is the {t}",
    "how was the {t}",
    "tell me about the {t}",
    "what about the {t}",
    "do you like the {t}",
    "describe the {t}",
]

# {t} = topic, {w}/{w2} = polarity words.  The two-slot template makes
# same-polarity words co-occur, which is what lets skip-gram embeddings
# separate the positive cluster from the negative one.
TOY_RESPONSE_TEMPLATES = [
    "the {t} is {w}",
    "the {t} was really {w}",
    "i feel {w} about the {t}",
    "it is a {w} {t}",
    "my {t} felt {w} today",
    "so {w} and {w2} here",
]


def _fill(template: str, rng: random.Random, topic: str, words: list[str]) -> list[str]:
    w = rng.choice(words)
    w2 = rng.choice(words)
    return template.format(t=topic, w=w, w2=w2).split()


def generate_toy_corpus(
    seed: int, n_pairs: int, n_labeled: int
) -> tuple[list[DialoguePair], list[LabeledSentence]]:
    """Deterministic synthetic corpus for desk-scale runs (lexicon < 40 tokens)."""
    if n_pairs < 1 or n_labeled < 1:
        raise ValueError("n_pairs and n_labeled must be positive")
    rng = random.Random(seed)
    pairs = []
    for _ in range(n_pairs):
        topic = rng.choice(TOY_TOPICS)
        x = rng.choice(TOY_INPUT_TEMPLATES).format(t=topic).split()
        positive = rng.random() < 0.5
        words = TOY_POSITIVE_WORDS if positive else TOY_NEGATIVE_WORDS
        y = _fill(rng.choice(TOY_RESPONSE_TEMPLATES), rng, topic, words)
        pairs.append(DialoguePair(x, y))
    labeled = []
    for _ in range(n_labeled):
        topic = rng.choice(TOY_TOPICS)
        positive = rng.random() < 0.5
        words = TOY_POSITIVE_WORDS if positive else TOY_NEGATIVE_WORDS
        text = _fill(rng.choice(TOY_RESPONSE_TEMPLATES), rng, topic, words)
        labeled.append(LabeledSentence(text, int(positive)))
    return pairs, labeled

"""Persona-style sentiment conditioning: the decoder input at every step is
the word embedding with one extra scalar channel holding a sentiment score.

Training feeds each reference response's score from a frozen sentiment
classifier; at inference the channel is pinned to the caller's desired score,
which steers the polarity of the reply.
"""

from dataclasses import replace
from typing import Optional, Sequence

import torch

from .classifier import SentimentModel, score_batch
from .corpus import DialoguePair, Vocabulary
from .errors import InvalidScore, MissingDependency, TrainingDiverged
from .seeding import seed_all
from .seq2seq import (
    DTYPE,
    Seq2SeqConfig,
    Seq2SeqModel,
    _epoch_nll,
    _make_optimizer,
    _prepare_batches,
    decode_greedy,
)


class PersonaModel(Seq2SeqModel):
    """Seq2seq whose decoder consumes one additional score channel per step."""

    def __init__(self, vocab: Vocabulary, config: Seq2SeqConfig):
        super().__init__(vocab, replace(config, extra_input_channels=1))


def train_persona(
    pairs: Sequence[DialoguePair],
    sc_model: Optional[SentimentModel],
    vocab: Vocabulary,
    config: Seq2SeqConfig,
    log=None,
) -> PersonaModel:
    """MLE training identical to the baseline except each decoder step sees the
    reference response's sentiment score (precomputed once per pair)."""
    if sc_model is None:
        raise MissingDependency("persona training needs a frozen sentiment classifier")
    if not pairs:
        raise TrainingDiverged("cannot train on an empty pair list")
    scores: list[float] = []
    for start in range(0, len(pairs), 256):
        scores.extend(score_batch(sc_model, [p.y for p in pairs[start : start + 256]]))
    ref_scores = torch.tensor(scores, dtype=DTYPE)
    gen = seed_all(config.seed)
    model = PersonaModel(vocab, config)
    xs, y_in, y_out = _prepare_batches(model, pairs)
    opt, scheduler = _make_optimizer(model, config)
    for epoch in range(config.epochs):
        order = torch.randperm(len(pairs), generator=gen).tolist()
        nll = _epoch_nll(
            model, xs, y_in, y_out, order, config.batch_size, opt, scheduler, extras=ref_scores
        )
        model.nll_history.append(nll)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} nll {nll:.4f}")
    model.eval()
    return model


def respond(model: PersonaModel, x_tokens: Sequence[str], desired_score: float) -> list[str]:
    """Greedy decode with the score channel pinned to ``desired_score``."""
    if not 0.0 <= desired_score <= 1.0:
        raise InvalidScore(f"desired score {desired_score} outside [0, 1]")
    extra = torch.tensor([desired_score], dtype=DTYPE)
    return decode_greedy(model, x_tokens, extra_value=extra)

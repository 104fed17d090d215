"""Policy-gradient fine-tuning of a pretrained chatbot against three rewards:
length-normalized coherence log-probability, a learned dialogue-pair score,
and the sentiment classifier score, mixed by linear interpolation.

The REINFORCE update subtracts an exponential-moving-average baseline from the
per-sample reward; all reward models stay frozen throughout.
"""

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .classifier import SentimentModel, score as sc_score
from .corpus import BOS_ID, EOS_ID, PAD_ID, DialoguePair, Vocabulary
from .errors import DegenerateCorpus, EmptySentence, InvalidWeights, TrainingDiverged
from .seeding import seed_all
from .seq2seq import (
    DTYPE,
    Seq2SeqModel,
    pad_batch,
    sample_batch_with_logprobs,
    sequence_logprob,
)


@dataclass
class RewardWeights:
    """Interpolation coefficients; the sentiment reward gets 1 - alpha - beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta >= 1:
            raise InvalidWeights(
                f"need alpha, beta >= 0 and alpha + beta < 1, got ({self.alpha}, {self.beta})"
            )

    @property
    def third(self) -> float:
        return 1.0 - self.alpha - self.beta


def total_reward(w: RewardWeights, r1: float, r2: float, r3: float) -> float:
    return w.alpha * r1 + w.beta * r2 + w.third * r3


def reward_r1(coh_model: Seq2SeqModel, x: Sequence[str], y: Sequence[str]) -> float:
    """log P_coherence(y|x) normalized by response length (EOS counted)."""
    if not y:
        raise EmptySentence("coherence reward needs a non-empty response")
    n_y = len(y) + 1
    return sequence_logprob(coh_model, x, y) / n_y


class PairDiscriminator(nn.Module):
    """Two GRU encoders whose concatenated final states feed a sigmoid
    pair-quality head.

    The head has one hidden layer: a single affine map over a concatenation
    cannot express agreement between the two encodings at all.
    """

    def __init__(self, vocab: Vocabulary, unit_size: int = 256, emb_dim: int = 300,
                 max_len: int = 15):
        super().__init__()
        self.vocab = vocab
        self.unit_size = unit_size
        self.emb_dim = emb_dim
        self.max_len = max_len
        self.embedding = nn.Embedding(len(vocab), emb_dim, padding_idx=PAD_ID)
        self.enc_x = nn.GRU(emb_dim, unit_size, batch_first=True)
        self.enc_y = nn.GRU(emb_dim, unit_size, batch_first=True)
        self.head = nn.Sequential(
            nn.Linear(2 * unit_size, unit_size), nn.Tanh(), nn.Linear(unit_size, 1)
        )
        self.double()
        self.heldout_accuracy: Optional[float] = None

    def _encode(self, gru: nn.GRU, seqs: list[list[int]]) -> torch.Tensor:
        batch, lengths = pad_batch(seqs)
        emb = self.embedding(batch)
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        _, hidden = gru(packed)
        return hidden[-1]

    def forward(self, xs: list[list[int]], ys: list[list[int]]) -> torch.Tensor:
        hx = self._encode(self.enc_x, xs)
        hy = self._encode(self.enc_y, ys)
        return torch.sigmoid(self.head(torch.cat([hx, hy], dim=-1))).squeeze(-1)

    def encode_tokens(self, tokens: Sequence[str]) -> list[int]:
        return self.vocab.encode(tokens)[: self.max_len]


@dataclass
class DiscriminatorConfig:
    unit_size: int = 256
    emb_dim: int = 300
    batch_size: int = 64
    epochs: int = 10
    learning_rate: float = 1e-3
    max_len: int = 15
    heldout_fraction: float = 0.1
    seed: int = 0


def _mismatched(i: int, pairs: Sequence[DialoguePair], gen: torch.Generator) -> int:
    j = i
    while tuple(pairs[j].y) == tuple(pairs[i].y):
        j = int(torch.randint(len(pairs), (1,), generator=gen))
    return j


def train_pair_discriminator(
    pairs: Sequence[DialoguePair], vocab: Vocabulary, config: DiscriminatorConfig, log=None
) -> PairDiscriminator:
    """Positives are true pairs; negatives pair x with a response drawn
    uniformly from a different pair (1:1 with positives).

    Negatives are resampled every epoch so the model has to learn the
    matching relation rather than memorize a fixed negative set; held-out
    pairs (with fixed negatives) report generalization.
    """
    distinct = {tuple(p.y) for p in pairs}
    if len(distinct) < 2:
        raise DegenerateCorpus("negatives need at least two distinct responses")
    gen = seed_all(config.seed)
    model = PairDiscriminator(vocab, config.unit_size, config.emb_dim, config.max_len)

    xs = [model.encode_tokens(p.x) for p in pairs]
    ys = [model.encode_tokens(p.y) for p in pairs]
    order = torch.randperm(len(pairs), generator=gen).tolist()
    n_heldout = max(1, int(len(pairs) * config.heldout_fraction))
    heldout_idx, train_idx = order[:n_heldout], order[n_heldout:]
    heldout = []
    for i in heldout_idx:
        heldout.append((xs[i], ys[i], 1.0))
        heldout.append((xs[i], ys[_mismatched(i, pairs, gen)], 0.0))

    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    for epoch in range(config.epochs):
        examples = []
        for i in train_idx:
            examples.append((xs[i], ys[i], 1.0))
            examples.append((xs[i], ys[_mismatched(i, pairs, gen)], 0.0))
        perm = torch.randperm(len(examples), generator=gen).tolist()
        total, count = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            bx = [examples[i][0] for i in idx]
            by = [examples[i][1] for i in idx]
            bl = torch.tensor([examples[i][2] for i in idx], dtype=DTYPE)
            probs = model(bx, by)
            loss = F.binary_cross_entropy(probs, bl)
            if not torch.isfinite(loss):
                raise TrainingDiverged("discriminator loss became non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} bce {total / count:.4f}")
    model.eval()

    with torch.no_grad():
        probs = model([e[0] for e in heldout], [e[1] for e in heldout])
        preds = (probs > 0.5).to(DTYPE)
        labels = torch.tensor([e[2] for e in heldout], dtype=DTYPE)
        model.heldout_accuracy = float((preds == labels).to(DTYPE).mean())
    if log is not None:
        log(f"held-out pair accuracy {model.heldout_accuracy:.3f}")
    return model


@torch.no_grad()
def reward_r2(d: PairDiscriminator, x: Sequence[str], y: Sequence[str]) -> float:
    return float(d([d.encode_tokens(x)], [d.encode_tokens(y)])[0])


def reward_r3(sc: SentimentModel, y: Sequence[str]) -> float:
    if not y:
        raise EmptySentence("sentiment reward needs a non-empty response")
    return sc_score(sc, y)


@torch.no_grad()
def _eos_logprob(coh_model: Seq2SeqModel, x: Sequence[str]) -> float:
    """log P(empty response | x): the EOS step alone, normalized by N_y = 1."""
    x_b, x_len = pad_batch([coh_model.encode_ids(x)])
    enc_out, enc_hidden, mask = coh_model.run_encoder(x_b, x_len)
    y_in = torch.tensor([[BOS_ID]], dtype=torch.long)
    logits = coh_model.decode_train(y_in, enc_out, enc_hidden, mask)
    return float(F.log_softmax(logits[0, 0], dim=-1)[EOS_ID])


@dataclass
class PolicyConfig:
    iterations: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    temperature: float = 1.0
    baseline_decay: float = 0.9
    seed: int = 0


@dataclass
class RewardModels:
    coherence: Optional[Seq2SeqModel]
    discriminator: Optional[PairDiscriminator]
    sentiment: SentimentModel


def train_policy(
    pretrained: Seq2SeqModel,
    rewards: RewardModels,
    w: RewardWeights,
    pairs: Sequence[DialoguePair],
    config: PolicyConfig,
    log_path: str | Path | None = None,
    log=None,
) -> Seq2SeqModel:
    """REINFORCE fine-tuning from a pretrained policy; reward models frozen.

    Per iteration: sample a response per input, score it with the interpolated
    reward, subtract the EMA baseline, and step along (R - b) * grad log pi.
    History rows {iter, mean_R, mean_R1, mean_R2, mean_R3} are kept on the
    returned model and optionally streamed to JSONL.
    """
    if w.alpha > 0 and rewards.coherence is None:
        raise InvalidWeights("alpha > 0 needs a coherence model")
    if w.beta > 0 and rewards.discriminator is None:
        raise InvalidWeights("beta > 0 needs a pair discriminator")
    gen = seed_all(config.seed)
    policy = copy.deepcopy(pretrained)
    policy.train()
    opt = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)
    inputs = [p.x for p in pairs]
    baseline = 0.0
    have_baseline = False
    history: list[dict] = []
    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for it in range(config.iterations):
            idx = torch.randint(len(inputs), (config.batch_size,), generator=gen).tolist()
            batch_x = [inputs[i] for i in idx]
            responses, logprob = sample_batch_with_logprobs(
                policy, batch_x, config.temperature, gen
            )
            r1s, r2s, r3s, totals = [], [], [], []
            with torch.no_grad():
                for x, y in zip(batch_x, responses):
                    if not y:
                        # EOS sampled first: score the bare EOS step, treat the
                        # empty reply as neither a good pair nor positive.
                        r1 = _eos_logprob(rewards.coherence, x) if w.alpha > 0 else 0.0
                        r2, r3 = 0.0, 0.0
                    else:
                        r1 = reward_r1(rewards.coherence, x, y) if w.alpha > 0 else 0.0
                        r2 = reward_r2(rewards.discriminator, x, y) if w.beta > 0 else 0.0
                        r3 = reward_r3(rewards.sentiment, y)
                    r1s.append(r1)
                    r2s.append(r2)
                    r3s.append(r3)
                    totals.append(total_reward(w, r1, r2, r3))
            reward_t = torch.tensor(totals, dtype=DTYPE)
            if not have_baseline:
                baseline = float(reward_t.mean())
                have_baseline = True
            loss = -((reward_t - baseline) * logprob).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged("policy-gradient loss became non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            baseline = config.baseline_decay * baseline + (1 - config.baseline_decay) * float(
                reward_t.mean()
            )
            row = {
                "iter": it,
                "mean_R": float(reward_t.mean()),
                "mean_R1": sum(r1s) / len(r1s),
                "mean_R2": sum(r2s) / len(r2s),
                "mean_R3": sum(r3s) / len(r3s),
            }
            history.append(row)
            if log_fh is not None:
                log_fh.write(json.dumps(row) + "\n")
            if log is not None and (it + 1) % 25 == 0:
                log(f"iter {it + 1}/{config.iterations} mean reward {row['mean_R']:.4f}")
    finally:
        if log_fh is not None:
            log_fh.close()
    policy.eval()
    policy.rl_history = history
    return policy

"""Variational recurrent autoencoder with KL warmup and decoder-input word
dropout, a differentiable soft-argmax bridge into the sentiment classifier,
and latent-code gradient ascent that rewrites a chatbot reply in place.

The online transform runs entirely on frozen models: encode the baseline
reply to a latent mean, climb the sentiment surface under an L2 leash back to
the starting code, then decode the edited latent.
"""

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .classifier import SentimentModel
from .corpus import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocabulary
from .errors import EmptySentence, OptimizationDiverged, TrainingDiverged
from .seeding import seed_all
from .seq2seq import DTYPE, Seq2SeqModel, decode_greedy


@dataclass
class AnnealSchedule:
    """Linear KL warmup: 0 at step 0, 1 from warmup_steps on."""

    warmup_steps: int = 1000
    shape: str = "linear"
    max_weight: float = 1.0


def kl_weight(step: int, schedule: AnnealSchedule) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    if schedule.warmup_steps <= 0:
        return schedule.max_weight
    return min(step / schedule.warmup_steps, 1.0) * schedule.max_weight


@dataclass
class VRAEConfig:
    unit_size: int = 500
    latent_dim: int = 500
    bidirectional: bool = True
    emb_dim: int = 300
    batch_size: int = 48
    epochs: int = 20
    learning_rate: float = 1e-3
    max_len: int = 15
    word_dropout_p: float = 0.3
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    annealing: bool = True
    seed: int = 0


class VRAE(nn.Module):
    """GRU encoder to a diagonal-Gaussian latent; GRU decoder fed the latent
    at every step (and as its initial state)."""

    def __init__(self, vocab: Vocabulary, config: VRAEConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        v, h, e, z = len(vocab), config.unit_size, config.emb_dim, config.latent_dim
        self.embedding = nn.Embedding(v, e, padding_idx=PAD_ID)
        self.encoder = nn.GRU(e, h, batch_first=True, bidirectional=config.bidirectional)
        enc_out_dim = 2 * h if config.bidirectional else h
        self.to_mean = nn.Linear(enc_out_dim, z)
        self.to_logvar = nn.Linear(enc_out_dim, z)
        self.latent_to_hidden = nn.Linear(z, h)
        self.decoder = nn.GRU(e + z, h, batch_first=True)
        self.out = nn.Linear(h, v)
        self.double()
        self.loss_history: list[tuple[float, float]] = []

    # --- encoding ----------------------------------------------------------

    def encode_stats(self, ids: torch.Tensor, lengths: torch.Tensor):
        emb = self.embedding(ids)
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        _, hidden = self.encoder(packed)
        if self.config.bidirectional:
            feats = torch.cat([hidden[0], hidden[1]], dim=-1)
        else:
            feats = hidden[-1]
        return self.to_mean(feats), self.to_logvar(feats)

    @torch.no_grad()
    def encode_mean(self, tokens: Sequence[str]) -> torch.Tensor:
        """Posterior mean for one sentence (the deterministic latent code)."""
        if not tokens:
            raise EmptySentence("cannot encode an empty sentence")
        ids = self.vocab.encode(tokens)[: self.config.max_len]
        batch = torch.tensor([ids], dtype=torch.long)
        lengths = torch.tensor([len(ids)], dtype=torch.long)
        mu, _ = self.encode_stats(batch, lengths)
        return mu[0]

    # --- decoding ----------------------------------------------------------

    def decode_train(self, z: torch.Tensor, y_in: torch.Tensor) -> torch.Tensor:
        emb = self.embedding(y_in)
        z_steps = z.unsqueeze(1).expand(-1, y_in.shape[1], -1)
        h0 = torch.tanh(self.latent_to_hidden(z)).unsqueeze(0)
        out, _ = self.decoder(torch.cat([emb, z_steps], dim=-1), h0)
        return self.out(out)

    def decode_step(self, input_emb: torch.Tensor, z: torch.Tensor, hidden: torch.Tensor):
        step_in = torch.cat([input_emb, z.unsqueeze(1)], dim=-1)
        out, hidden = self.decoder(step_in, hidden)
        return self.out(out).squeeze(1), hidden

    @torch.no_grad()
    def decode_greedy(self, z: torch.Tensor, max_steps: Optional[int] = None) -> list[str]:
        """Hard argmax decode from a latent vector; PAD/BOS masked out."""
        cap = max_steps if max_steps is not None else self.config.max_len
        z = z.reshape(1, -1)
        hidden = torch.tanh(self.latent_to_hidden(z)).unsqueeze(0)
        prev_emb = self.embedding(torch.tensor([[BOS_ID]]))
        mask = torch.zeros(len(self.vocab), dtype=DTYPE)
        mask[PAD_ID] = mask[BOS_ID] = float("-inf")
        ids = []
        for _ in range(cap):
            logits, hidden = self.decode_step(prev_emb, z, hidden)
            nxt = int((logits[0] + mask).argmax())
            if nxt == EOS_ID:
                break
            ids.append(nxt)
            prev_emb = self.embedding(torch.tensor([[nxt]]))
        return self.vocab.decode(ids)


def vrae_batch_loss(
    model: VRAE,
    seqs: list[list[int]],
    kl_term_weight: float,
    eps: Optional[torch.Tensor] = None,
    word_dropout_p: float = 0.0,
    gen: Optional[torch.Generator] = None,
):
    """One training loss: per-sentence reconstruction NLL sum plus weighted KL.

    Returns (loss, recon, kl) tensors; ``eps`` of zeros makes the pass
    deterministic (z = posterior mean).
    """
    max_t = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), max_t), PAD_ID, dtype=torch.long)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)

    mu, logvar = model.encode_stats(ids, lengths)
    if eps is None:
        eps = torch.randn(mu.shape, generator=gen, dtype=DTYPE)
    z = mu + torch.exp(0.5 * logvar) * eps

    # teacher-forced inputs [BOS, s...] and targets [s..., EOS]
    y_in = torch.full((len(seqs), max_t + 1), PAD_ID, dtype=torch.long)
    y_out = torch.full((len(seqs), max_t + 1), PAD_ID, dtype=torch.long)
    for i, s in enumerate(seqs):
        y_in[i, 0] = BOS_ID
        y_in[i, 1 : len(s) + 1] = torch.tensor(s, dtype=torch.long)
        y_out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        y_out[i, len(s)] = EOS_ID

    if word_dropout_p > 0:
        drop = torch.rand(y_in.shape, generator=gen) < word_dropout_p
        drop &= y_in != BOS_ID
        drop &= y_in != PAD_ID
        y_in = torch.where(drop, torch.full_like(y_in, UNK_ID), y_in)

    logits = model.decode_train(z, y_in)
    recon = F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        y_out.reshape(-1),
        ignore_index=PAD_ID,
        reduction="sum",
    ) / len(seqs)
    kl = (-0.5 * (1 + logvar - mu.pow(2) - logvar.exp()).sum(dim=-1)).mean()
    return recon + kl_term_weight * kl, recon, kl


def train_vrae(
    sentences: Sequence[Sequence[str]], vocab: Vocabulary, config: VRAEConfig, log=None
) -> VRAE:
    """Reconstruction NLL plus annealed KL to the standard normal prior;
    decoder inputs get word dropout to UNK at ``word_dropout_p``."""
    sentences = [s for s in sentences if s]
    if not sentences:
        raise TrainingDiverged("cannot train on an empty sentence list")
    gen = seed_all(config.seed)
    model = VRAE(vocab, config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    encoded = [vocab.encode(s)[: config.max_len] for s in sentences]
    step = 0
    for epoch in range(config.epochs):
        order = torch.randperm(len(encoded), generator=gen).tolist()
        tot_sum, kl_sum, n_seen = 0.0, 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            seqs = [encoded[i] for i in idx]
            weight = kl_weight(step, config.anneal) if config.annealing else 1.0
            loss, _, kl = vrae_batch_loss(
                model, seqs, weight, word_dropout_p=config.word_dropout_p, gen=gen
            )
            if not torch.isfinite(loss):
                raise TrainingDiverged("VRAE loss became non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            tot_sum += float(loss.detach()) * len(seqs)
            kl_sum += float(kl.detach()) * len(seqs)
            n_seen += len(seqs)
        model.loss_history.append((tot_sum / n_seen, kl_sum / n_seen))
        if log is not None:
            log(
                f"epoch {epoch + 1}/{config.epochs} total {tot_sum / n_seen:.4f} "
                f"kl {kl_sum / n_seen:.4f}"
            )
    model.eval()
    return model


@torch.no_grad()
def reconstruction_accuracy(model: VRAE, sentences: Sequence[Sequence[str]]) -> float:
    """Mean fraction of reference positions reproduced by greedy decoding from
    the posterior mean."""
    total, count = 0.0, 0
    for s in sentences:
        ref = list(s)[: model.config.max_len]
        recon = model.decode_greedy(model.encode_mean(ref), max_steps=len(ref) + 2)
        hits = sum(1 for t in range(len(ref)) if t < len(recon) and recon[t] == ref[t])
        total += hits / len(ref)
        count += 1
    return total / max(count, 1)


def soft_argmax(logits: torch.Tensor, temperature: float, matrix: torch.Tensor) -> torch.Tensor:
    """Temperature-softmax convex combination of embedding rows; differentiable."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = torch.as_tensor(logits, dtype=DTYPE)
    matrix = torch.as_tensor(matrix, dtype=DTYPE)
    weights = torch.softmax(logits / temperature, dim=-1)
    return weights @ matrix


@dataclass
class LatentOptConfig:
    gamma: float = 400.0
    delta: float = 25.0
    step_size: float = 0.01
    max_steps: int = 200
    target_score: float = 0.8
    softargmax_temperature: float = 0.1
    direction: int = 1  # +1 pushes the score up, -1 pushes it down
    length_margin: int = 2

    def __post_init__(self):
        if self.gamma < 0 or self.delta < 0 or self.gamma + self.delta <= 0:
            raise ValueError("need gamma, delta >= 0 with gamma + delta > 0")
        if not 0 < self.target_score <= 1:
            raise ValueError("target_score must be in (0, 1]")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")


def soft_decode_score(
    vrae: VRAE, sc: SentimentModel, h: torch.Tensor, steps: int, temperature: float
) -> torch.Tensor:
    """Differentiable classifier score of the decoded latent.

    Each decoder step turns its logits into a soft token (convex combination
    of embedding rows): the decoder consumes its own soft embedding
    autoregressively and the classifier consumes the same weights over its
    embedding table.
    """
    z = h.reshape(1, -1)
    hidden = torch.tanh(vrae.latent_to_hidden(z)).unsqueeze(0)
    prev_emb = vrae.embedding(torch.tensor([[BOS_ID]]))
    mask = torch.zeros(len(vrae.vocab), dtype=DTYPE)
    mask[PAD_ID] = mask[BOS_ID] = mask[EOS_ID] = float("-inf")
    sc_inputs = []
    for _ in range(steps):
        logits, hidden = vrae.decode_step(prev_emb, z, hidden)
        masked = logits[0] + mask
        prev_emb = soft_argmax(masked, temperature, vrae.embedding.weight).reshape(1, 1, -1)
        sc_inputs.append(soft_argmax(masked, temperature, sc.embedding.weight))
    emb_seq = torch.stack(sc_inputs, dim=0).unsqueeze(0)
    lengths = torch.tensor([steps], dtype=torch.long)
    return sc.forward_embedded(emb_seq, lengths)[0]


def latent_objective(
    vrae: VRAE, sc: SentimentModel, h: torch.Tensor, h0: torch.Tensor, cfg: LatentOptConfig,
    steps: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """gamma * SC(soft-decode(h)) - delta * MSE(h, h0) and its two pieces."""
    sc_val = soft_decode_score(vrae, sc, h, steps, cfg.softargmax_temperature)
    mse = torch.mean((h - h0) ** 2)
    objective = cfg.gamma * cfg.direction * sc_val - cfg.delta * mse
    return objective, sc_val, mse


def optimize_latent(
    vrae: VRAE,
    sc: SentimentModel,
    h0: torch.Tensor,
    cfg: LatentOptConfig,
    decode_steps: Optional[int] = None,
) -> tuple[torch.Tensor, float, list[dict]]:
    """Gradient ascent on the latent code until the classifier score reaches
    the target (or drops below 1 - target when direction is -1).

    Returns (final latent, achieved score, per-step trace {step, sc, mse}).
    """
    steps = decode_steps if decode_steps is not None else vrae.config.max_len
    h0 = h0.detach().reshape(-1)
    h = h0.clone()
    trace: list[dict] = []
    achieved = float("nan")
    for it in range(cfg.max_steps + 1):
        h_var = h.clone().requires_grad_(True)
        objective, sc_val, mse = latent_objective(vrae, sc, h_var, h0, cfg, steps)
        achieved = float(sc_val.detach())
        trace.append({"step": it, "sc": achieved, "mse": float(mse.detach())})
        reached = achieved >= cfg.target_score if cfg.direction > 0 else achieved <= 1 - cfg.target_score
        if reached or it == cfg.max_steps:
            break
        (grad,) = torch.autograd.grad(objective, h_var)
        if not torch.isfinite(grad).all():
            raise OptimizationDiverged("latent gradient became non-finite")
        h = h + cfg.step_size * grad
    return h.detach(), achieved, trace


def transform_response(
    seq2seq: Seq2SeqModel,
    vrae: VRAE,
    sc: SentimentModel,
    x_tokens: Sequence[str],
    cfg: LatentOptConfig,
    trace_path=None,
) -> list[str]:
    """Baseline reply -> latent mean -> sentiment-climbed latent -> hard decode.

    ``trace_path`` appends one JSONL row {step, sc, mse} per ascent iteration.
    """
    y = decode_greedy(seq2seq, x_tokens)
    if not y:
        raise EmptySentence("baseline model produced an empty reply")
    h0 = vrae.encode_mean(y)
    cap = len(y) + cfg.length_margin
    h_opt, _, trace = optimize_latent(vrae, sc, h0, cfg, decode_steps=cap)
    if trace_path is not None:
        with open(trace_path, "a") as fh:
            for row in trace:
                fh.write(json.dumps(row) + "\n")
    return vrae.decode_greedy(h_opt, max_steps=cap)

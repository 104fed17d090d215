"""Attention-based GRU encoder-decoder: MLE training, greedy decoding,
temperature sampling, and conditional sequence log-probability.

All modules run in float64 on CPU; desk-scale models are tiny and the tight
tolerances of the gradient and log-probability checks come for free.
Generation (greedy and sampling) draws from the model distribution with PAD
and BOS masked out; ``sequence_logprob`` scores the unmasked distribution so
that total probability over all sequences is exactly one.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import BOS_ID, EOS_ID, PAD_ID, DialoguePair, Vocabulary
from .errors import EncodingError, TrainingDiverged
from .seeding import seed_all

DTYPE = torch.float64


@dataclass
class Seq2SeqConfig:
    unit_size: int = 256
    layers: int = 1
    emb_dim: int = 300
    batch_size: int = 64
    max_len: int = 15
    learning_rate: float = 1e-3
    lr_decay_every: int = 0      # optimizer steps between decays; 0 disables
    lr_decay_rate: float = 1.0
    optimizer: str = "adam"      # "adam" | "sgd" (sgd pairs with the 0.5/0.99 schedule)
    epochs: int = 20
    seed: int = 0
    shared_embeddings: bool = True
    beam_width: int = 1          # decoding hook; only greedy (width 1) implemented
    extra_input_channels: int = 0  # persona variant appends conditioning channels


class Seq2SeqModel(nn.Module):
    """GRU encoder + multiplicative-attention GRU decoder over one vocabulary."""

    def __init__(self, vocab: Vocabulary, config: Seq2SeqConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        v, h, e = len(vocab), config.unit_size, config.emb_dim
        self.enc_embedding = nn.Embedding(v, e, padding_idx=PAD_ID)
        if config.shared_embeddings:
            self.dec_embedding = self.enc_embedding
        else:
            self.dec_embedding = nn.Embedding(v, e, padding_idx=PAD_ID)
        self.encoder = nn.GRU(e, h, config.layers, batch_first=True)
        self.decoder = nn.GRU(e + config.extra_input_channels, h, config.layers, batch_first=True)
        self.attn_score = nn.Linear(h, h, bias=False)
        self.attn_combine = nn.Linear(2 * h, h)
        self.out = nn.Linear(h, v)
        self.double()
        self.nll_history: list[float] = []

    # --- encoding ----------------------------------------------------------

    def encode_ids(self, tokens: Sequence[str]) -> list[int]:
        ids = self.vocab.encode(tokens)[: self.config.max_len]
        if any(i >= len(self.vocab) for i in ids):
            raise EncodingError("token id outside the vocabulary")
        return ids

    def run_encoder(self, x: torch.Tensor, lengths: torch.Tensor):
        emb = self.enc_embedding(x)
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, hidden = self.encoder(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        mask = torch.arange(x.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)
        return out, hidden, mask

    # --- decoding ----------------------------------------------------------

    def _attend(self, dec_h: torch.Tensor, enc_out: torch.Tensor, mask: torch.Tensor):
        scores = dec_h @ self.attn_score(enc_out).transpose(1, 2)
        scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = attn @ enc_out
        return torch.tanh(self.attn_combine(torch.cat([ctx, dec_h], dim=-1)))

    def decode_train(
        self,
        y_in: torch.Tensor,
        enc_out: torch.Tensor,
        enc_hidden: torch.Tensor,
        mask: torch.Tensor,
        extra: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """Teacher-forced logits (B, T, |V|); attention applied after the full GRU pass."""
        emb = self.dec_embedding(y_in)
        if extra is not None:
            emb = torch.cat([emb, extra], dim=-1)
        dec_h, _ = self.decoder(emb, enc_hidden)
        combined = self._attend(dec_h, enc_out, mask)
        return self.out(combined)

    def decode_step(
        self,
        y_prev: torch.Tensor,
        hidden: torch.Tensor,
        enc_out: torch.Tensor,
        mask: torch.Tensor,
        extra: Optional[torch.Tensor] = None,
    ):
        emb = self.dec_embedding(y_prev)
        if extra is not None:
            emb = torch.cat([emb, extra], dim=-1)
        dec_h, hidden = self.decoder(emb, hidden)
        combined = self._attend(dec_h, enc_out, mask)
        return self.out(combined).squeeze(1), hidden


def pad_batch(seqs: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
    out = torch.full((len(seqs), int(lengths.max())), PAD_ID, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out, lengths


def _generation_mask(v: int) -> torch.Tensor:
    mask = torch.zeros(v, dtype=DTYPE)
    mask[PAD_ID] = float("-inf")
    mask[BOS_ID] = float("-inf")
    return mask


def _prepare_batches(model: Seq2SeqModel, pairs: Sequence[DialoguePair]):
    xs = [model.encode_ids(p.x) for p in pairs]
    ys = [model.vocab.encode(p.y)[: model.config.max_len] for p in pairs]
    y_in = [[BOS_ID] + y for y in ys]
    y_out = [y + [EOS_ID] for y in ys]
    return xs, y_in, y_out


def _epoch_nll(
    model: Seq2SeqModel,
    xs,
    y_in,
    y_out,
    order,
    batch_size,
    opt=None,
    scheduler=None,
    extras=None,
):
    total_nll, total_tokens = 0.0, 0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        x_b, x_len = pad_batch([xs[i] for i in idx])
        yi_b, _ = pad_batch([y_in[i] for i in idx])
        yo_b, _ = pad_batch([y_out[i] for i in idx])
        enc_out, enc_hidden, mask = model.run_encoder(x_b, x_len)
        extra = None
        if extras is not None:
            extra = extras[idx].unsqueeze(1).unsqueeze(2).expand(-1, yi_b.shape[1], 1)
        logits = model.decode_train(yi_b, enc_out, enc_hidden, mask, extra=extra)
        loss = F.cross_entropy(
            logits.reshape(-1, logits.shape[-1]), yo_b.reshape(-1), ignore_index=PAD_ID
        )
        if not torch.isfinite(loss):
            raise TrainingDiverged("negative log-likelihood became non-finite")
        if opt is not None:
            opt.zero_grad()
            loss.backward()
            opt.step()
            if scheduler is not None:
                scheduler.step()
        n_tok = int((yo_b != PAD_ID).sum())
        total_nll += float(loss.detach()) * n_tok
        total_tokens += n_tok
    return total_nll / max(total_tokens, 1)


def _make_optimizer(model: nn.Module, config: Seq2SeqConfig):
    if config.optimizer == "sgd":
        opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    else:
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    scheduler = None
    if config.lr_decay_every > 0:
        scheduler = torch.optim.lr_scheduler.StepLR(
            opt, step_size=config.lr_decay_every, gamma=config.lr_decay_rate
        )
    return opt, scheduler


def train_mle(
    pairs: Sequence[DialoguePair],
    vocab: Vocabulary,
    config: Seq2SeqConfig,
    log=None,
) -> Seq2SeqModel:
    """Maximum-likelihood training with teacher forcing; per-epoch mean NLL in
    ``model.nll_history``."""
    if not pairs:
        raise TrainingDiverged("cannot train on an empty pair list")
    gen = seed_all(config.seed)
    model = Seq2SeqModel(vocab, config)
    xs, y_in, y_out = _prepare_batches(model, pairs)
    opt, scheduler = _make_optimizer(model, config)
    for epoch in range(config.epochs):
        order = torch.randperm(len(pairs), generator=gen).tolist()
        nll = _epoch_nll(model, xs, y_in, y_out, order, config.batch_size, opt, scheduler)
        model.nll_history.append(nll)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} nll {nll:.4f}")
    model.eval()
    return model


def mean_nll(model: Seq2SeqModel, pairs: Sequence[DialoguePair]) -> float:
    """Mean per-token NLL (EOS included) on the given pairs, no updates."""
    xs, y_in, y_out = _prepare_batches(model, pairs)
    with torch.no_grad():
        return _epoch_nll(model, xs, y_in, y_out, list(range(len(pairs))), model.config.batch_size)


@torch.no_grad()
def decode_greedy(
    model: Seq2SeqModel, x_tokens: Sequence[str], extra_value: Optional[torch.Tensor] = None
) -> list[str]:
    """Argmax decoding from BOS until EOS or max_len; PAD/BOS never emitted."""
    ids = _decode_ids(model, [model.encode_ids(x_tokens)], greedy=True, extra_value=extra_value)[0]
    return model.vocab.decode(ids)


def sample_response(
    model: Seq2SeqModel, x_tokens: Sequence[str], temperature: float, seed: int
) -> list[str]:
    """Sample from the temperature-scaled generation distribution."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    gen = torch.Generator()
    gen.manual_seed(seed)
    with torch.no_grad():
        ids = _decode_ids(model, [model.encode_ids(x_tokens)], greedy=False,
                          temperature=temperature, gen=gen)[0]
    return model.vocab.decode(ids)


def _decode_ids(
    model: Seq2SeqModel,
    xs: list[list[int]],
    greedy: bool,
    temperature: float = 1.0,
    gen: Optional[torch.Generator] = None,
    extra_value: Optional[torch.Tensor] = None,
) -> list[list[int]]:
    x_b, x_len = pad_batch(xs)
    enc_out, hidden, mask = model.run_encoder(x_b, x_len)
    batch = len(xs)
    prev = torch.full((batch, 1), BOS_ID, dtype=torch.long)
    gen_mask = _generation_mask(len(model.vocab))
    done = torch.zeros(batch, dtype=torch.bool)
    outputs: list[list[int]] = [[] for _ in range(batch)]
    extra = None
    if extra_value is not None:
        extra = extra_value.reshape(1, 1, -1).to(DTYPE).expand(batch, 1, -1)
    for _ in range(model.config.max_len):
        logits, hidden = model.decode_step(prev, hidden, enc_out, mask, extra=extra)
        logits = logits + gen_mask
        if greedy:
            nxt = logits.argmax(dim=-1)
        else:
            probs = torch.softmax(logits / temperature, dim=-1)
            nxt = torch.multinomial(probs, 1, generator=gen).squeeze(1)
        for i in range(batch):
            if not done[i]:
                if int(nxt[i]) == EOS_ID:
                    done[i] = True
                else:
                    outputs[i].append(int(nxt[i]))
        if bool(done.all()):
            break
        prev = nxt.unsqueeze(1)
    return outputs


def sequence_logprob(
    model: Seq2SeqModel,
    x_tokens: Sequence[str],
    y_tokens: Sequence[str],
    include_eos: bool = True,
) -> float:
    """log P(y | x) via the chain rule, the EOS step included by default."""
    if not y_tokens:
        raise ValueError("y must be non-empty")
    with torch.no_grad():
        x_ids = model.encode_ids(x_tokens)
        y_ids = model.vocab.encode(y_tokens)
        x_b, x_len = pad_batch([x_ids])
        enc_out, enc_hidden, mask = model.run_encoder(x_b, x_len)
        y_in = torch.tensor([[BOS_ID] + y_ids], dtype=torch.long)
        targets = y_ids + [EOS_ID] if include_eos else y_ids
        steps = len(targets)
        logits = model.decode_train(y_in, enc_out, enc_hidden, mask)
        logprobs = F.log_softmax(logits[0, :steps], dim=-1)
        return float(logprobs[torch.arange(steps), torch.tensor(targets)].sum())


def sample_batch_with_logprobs(
    model: Seq2SeqModel,
    x_token_batch: list[list[str]],
    temperature: float,
    gen: torch.Generator,
) -> tuple[list[list[str]], torch.Tensor]:
    """Sample one response per input and return differentiable log pi(y|x).

    The log-probability uses the same PAD/BOS-masked distribution the sampler
    draws from, as the policy-gradient estimator requires.
    """
    xs = [model.encode_ids(x) for x in x_token_batch]
    x_b, x_len = pad_batch(xs)
    enc_out, hidden, mask = model.run_encoder(x_b, x_len)
    batch = len(xs)
    prev = torch.full((batch, 1), BOS_ID, dtype=torch.long)
    gen_mask = _generation_mask(len(model.vocab))
    alive = torch.ones(batch, dtype=DTYPE)
    logprob = torch.zeros(batch, dtype=DTYPE)
    outputs: list[list[int]] = [[] for _ in range(batch)]
    for _ in range(model.config.max_len):
        logits, hidden = model.decode_step(prev, hidden, enc_out, mask)
        logp = F.log_softmax(logits + gen_mask, dim=-1)
        with torch.no_grad():
            probs = torch.softmax((logits + gen_mask) / temperature, dim=-1)
            nxt = torch.multinomial(probs, 1, generator=gen).squeeze(1)
        logprob = logprob + alive * logp[torch.arange(batch), nxt]
        for i in range(batch):
            if alive[i] > 0 and int(nxt[i]) != EOS_ID:
                outputs[i].append(int(nxt[i]))
        alive = alive * (nxt != EOS_ID).to(DTYPE)
        if float(alive.sum()) == 0.0:
            break
        prev = nxt.unsqueeze(1)
    responses = [model.vocab.decode(ids) for ids in outputs]
    return responses, logprob


def uniform_output_model(vocab: Vocabulary, config: Seq2SeqConfig) -> Seq2SeqModel:
    """A model whose per-step distribution is exactly uniform over |V| (zeroed head)."""
    model = Seq2SeqModel(vocab, config)
    with torch.no_grad():
        model.out.weight.zero_()
        model.out.bias.zero_()
    model.eval()
    return model

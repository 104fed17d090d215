"""Style transfer over fixed word-embedding sequences: two length-preserving
translators trained with Wasserstein critics, gradient penalty, and
cycle-consistency reconstruction; decoding back to tokens is cosine
nearest-neighbor per position.

Translators carry a residual connection from the input embedding to the
output with a zero-initialized projection, so an untrained translator is the
identity map and early training preserves content.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch
import torch.nn as nn

from .embedding import EmbeddingTable, nearest_token
from .errors import DegenerateCorpus, EmptySentence, TrainingDiverged
from .seeding import seed_all

DTYPE = torch.float64


@dataclass
class CycleConfig:
    gen_steps: int = 1
    disc_steps: int = 1
    gp_coefficient: float = 10.0
    identity_loss: bool = False
    identity_weight: float = 1.0
    iterations: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-4
    unit_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.gen_steps < 1 or self.disc_steps < 1:
            raise ValueError("step ratio components must be >= 1")
        if self.gp_coefficient < 0:
            raise ValueError("gradient-penalty coefficient must be >= 0")


class Translator(nn.Module):
    """Embedding-sequence to embedding-sequence map, one output per position."""

    def __init__(self, dim: int, unit_size: int):
        super().__init__()
        self.encoder = nn.GRU(dim, unit_size, batch_first=True)
        self.decoder = nn.GRU(dim + unit_size, unit_size, batch_first=True)
        self.proj = nn.Linear(unit_size, dim)
        self.double()
        # identity at initialization: the residual branch starts at zero
        with torch.no_grad():
            self.proj.weight.zero_()
            self.proj.bias.zero_()

    def forward(self, emb: torch.Tensor) -> torch.Tensor:
        _, ctx = self.encoder(emb)
        ctx_steps = ctx[-1].unsqueeze(1).expand(-1, emb.shape[1], -1)
        dec_out, _ = self.decoder(torch.cat([emb, ctx_steps], dim=-1))
        return emb + self.proj(dec_out)


class Critic(nn.Module):
    """GRU encoder with an unbounded scalar head (Wasserstein-style score)."""

    def __init__(self, dim: int, unit_size: int):
        super().__init__()
        self.encoder = nn.GRU(dim, unit_size, batch_first=True)
        self.head = nn.Linear(unit_size, 1)
        self.double()

    def forward(self, emb: torch.Tensor) -> torch.Tensor:
        _, hidden = self.encoder(emb)
        return self.head(hidden[-1]).squeeze(-1)


def seq_mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.mean((a - b) ** 2)


def disc_loss_P(dP: Callable, G: Callable, y_n_emb: torch.Tensor, y_p_emb: torch.Tensor) -> torch.Tensor:
    """Critic-for-positive loss: score the translated fake low, the real high."""
    with torch.no_grad():
        fake_p = G(y_n_emb)
    return dP(fake_p).mean() - dP(y_p_emb).mean()


def disc_loss_N(dN: Callable, F: Callable, y_p_emb: torch.Tensor, y_n_emb: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        fake_n = F(y_p_emb)
    return dN(fake_n).mean() - dN(y_n_emb).mean()


def gradient_penalty(
    d: Callable,
    real_emb: torch.Tensor,
    fake_emb: torch.Tensor,
    lam: float,
    gen: torch.Generator | None = None,
) -> torch.Tensor:
    """lam * (||grad_u d(u)||_2 - 1)^2 at u interpolated per sample between
    real and fake; the norm runs over each sample's full (T, dim) block."""
    if lam < 0:
        raise ValueError("penalty coefficient must be >= 0")
    if lam == 0:
        return torch.zeros((), dtype=real_emb.dtype)
    eps = torch.rand(real_emb.shape[0], 1, 1, generator=gen, dtype=real_emb.dtype)
    u = (eps * real_emb + (1 - eps) * fake_emb.detach()).requires_grad_(True)
    scores = d(u)
    (grads,) = torch.autograd.grad(scores.sum(), u, create_graph=True)
    norms = grads.reshape(grads.shape[0], -1).norm(dim=1)
    return lam * ((norms - 1) ** 2).mean()


def gen_losses(
    F: Callable,
    G: Callable,
    dP: Callable,
    dN: Callable,
    y_p_emb: torch.Tensor,
    y_n_emb: torch.Tensor,
    identity: bool = False,
    identity_weight: float = 1.0,
) -> dict:
    """Translator losses: shared cycle reconstruction term plus each critic's
    score of the corresponding fake (optionally plus identity terms)."""
    fake_n = F(y_p_emb)
    fake_p = G(y_n_emb)
    cycle = 2 * (seq_mse(y_p_emb, G(fake_n)) + seq_mse(y_n_emb, F(fake_p)))
    critic_f = dN(fake_n).mean()
    critic_g = dP(fake_p).mean()
    id_term = torch.zeros((), dtype=y_p_emb.dtype)
    if identity:
        id_term = identity_weight * (seq_mse(y_p_emb, G(y_p_emb)) + seq_mse(y_n_emb, F(y_n_emb)))
    return {
        "L_F": cycle - critic_f + id_term,
        "L_G": cycle - critic_g + id_term,
        "cycle": cycle,
        "critic_F": critic_f,
        "critic_G": critic_g,
        "identity": id_term,
    }


@dataclass
class CycleGanModel:
    F: Translator
    G: Translator
    dP: Critic
    dN: Critic
    table: EmbeddingTable
    config: CycleConfig
    history: list = field(default_factory=list)


def _embed_sentences(table: EmbeddingTable, sentences: Sequence[Sequence[str]]):
    """Bucket sentences by length as stacked embedding tensors {L: (N, L, d)}."""
    buckets: dict[int, list[torch.Tensor]] = {}
    matrix = torch.as_tensor(table.matrix, dtype=DTYPE)
    for s in sentences:
        ids = table.vocab.encode(s)
        if not ids:
            continue
        buckets.setdefault(len(ids), []).append(matrix[ids])
    return {length: torch.stack(items) for length, items in buckets.items()}


def train_cyclegan(
    pos_sents: Sequence[Sequence[str]],
    neg_sents: Sequence[Sequence[str]],
    table: EmbeddingTable,
    cfg: CycleConfig,
    log_path: str | Path | None = None,
    log=None,
) -> CycleGanModel:
    """Alternating critic/translator updates on length-matched minibatches.

    The embedding table is read-only throughout; each iteration samples one
    sentence length present in both style sets so interpolation for the
    gradient penalty is well-defined.
    """
    gen = seed_all(cfg.seed)
    pos_buckets = _embed_sentences(table, pos_sents)
    neg_buckets = _embed_sentences(table, neg_sents)
    common = sorted(set(pos_buckets) & set(neg_buckets))
    if not common:
        raise DegenerateCorpus("style sets share no sentence length; cannot batch")
    weights = torch.tensor(
        [pos_buckets[L].shape[0] + neg_buckets[L].shape[0] for L in common], dtype=DTYPE
    )
    weights = weights / weights.sum()

    dim = table.dim
    model = CycleGanModel(
        F=Translator(dim, cfg.unit_size),
        G=Translator(dim, cfg.unit_size),
        dP=Critic(dim, cfg.unit_size),
        dN=Critic(dim, cfg.unit_size),
        table=table,
        config=cfg,
    )
    opt_d = torch.optim.Adam(list(model.dP.parameters()) + list(model.dN.parameters()), lr=cfg.learning_rate)
    opt_g = torch.optim.Adam(list(model.F.parameters()) + list(model.G.parameters()), lr=cfg.learning_rate)

    def draw(buckets, length):
        pool = buckets[length]
        idx = torch.randint(pool.shape[0], (cfg.batch_size,), generator=gen)
        return pool[idx]

    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for it in range(cfg.iterations):
            length = common[int(torch.multinomial(weights, 1, generator=gen))]
            row = {"iter": it}
            for _ in range(cfg.disc_steps):
                y_p = draw(pos_buckets, length)
                y_n = draw(neg_buckets, length)
                l_dp = disc_loss_P(model.dP, model.G, y_n, y_p)
                l_dn = disc_loss_N(model.dN, model.F, y_p, y_n)
                with torch.no_grad():
                    fake_p = model.G(y_n)
                    fake_n = model.F(y_p)
                gp = gradient_penalty(model.dP, y_p, fake_p, cfg.gp_coefficient, gen) + \
                    gradient_penalty(model.dN, y_n, fake_n, cfg.gp_coefficient, gen)
                loss_d = l_dp + l_dn + gp
                if not torch.isfinite(loss_d):
                    raise TrainingDiverged("critic loss became non-finite")
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                row.update(L_dP=float(l_dp.detach()), L_dN=float(l_dn.detach()), gp=float(gp.detach()))
            for _ in range(cfg.gen_steps):
                y_p = draw(pos_buckets, length)
                y_n = draw(neg_buckets, length)
                losses = gen_losses(
                    model.F, model.G, model.dP, model.dN, y_p, y_n,
                    identity=cfg.identity_loss, identity_weight=cfg.identity_weight,
                )
                # single backward whose per-translator gradients equal those of
                # L_F and L_G respectively (shared terms counted once)
                combined = losses["cycle"] - losses["critic_F"] - losses["critic_G"] \
                    + losses["identity"]
                if not torch.isfinite(combined):
                    raise TrainingDiverged("translator loss became non-finite")
                opt_g.zero_grad()
                combined.backward()
                opt_g.step()
                row.update(L_F=float(losses["L_F"].detach()), L_G=float(losses["L_G"].detach()))
            model.history.append(row)
            if log_fh is not None:
                log_fh.write(json.dumps(row) + "\n")
            if log is not None and (it + 1) % 100 == 0:
                log(
                    f"iter {it + 1}/{cfg.iterations} "
                    f"L_dP {row['L_dP']:.4f} L_dN {row['L_dN']:.4f} "
                    f"L_F {row['L_F']:.4f} L_G {row['L_G']:.4f}"
                )
    finally:
        if log_fh is not None:
            log_fh.close()
    for module in (model.F, model.G, model.dP, model.dN):
        module.eval()
    return model


@torch.no_grad()
def transfer(G: Translator, table: EmbeddingTable, sentence: Sequence[str]) -> list[str]:
    """Translate a sentence: embed, map, cosine-decode each output position."""
    if not sentence:
        raise EmptySentence("cannot transfer an empty sentence")
    ids = table.vocab.encode(sentence)
    matrix = torch.as_tensor(table.matrix, dtype=DTYPE)
    emb = matrix[ids].unsqueeze(0)
    out = G(emb)[0].numpy()
    return table.vocab.decode([nearest_token(table, out[t]) for t in range(out.shape[0])])

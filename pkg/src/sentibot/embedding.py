"""Skip-gram word embeddings with negative sampling, plus cosine decoding.

The trained table is frozen by every downstream consumer; sentence transfer
converts generated vectors back to tokens with :func:`nearest_token`, which
searches non-special rows only so padding or boundary markers are never
emitted.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .corpus import Vocabulary
from .errors import DegenerateQuery, InsufficientData, InsufficientTraining
from .seeding import seed_all

N_SPECIALS = 4


@dataclass
class EmbeddingTable:
    """|V| x d matrix of input-side skip-gram vectors, immutable after training."""

    matrix: np.ndarray
    vocab: Vocabulary
    dim: int

    def __post_init__(self):
        if self.matrix.shape != (len(self.vocab), self.dim):
            raise ValueError("matrix shape does not match vocabulary / dim")

    def row(self, token_id: int) -> np.ndarray:
        return self.matrix[token_id]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.vocab.save(directory / "vocab.json")
        (directory / "table.json").write_text(
            json.dumps({"dim": self.dim, "dtype": "float32", "order": "row-major"})
        )
        self.matrix.astype(np.float32).tofile(directory / "table.f32")

    @classmethod
    def load(cls, directory: str | Path) -> "EmbeddingTable":
        directory = Path(directory)
        vocab = Vocabulary.load(directory / "vocab.json")
        header = json.loads((directory / "table.json").read_text())
        flat = np.fromfile(directory / "table.f32", dtype=np.float32)
        matrix = flat.reshape(len(vocab), header["dim"]).astype(np.float64)
        return cls(matrix=matrix, vocab=vocab, dim=header["dim"])


def train_skipgram(
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    dim: int = 300,
    window: int = 5,
    negative_samples: int = 5,
    epochs: int = 5,
    seed: int = 0,
    lr: float = 0.05,
    batch_size: int = 256,
) -> EmbeddingTable:
    """Train input-side skip-gram vectors; deterministic given the seed."""
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if epochs < 1:
        raise InsufficientTraining("skip-gram needs at least one epoch")
    gen = seed_all(seed)

    encoded = [vocab.encode(s) for s in sentences if len(s) > 0]
    centers, contexts = [], []
    for ids in encoded:
        for i, c in enumerate(ids):
            lo, hi = max(0, i - window), min(len(ids), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(c)
                    contexts.append(ids[j])
    if not centers:
        raise InsufficientData("corpus has no token within any context window")

    centers_t = torch.tensor(centers, dtype=torch.long)
    contexts_t = torch.tensor(contexts, dtype=torch.long)

    # Unigram^0.75 negative-sampling distribution over non-special ids.
    counts = torch.zeros(len(vocab), dtype=torch.float64)
    for ids in encoded:
        for t in ids:
            counts[t] += 1
    noise = counts.pow(0.75)
    noise[:N_SPECIALS] = 0.0
    if noise.sum() == 0:
        raise InsufficientData("no in-vocabulary tokens to sample negatives from")
    noise = noise / noise.sum()

    emb_in = torch.empty(len(vocab), dim, dtype=torch.float64)
    emb_out = torch.empty(len(vocab), dim, dtype=torch.float64)
    torch.nn.init.uniform_(emb_in, -0.5 / dim, 0.5 / dim, generator=gen)
    torch.nn.init.uniform_(emb_out, -0.5 / dim, 0.5 / dim, generator=gen)
    emb_in.requires_grad_(True)
    emb_out.requires_grad_(True)
    opt = torch.optim.Adam([emb_in, emb_out], lr=lr)

    n = len(centers)
    for _ in range(epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            c, ctx = centers_t[idx], contexts_t[idx]
            neg = torch.multinomial(noise, len(idx) * negative_samples, replacement=True, generator=gen)
            neg = neg.view(len(idx), negative_samples)
            v = emb_in[c]
            pos_score = (v * emb_out[ctx]).sum(-1)
            neg_score = torch.bmm(emb_out[neg], v.unsqueeze(-1)).squeeze(-1)
            loss = -(
                torch.nn.functional.logsigmoid(pos_score).mean()
                + torch.nn.functional.logsigmoid(-neg_score).mean()
            )
            opt.zero_grad()
            loss.backward()
            opt.step()

    return EmbeddingTable(matrix=emb_in.detach().numpy().copy(), vocab=vocab, dim=dim)


def nearest_token(table: EmbeddingTable, vector: np.ndarray) -> int:
    """Cosine-nearest non-special token id; ties break toward the lowest id."""
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vector.shape[0] != table.dim:
        raise ValueError(f"query has dim {vector.shape[0]}, table has {table.dim}")
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise DegenerateQuery("cannot decode a zero vector")
    rows = table.matrix[N_SPECIALS:]
    row_norms = np.linalg.norm(rows, axis=1)
    sims = rows @ vector / (row_norms * norm + 1e-300)
    # argmax returns the first (lowest-id) maximal entry
    return int(np.argmax(sims)) + N_SPECIALS


def embed_sequence(table: EmbeddingTable, tokens: Sequence[str]) -> np.ndarray:
    """d x L matrix whose column t is the embedding row of token t."""
    ids = table.vocab.encode(tokens)
    if not ids:
        return np.zeros((table.dim, 0), dtype=np.float64)
    return table.matrix[ids].T.copy()

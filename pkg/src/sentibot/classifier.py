"""Binary sentiment scorer with three interchangeable bodies (CNN with
max-over-time pooling, GRU last-state, GRU state-average), accuracy/AUC
evaluation, and the relabel-and-filter refinement pass.

Scores come from a sigmoid head, so they live in [0, 1].  The model also
scores pre-embedded sequences (``forward_embedded``) so the latent-editing
pipeline can drive it with convex combinations of embedding rows.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import PAD_ID, LabeledSentence, Vocabulary
from .errors import DegenerateLabels, EmptyAfterFilter, EmptySentence, TrainingDiverged
from .seeding import seed_all

DTYPE = torch.float64

ARCHITECTURES = ("cnn", "gru-last", "gru-avg")
CNN_WINDOWS = (2, 3)


@dataclass
class ClassifierConfig:
    architecture: str = "gru-last"
    segmentation: str = "word"
    unit_size: int = 256
    emb_dim: int = 300
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    max_len: int = 40
    seed: int = 0


class SentimentModel(nn.Module):
    def __init__(self, vocab: Vocabulary, config: ClassifierConfig):
        super().__init__()
        if config.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        self.vocab = vocab
        self.config = config
        v, h, e = len(vocab), config.unit_size, config.emb_dim
        self.embedding = nn.Embedding(v, e, padding_idx=PAD_ID)
        if config.architecture == "cnn":
            self.convs = nn.ModuleList([nn.Conv1d(e, h, w) for w in CNN_WINDOWS])
            self.head = nn.Linear(h * len(CNN_WINDOWS), 1)
        else:
            self.gru = nn.GRU(e, h, batch_first=True)
            self.head = nn.Linear(h, 1)
        self.double()
        self.loss_history: list[float] = []

    def forward_embedded(self, emb: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Probability of positive sentiment from an embedded batch (B, T, e)."""
        arch = self.config.architecture
        if arch == "cnn":
            feats = []
            for conv, w in zip(self.convs, CNN_WINDOWS):
                if emb.shape[1] < w:
                    pad = torch.zeros(emb.shape[0], w - emb.shape[1], emb.shape[2], dtype=emb.dtype)
                    x = torch.cat([emb, pad], dim=1)
                else:
                    x = emb
                act = torch.relu(conv(x.transpose(1, 2)))
                # mask windows that reach into padding so pooling does not
                # depend on how far the batch was padded
                n_windows = act.shape[-1]
                valid = (lengths - w + 1).clamp(min=1).unsqueeze(1)
                window_idx = torch.arange(n_windows).unsqueeze(0)
                act = act.masked_fill((window_idx >= valid).unsqueeze(1), float("-inf"))
                feats.append(act.max(dim=-1).values)
            pooled = torch.cat(feats, dim=-1)
            return torch.sigmoid(self.head(pooled)).squeeze(-1)
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, hidden = self.gru(packed)
        if arch == "gru-last":
            feats = hidden[-1]
        else:  # gru-avg over non-PAD steps only
            out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=emb.shape[1])
            mask = (torch.arange(emb.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)).to(emb.dtype)
            feats = (out * mask.unsqueeze(-1)).sum(dim=1) / lengths.to(emb.dtype).unsqueeze(-1)
        return torch.sigmoid(self.head(feats)).squeeze(-1)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        return self.forward_embedded(self.embedding(ids), lengths)


def _encode_batch(model: SentimentModel, sentences: Sequence[Sequence[str]]):
    max_len = model.config.max_len
    ids = [model.vocab.encode(s)[:max_len] for s in sentences]
    lengths = torch.tensor([len(i) for i in ids], dtype=torch.long)
    batch = torch.full((len(ids), int(lengths.max())), PAD_ID, dtype=torch.long)
    for i, row in enumerate(ids):
        batch[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    return batch, lengths


def train_classifier(
    labeled: Sequence[LabeledSentence], vocab: Vocabulary, config: ClassifierConfig, log=None
) -> SentimentModel:
    labels = {s.label for s in labeled}
    if labels != {0, 1}:
        raise DegenerateLabels(f"training data must contain both classes, got {sorted(labels)}")
    gen = seed_all(config.seed)
    model = SentimentModel(vocab, config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    targets = torch.tensor([s.label for s in labeled], dtype=DTYPE)
    for epoch in range(config.epochs):
        order = torch.randperm(len(labeled), generator=gen).tolist()
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch, lengths = _encode_batch(model, [labeled[i].text for i in idx])
            probs = model(batch, lengths)
            loss = F.binary_cross_entropy(probs, targets[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged("classifier loss became non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        model.loss_history.append(total / count)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} bce {total / count:.4f}")
    model.eval()
    return model


@torch.no_grad()
def score(model: SentimentModel, sentence: Sequence[str]) -> float:
    if not sentence:
        raise EmptySentence("cannot score an empty sentence")
    batch, lengths = _encode_batch(model, [sentence])
    return float(model(batch, lengths)[0])


@torch.no_grad()
def score_batch(model: SentimentModel, sentences: Sequence[Sequence[str]]) -> list[float]:
    if not sentences:
        return []
    for s in sentences:
        if not s:
            raise EmptySentence("cannot score an empty sentence")
    batch, lengths = _encode_batch(model, sentences)
    return [float(p) for p in model(batch, lengths)]


def auc_rank(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC from mean ranks; tied scores contribute one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # mean of 1-based ranks
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate_classifier(model: SentimentModel, test: Sequence[LabeledSentence]) -> dict:
    """Accuracy at the 0.5 threshold, rank-statistic AUC (flagged off when the
    test set is single-class)."""
    if not test:
        raise DegenerateLabels("empty test set")
    scores = score_batch(model, [s.text for s in test])
    labels = [s.label for s in test]
    preds = [1 if s > 0.5 else 0 for s in scores]
    accuracy = sum(p == l for p, l in zip(preds, labels)) / len(test)
    report = {"accuracy": accuracy, "n": len(test), "threshold": 0.5}
    if len(set(labels)) == 2:
        report["auc"] = auc_rank(scores, labels)
        report["auc_defined"] = True
    else:
        report["auc"] = None
        report["auc_defined"] = False
    return report


def relabel_filter(
    labeled: Sequence[LabeledSentence], model: SentimentModel, margin: float
) -> list[LabeledSentence]:
    """Keep confidently-scored items (|score - 0.5| >= margin), relabeled by the
    model; order preserved."""
    if not 0 <= margin < 0.5:
        raise ValueError("margin must be in [0, 0.5)")
    scores = score_batch(model, [s.text for s in labeled])
    kept = [
        LabeledSentence(s.text, 1 if sc >= 0.5 else 0)
        for s, sc in zip(labeled, scores)
        if abs(sc - 0.5) >= margin
    ]
    if not kept:
        raise EmptyAfterFilter(f"margin {margin} removed every sentence")
    return kept

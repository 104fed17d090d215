"""The four machine metrics (coherence log-probability, learned pair score,
sentiment score, language-model score), system-level evaluation with a
rendered comparison table, and the blinded human-annotation export.

Metric models are re-trained with their own seeds and splits so they never
share parameters with any model used during training; the experiment manifest
records both sides' checkpoint ids so the separation can be audited.
"""

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .classifier import SentimentModel, score as sc_score
from .corpus import BOS_ID, EOS_ID, PAD_ID, DialoguePair, Vocabulary
from .errors import EmptySentence, TrainingDiverged
from .rl import PairDiscriminator, reward_r1, reward_r2
from .seeding import seed_all
from .seq2seq import Seq2SeqModel

# ---------------------------------------------------------------------------
# Language model
# ---------------------------------------------------------------------------


@dataclass
class LMConfig:
    unit_size: int = 256
    layers: int = 2
    emb_dim: int = 300
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    max_len: int = 40
    seed: int = 0


class LanguageModel(nn.Module):
    """Autoregressive GRU language model (two layers by default)."""

    def __init__(self, vocab: Vocabulary, config: LMConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.embedding = nn.Embedding(len(vocab), config.emb_dim, padding_idx=PAD_ID)
        self.gru = nn.GRU(config.emb_dim, config.unit_size, config.layers, batch_first=True)
        self.out = nn.Linear(config.unit_size, len(vocab))
        self.double()
        self.nll_history: list[float] = []

    @torch.no_grad()
    def logprobs(self, y_ids: Sequence[int]) -> np.ndarray:
        """Per-step log P(y_t | y_<t) for targets y + EOS (one teacher-forced pass)."""
        y_in = torch.tensor([[BOS_ID] + list(y_ids)], dtype=torch.long)
        targets = list(y_ids) + [EOS_ID]
        out, _ = self.gru(self.embedding(y_in))
        logp = F.log_softmax(self.out(out)[0], dim=-1)
        steps = torch.arange(len(targets))
        return logp[steps, torch.tensor(targets)].numpy()

    @torch.no_grad()
    def next_distribution(self, prefix_ids: Sequence[int]) -> np.ndarray:
        """Distribution over the next token given a prefix (oracle-friendly API)."""
        y_in = torch.tensor([[BOS_ID] + list(prefix_ids)], dtype=torch.long)
        out, _ = self.gru(self.embedding(y_in))
        return torch.softmax(self.out(out)[0, -1], dim=-1).numpy()


def train_lm(
    sentences: Sequence[Sequence[str]], vocab: Vocabulary, config: LMConfig, log=None
) -> LanguageModel:
    sentences = [s for s in sentences if s]
    if not sentences:
        raise TrainingDiverged("cannot train a language model on an empty corpus")
    gen = seed_all(config.seed)
    model = LanguageModel(vocab, config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    encoded = [vocab.encode(s)[: config.max_len] for s in sentences]
    for epoch in range(config.epochs):
        order = torch.randperm(len(encoded), generator=gen).tolist()
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            seqs = [encoded[i] for i in idx]
            max_t = max(len(s) for s in seqs)
            y_in = torch.full((len(seqs), max_t + 1), PAD_ID, dtype=torch.long)
            y_out = torch.full((len(seqs), max_t + 1), PAD_ID, dtype=torch.long)
            for i, s in enumerate(seqs):
                y_in[i, 0] = BOS_ID
                y_in[i, 1 : len(s) + 1] = torch.tensor(s, dtype=torch.long)
                y_out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
                y_out[i, len(s)] = EOS_ID
            out, _ = model.gru(model.embedding(y_in))
            logits = model.out(out)
            loss = F.cross_entropy(
                logits.reshape(-1, logits.shape[-1]), y_out.reshape(-1), ignore_index=PAD_ID
            )
            if not torch.isfinite(loss):
                raise TrainingDiverged("language-model loss became non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            n_tok = int((y_out != PAD_ID).sum())
            total += float(loss.detach()) * n_tok
            count += n_tok
        model.nll_history.append(total / count)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} nll {total / count:.4f}")
    model.eval()
    return model


def lm_score(model, y: Sequence[str]) -> float:
    """Length-normalized sentence log-probability (negative log perplexity);
    the EOS step counts in both the sum and the normalizer.

    Accepts a LanguageModel or a MetricBundle.
    """
    if isinstance(model, MetricBundle):
        model = model.lm_model
    if not y:
        raise EmptySentence("language-model score needs a non-empty sentence")
    ids = model.vocab.encode(y)[: model.config.max_len]
    steps = model.logprobs(ids)
    return float(np.sum(steps) / len(steps))


# ---------------------------------------------------------------------------
# Metric bundle and system evaluation
# ---------------------------------------------------------------------------


@dataclass
class MetricBundle:
    coh1_model: Seq2SeqModel
    coh2_model: PairDiscriminator
    scl_model: SentimentModel
    lm_model: LanguageModel
    checkpoint_ids: dict = field(default_factory=dict)


def coh1(bundle: MetricBundle, x: Sequence[str], y: Sequence[str]) -> float:
    return reward_r1(bundle.coh1_model, x, y)


def coh2(bundle: MetricBundle, x: Sequence[str], y: Sequence[str]) -> float:
    return reward_r2(bundle.coh2_model, x, y)


def scl(bundle: MetricBundle, y: Sequence[str]) -> float:
    if not y:
        raise EmptySentence("sentiment metric needs a non-empty sentence")
    return sc_score(bundle.scl_model, y)


@dataclass
class MetricReport:
    system: str
    coh1: float
    coh2: float
    scl: float
    lm: float
    n: int
    failures: int
    per_item: list = field(default_factory=list)

    def as_dict(self, include_items: bool = False) -> dict:
        d = {
            "system": self.system,
            "coh1": self.coh1,
            "coh2": self.coh2,
            "scl": self.scl,
            "lm": self.lm,
            "n": self.n,
            "failures": self.failures,
        }
        if include_items:
            d["per_item"] = self.per_item
        return d


Responder = Callable[[list[str]], list[str]]


def evaluate_system(
    responder: Responder,
    test_pairs: Sequence[DialoguePair],
    bundle: MetricBundle,
    system: str = "system",
) -> MetricReport:
    """Generate a reply per test input and average the four metrics.

    Items where the responder raises or returns an empty reply are recorded
    and excluded from the averages.
    """
    per_item = []
    failures = 0
    for i, pair in enumerate(test_pairs):
        try:
            y = responder(list(pair.x))
            if not y:
                raise EmptySentence("responder produced an empty reply")
            per_item.append(
                {
                    "item": i,
                    "input": " ".join(pair.x),
                    "response": " ".join(y),
                    "coh1": coh1(bundle, pair.x, y),
                    "coh2": coh2(bundle, pair.x, y),
                    "scl": scl(bundle, y),
                    "lm": lm_score(bundle, y),
                }
            )
        except Exception as exc:  # per-item isolation, not a run abort
            failures += 1
            per_item.append({"item": i, "input": " ".join(pair.x), "error": str(exc)})
    scored = [row for row in per_item if "error" not in row]
    if not scored:
        raise EmptySentence(f"system {system!r} produced no scorable responses")
    return MetricReport(
        system=system,
        coh1=sum(r["coh1"] for r in scored) / len(scored),
        coh2=sum(r["coh2"] for r in scored) / len(scored),
        scl=sum(r["scl"] for r in scored) / len(scored),
        lm=sum(r["lm"] for r in scored) / len(scored),
        n=len(scored),
        failures=failures,
        per_item=per_item,
    )


METRIC_COLUMNS = ("coh1", "coh2", "scl", "lm")


def render_comparison(reports: Sequence[MetricReport]) -> str:
    """Aligned text table; every metric column carries a larger-is-better rank."""
    ranks: dict[str, dict[str, int]] = {m: {} for m in METRIC_COLUMNS}
    for m in METRIC_COLUMNS:
        ordered = sorted(reports, key=lambda r: -getattr(r, m))
        for pos, rep in enumerate(ordered, start=1):
            ranks[m][rep.system] = pos
    header = f"{'system':<16}" + "".join(f"{m.upper():>14}" for m in METRIC_COLUMNS) + f"{'n':>8}"
    lines = [header, "-" * len(header)]
    for rep in reports:
        cells = "".join(
            f"{getattr(rep, m):>10.4f} ({ranks[m][rep.system]})" for m in METRIC_COLUMNS
        )
        lines.append(f"{rep.system:<16}" + cells + f"{rep.n:>8}")
    return "\n".join(lines) + "\n"


def write_reports(
    reports: Sequence[MetricReport],
    json_path: str | Path | None = None,
    csv_path: str | Path | None = None,
    items_path: str | Path | None = None,
) -> None:
    if json_path is not None:
        Path(json_path).write_text(
            json.dumps([r.as_dict() for r in reports], indent=2) + "\n"
        )
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", *METRIC_COLUMNS, "n", "failures"])
            for r in reports:
                writer.writerow([r.system, r.coh1, r.coh2, r.scl, r.lm, r.n, r.failures])
    if items_path is not None:
        with open(items_path, "w") as fh:
            for r in reports:
                for row in r.per_item:
                    fh.write(json.dumps({"system": r.system, **row}) + "\n")


# ---------------------------------------------------------------------------
# Human evaluation export / import
# ---------------------------------------------------------------------------

HUMAN_EVAL_QUESTIONS = ("q_coherence", "q_sentiment", "q_grammar")


def export_human_eval(
    system_responses: dict[str, Sequence[tuple[str, str]]],
    path: str | Path,
    seed: int,
) -> Path:
    """Write a shuffled, system-blinded annotation CSV plus a key file.

    Rows carry empty 0-5 score cells for coherence / sentiment / grammar; the
    key file (``<path>.key.csv``) maps item ids back to systems.
    """
    if not system_responses:
        raise ValueError("need at least one system's responses")
    rows = []
    for system in sorted(system_responses):
        for inp, resp in system_responses[system]:
            rows.append({"system": system, "input": inp, "response": resp})
    random.Random(seed).shuffle(rows)
    path = Path(path)
    key_path = path.with_suffix(path.suffix + ".key.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "input", "response", *HUMAN_EVAL_QUESTIONS])
        for i, row in enumerate(rows):
            writer.writerow([i, row["input"], row["response"], "", "", ""])
    with open(key_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "system"])
        for i, row in enumerate(rows):
            writer.writerow([i, row["system"]])
    return key_path


def import_human_eval(path: str | Path, key_path: str | Path) -> dict[str, dict[str, float]]:
    """Read filled 0-5 scores, normalize to [0, 1], average per system."""
    key = {}
    with open(key_path, newline="") as fh:
        for row in csv.DictReader(fh):
            key[row["item_id"]] = row["system"]
    sums: dict[str, dict[str, float]] = {}
    counts: dict[str, int] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            system = key[row["item_id"]]
            sums.setdefault(system, {q: 0.0 for q in HUMAN_EVAL_QUESTIONS})
            counts[system] = counts.get(system, 0) + 1
            for q in HUMAN_EVAL_QUESTIONS:
                value = float(row[q])
                if not 0 <= value <= 5:
                    raise ValueError(f"score {value} outside 0-5 for item {row['item_id']}")
                sums[system][q] += value / 5.0
    return {
        system: {q: sums[system][q] / counts[system] for q in HUMAN_EVAL_QUESTIONS}
        for system in sums
    }

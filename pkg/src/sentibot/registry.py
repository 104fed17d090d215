"""Model registry backing the chat service: immutable loaded snapshots keyed
by model id, swapped atomically so concurrent readers always see exactly one
version.

Each registered kind wraps its checkpoints in a responder with a uniform
``respond(tokens, sentiment)`` call; kinds that cannot use the sentiment knob
say so in their metadata instead of failing.
"""

import dataclasses
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import checkpoint as ckpt
from .corpus import tokenize
from .cyclegan import transfer
from .errors import CheckpointError, UnknownModel
from .persona import respond as persona_respond
from .plugplay import LatentOptConfig, transform_response
from .seq2seq import decode_greedy

SENTIMENT_INPUT = "input"      # persona: score channel
SENTIMENT_TARGET = "target"    # latent editing: optimization target
SENTIMENT_FIXED = "fixed by training"


class BaselineResponder:
    kind = "baseline"
    sentiment_control = SENTIMENT_FIXED

    def __init__(self, model):
        self.model = model

    def respond(self, tokens: Sequence[str], sentiment: Optional[float] = None) -> list[str]:
        return decode_greedy(self.model, tokens)


class RLResponder(BaselineResponder):
    kind = "rl"


class PersonaResponder:
    kind = "persona"
    sentiment_control = SENTIMENT_INPUT

    def __init__(self, model, default_sentiment: float = 1.0):
        self.model = model
        self.default_sentiment = default_sentiment

    def respond(self, tokens: Sequence[str], sentiment: Optional[float] = None) -> list[str]:
        value = self.default_sentiment if sentiment is None else sentiment
        return persona_respond(self.model, tokens, value)


class PlugPlayResponder:
    kind = "plugplay"
    sentiment_control = SENTIMENT_TARGET

    def __init__(self, seq2seq, vrae, classifier, opt_config: LatentOptConfig,
                 trace_path: str | None = None):
        self.seq2seq = seq2seq
        self.vrae = vrae
        self.classifier = classifier
        self.opt_config = opt_config
        self.trace_path = trace_path

    def respond(self, tokens: Sequence[str], sentiment: Optional[float] = None) -> list[str]:
        # sentiment >= 0.5 climbs toward that score; below 0.5 descends until
        # the score drops to it (1 - target in descent convention)
        cfg = self.opt_config
        if sentiment is not None:
            if sentiment >= 0.5:
                cfg = dataclasses.replace(cfg, target_score=sentiment, direction=1)
            else:
                cfg = dataclasses.replace(cfg, target_score=1.0 - sentiment, direction=-1)
        return transform_response(self.seq2seq, self.vrae, self.classifier, tokens, cfg,
                                  trace_path=self.trace_path)


class CycleGanResponder:
    kind = "cyclegan"
    sentiment_control = SENTIMENT_FIXED

    def __init__(self, seq2seq, gan):
        self.seq2seq = seq2seq
        self.gan = gan

    def respond(self, tokens: Sequence[str], sentiment: Optional[float] = None) -> list[str]:
        y = decode_greedy(self.seq2seq, tokens)
        if not y:
            return y
        return transfer(self.gan.G, self.gan.table, y)


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    kind: str
    responder: object
    metadata: dict = field(default_factory=dict)


class ModelRegistry:
    """Atomic-swap map of model id to loaded entry."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, ModelEntry] = {}

    def snapshot(self) -> dict[str, ModelEntry]:
        with self._lock:
            return dict(self._entries)

    def register(self, entry: ModelEntry) -> None:
        with self._lock:
            entries = dict(self._entries)
            entries[entry.model_id] = entry
            self._entries = entries

    def swap(self, entries: dict[str, ModelEntry]) -> None:
        with self._lock:
            self._entries = dict(entries)

    def get(self, model_id: str) -> ModelEntry:
        entry = self.snapshot().get(model_id)
        if entry is None:
            raise UnknownModel(f"no model registered under {model_id!r}")
        return entry

    def list_models(self) -> list[dict]:
        return [
            {"model_id": e.model_id, "kind": e.kind,
             "sentiment_control": e.responder.sentiment_control, **e.metadata}
            for e in sorted(self.snapshot().values(), key=lambda e: e.model_id)
        ]


def _resolve(root: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else root / path


def load_entry(model_id: str, spec: dict, root: Path) -> ModelEntry:
    kind = spec["kind"]
    paths = spec.get("paths", {})
    metadata = dict(spec.get("metadata", {}))
    if kind == "baseline":
        responder = BaselineResponder(ckpt.load_seq2seq(_resolve(root, paths["model"])))
    elif kind == "rl":
        responder = RLResponder(ckpt.load_seq2seq(_resolve(root, paths["model"])))
    elif kind == "persona":
        responder = PersonaResponder(ckpt.load_seq2seq(_resolve(root, paths["model"])))
    elif kind == "plugplay":
        opt_spec = dict(spec.get("opt_config", {}))
        trace_path = opt_spec.pop("trace_path", None)
        opt = LatentOptConfig(**opt_spec)
        responder = PlugPlayResponder(
            ckpt.load_seq2seq(_resolve(root, paths["seq2seq"])),
            ckpt.load_vrae(_resolve(root, paths["vrae"])),
            ckpt.load_classifier(_resolve(root, paths["classifier"])),
            opt,
            trace_path=trace_path,
        )
    elif kind == "cyclegan":
        responder = CycleGanResponder(
            ckpt.load_seq2seq(_resolve(root, paths["seq2seq"])),
            ckpt.load_cyclegan(_resolve(root, paths["gan"])),
        )
    else:
        raise CheckpointError(f"unknown model kind {kind!r}")
    if responder.sentiment_control == SENTIMENT_FIXED:
        metadata.setdefault("sentiment", SENTIMENT_FIXED)
    return ModelEntry(model_id=model_id, kind=kind, responder=responder, metadata=metadata)


def load_registry(path: str | Path) -> ModelRegistry:
    """Read a registry manifest {models: {id: {kind, paths, ...}}}."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no registry manifest at {path}")
    manifest = json.loads(path.read_text())
    registry = ModelRegistry()
    entries = {}
    for model_id, spec in manifest.get("models", {}).items():
        entries[model_id] = load_entry(model_id, spec, path.parent)
    registry.swap(entries)
    return registry


def tokenize_message(message: str, segmentation: str) -> list[str]:
    return tokenize(message, segmentation)

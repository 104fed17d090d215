"""Checkpoint layout shared by all model kinds: a directory holding
``config.json`` (kind, hyper-parameters, provenance, content hash),
``vocab.json``, and ``params.npz`` with named parameter arrays.

Checkpoint ids are content hashes, so retraining with the same data, config,
and seed writes a byte-identical checkpoint with the same id.
"""

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .classifier import ClassifierConfig, SentimentModel
from .corpus import Vocabulary
from .cyclegan import CycleConfig, CycleGanModel, Critic, Translator
from .embedding import EmbeddingTable
from .errors import CheckpointError
from .metrics import LanguageModel, LMConfig, MetricBundle
from .persona import PersonaModel
from .plugplay import VRAE, AnnealSchedule, VRAEConfig
from .rl import PairDiscriminator
from .seq2seq import Seq2SeqConfig, Seq2SeqModel


def _state_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().numpy() for k, v in module.state_dict().items()}


def _content_hash(arrays: dict[str, np.ndarray], config: dict) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(config, sort_keys=True).encode())
    for name in sorted(arrays):
        digest.update(name.encode())
        digest.update(arrays[name].tobytes())
    return digest.hexdigest()[:16]


def _save_module(
    directory: Path,
    module: torch.nn.Module,
    kind: str,
    config: dict,
    vocab: Vocabulary | None,
    provenance: dict | None = None,
) -> str:
    directory.mkdir(parents=True, exist_ok=True)
    arrays = _state_arrays(module)
    checkpoint_id = _content_hash(arrays, config)
    meta = {
        "kind": kind,
        "config": config,
        "checkpoint_id": checkpoint_id,
        "provenance": provenance or {},
    }
    (directory / "config.json").write_text(json.dumps(meta, indent=2))
    if vocab is not None:
        vocab.save(directory / "vocab.json")
    np.savez(directory / "params.npz", **arrays)
    return checkpoint_id


def _load_meta(directory: Path) -> dict:
    path = directory / "config.json"
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {directory}")
    return json.loads(path.read_text())


def _load_params(directory: Path, module: torch.nn.Module) -> None:
    with np.load(directory / "params.npz") as arrays:
        state = {k: torch.tensor(arrays[k]) for k in arrays.files}
    module.load_state_dict(state)
    module.eval()


def checkpoint_id(directory: str | Path) -> str:
    return _load_meta(Path(directory))["checkpoint_id"]


# --- seq2seq (baseline / coherence / rl policy / persona) -------------------


def save_seq2seq(directory: str | Path, model: Seq2SeqModel, provenance: dict | None = None) -> str:
    kind = "persona" if isinstance(model, PersonaModel) else "seq2seq"
    config = dataclasses.asdict(model.config)
    if kind == "persona":
        config["extra_input_channels"] = 0  # PersonaModel re-adds its channel
    return _save_module(Path(directory), model, kind, config, model.vocab, provenance)


def load_seq2seq(directory: str | Path) -> Seq2SeqModel:
    directory = Path(directory)
    meta = _load_meta(directory)
    if meta["kind"] not in ("seq2seq", "persona"):
        raise CheckpointError(f"{directory} holds a {meta['kind']} checkpoint, not a seq2seq")
    vocab = Vocabulary.load(directory / "vocab.json")
    config = Seq2SeqConfig(**meta["config"])
    if meta["kind"] == "persona":
        model = PersonaModel(vocab, config)
    else:
        model = Seq2SeqModel(vocab, config)
    _load_params(directory, model)
    return model


# --- classifier --------------------------------------------------------------


def save_classifier(directory: str | Path, model: SentimentModel, provenance: dict | None = None) -> str:
    return _save_module(
        Path(directory), model, "classifier", dataclasses.asdict(model.config), model.vocab, provenance
    )


def load_classifier(directory: str | Path) -> SentimentModel:
    directory = Path(directory)
    meta = _load_meta(directory)
    if meta["kind"] != "classifier":
        raise CheckpointError(f"{directory} holds a {meta['kind']} checkpoint, not a classifier")
    vocab = Vocabulary.load(directory / "vocab.json")
    model = SentimentModel(vocab, ClassifierConfig(**meta["config"]))
    _load_params(directory, model)
    return model


# --- pair discriminator -------------------------------------------------------


def save_discriminator(directory: str | Path, model: PairDiscriminator, provenance: dict | None = None) -> str:
    config = {
        "unit_size": model.unit_size,
        "emb_dim": model.emb_dim,
        "max_len": model.max_len,
        "heldout_accuracy": model.heldout_accuracy,
    }
    return _save_module(Path(directory), model, "discriminator", config, model.vocab, provenance)


def load_discriminator(directory: str | Path) -> PairDiscriminator:
    directory = Path(directory)
    meta = _load_meta(directory)
    if meta["kind"] != "discriminator":
        raise CheckpointError(f"{directory} holds a {meta['kind']} checkpoint, not a discriminator")
    vocab = Vocabulary.load(directory / "vocab.json")
    cfg = meta["config"]
    model = PairDiscriminator(vocab, cfg["unit_size"], cfg["emb_dim"], cfg["max_len"])
    model.heldout_accuracy = cfg.get("heldout_accuracy")
    _load_params(directory, model)
    return model


# --- VRAE ---------------------------------------------------------------------


def save_vrae(directory: str | Path, model: VRAE, provenance: dict | None = None) -> str:
    return _save_module(
        Path(directory), model, "vrae", dataclasses.asdict(model.config), model.vocab, provenance
    )


def load_vrae(directory: str | Path) -> VRAE:
    directory = Path(directory)
    meta = _load_meta(directory)
    if meta["kind"] != "vrae":
        raise CheckpointError(f"{directory} holds a {meta['kind']} checkpoint, not a VRAE")
    vocab = Vocabulary.load(directory / "vocab.json")
    cfg = dict(meta["config"])
    cfg["anneal"] = AnnealSchedule(**cfg["anneal"])
    model = VRAE(vocab, VRAEConfig(**cfg))
    _load_params(directory, model)
    return model


# --- language model -------------------------------------------------------------


def save_lm(directory: str | Path, model: LanguageModel, provenance: dict | None = None) -> str:
    return _save_module(
        Path(directory), model, "lm", dataclasses.asdict(model.config), model.vocab, provenance
    )


def load_lm(directory: str | Path) -> LanguageModel:
    directory = Path(directory)
    meta = _load_meta(directory)
    if meta["kind"] != "lm":
        raise CheckpointError(f"{directory} holds a {meta['kind']} checkpoint, not a language model")
    vocab = Vocabulary.load(directory / "vocab.json")
    model = LanguageModel(vocab, LMConfig(**meta["config"]))
    _load_params(directory, model)
    return model


# --- CycleGAN bundle --------------------------------------------------------------


def save_cyclegan(directory: str | Path, model: CycleGanModel, provenance: dict | None = None) -> str:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model.table.save(directory / "table")
    config = dataclasses.asdict(model.config)
    parts = {}
    for name, module in (("F", model.F), ("G", model.G), ("dP", model.dP), ("dN", model.dN)):
        arrays = _state_arrays(module)
        np.savez(directory / f"{name}.npz", **arrays)
        parts[name] = _content_hash(arrays, config)
    checkpoint = {
        "kind": "cyclegan",
        "config": config,
        "checkpoint_id": _content_hash(
            {}, {"parts": parts, "config": config}
        ),
        "provenance": provenance or {},
    }
    (directory / "config.json").write_text(json.dumps(checkpoint, indent=2))
    return checkpoint["checkpoint_id"]


def load_cyclegan(directory: str | Path) -> CycleGanModel:
    directory = Path(directory)
    meta = _load_meta(directory)
    if meta["kind"] != "cyclegan":
        raise CheckpointError(f"{directory} holds a {meta['kind']} checkpoint, not a cyclegan")
    table = EmbeddingTable.load(directory / "table")
    cfg = CycleConfig(**meta["config"])
    model = CycleGanModel(
        F=Translator(table.dim, cfg.unit_size),
        G=Translator(table.dim, cfg.unit_size),
        dP=Critic(table.dim, cfg.unit_size),
        dN=Critic(table.dim, cfg.unit_size),
        table=table,
        config=cfg,
    )
    for name, module in (("F", model.F), ("G", model.G), ("dP", model.dP), ("dN", model.dN)):
        with np.load(directory / f"{name}.npz") as arrays:
            module.load_state_dict({k: torch.tensor(arrays[k]) for k in arrays.files})
        module.eval()
    return model


# --- metric bundle -----------------------------------------------------------------


def save_bundle_manifest(directory: str | Path, paths: dict[str, str]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "bundle.json").write_text(json.dumps(paths, indent=2))


def load_bundle(directory: str | Path) -> MetricBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "bundle.json").read_text())
    root = directory
    paths = {k: (root / v if not Path(v).is_absolute() else Path(v)) for k, v in manifest.items()}
    return MetricBundle(
        coh1_model=load_seq2seq(paths["coh1"]),
        coh2_model=load_discriminator(paths["coh2"]),
        scl_model=load_classifier(paths["scl"]),
        lm_model=load_lm(paths["lm"]),
        checkpoint_ids={k: checkpoint_id(p) for k, p in paths.items()},
    )

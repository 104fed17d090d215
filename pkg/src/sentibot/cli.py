"""Command-line entry point: data preparation, every training stage, metric
evaluation, sentence transfer, a terminal chat loop, human-eval export, and
the HTTP service.

Every subcommand reads one YAML config (``--config``) merged over built-in
defaults, with ``--set section.key=value`` flag overrides.  Training commands
are idempotent: re-running with the same data, config, and seed rewrites the
same checkpoint bytes.
"""

import argparse
import copy
import json
import sys
from pathlib import Path

import yaml

from . import checkpoint as ckpt
from . import corpus as corpus_mod
from .classifier import ClassifierConfig, evaluate_classifier, relabel_filter, train_classifier
from .corpus import (
    DialoguePair,
    LabeledSentence,
    Vocabulary,
    build_vocabulary,
    generate_toy_corpus,
    load_dialogue_corpus,
    load_sentiment_corpus,
    split_corpus,
    write_dialogue_corpus,
    write_sentiment_corpus,
)
from .cyclegan import CycleConfig, train_cyclegan
from .embedding import EmbeddingTable, train_skipgram
from .errors import SentibotError, WorkdirBusy
from .metrics import (
    LMConfig,
    evaluate_system,
    export_human_eval,
    render_comparison,
    train_lm,
    write_reports,
)
from .persona import train_persona
from .plugplay import AnnealSchedule, VRAEConfig, train_vrae
from .rl import (
    DiscriminatorConfig,
    PolicyConfig,
    RewardModels,
    RewardWeights,
    train_pair_discriminator,
    train_policy,
)
from .seeding import pin_threads
from .seq2seq import Seq2SeqConfig, train_mle

DEFAULTS = {
    "data": {
        "workdir": "runs/toy",
        "segmentation": "word",
        "max_vocab": 50000,
        "dialogue_test_size": 50,
        "sentiment_test_size": 50,
        "split_seed": 7,
    },
    "toy": {"seed": 0, "n_pairs": 600, "n_labeled": 400},
    "embedding": {"dim": 300, "window": 5, "negative": 5, "epochs": 5, "lr": 0.05, "seed": 11},
    "classifier": {
        "architecture": "gru-last", "unit_size": 256, "emb_dim": 300, "batch_size": 32,
        "epochs": 10, "learning_rate": 1e-3, "max_len": 40, "seed": 12,
    },
    "refine": {"enabled": False, "margin": 0.4, "seed": 25},
    "baseline": {
        "unit_size": 256, "layers": 1, "emb_dim": 300, "batch_size": 64, "max_len": 15,
        "learning_rate": 1e-3, "epochs": 20, "seed": 13,
    },
    "persona": {
        "unit_size": 256, "layers": 1, "emb_dim": 300, "batch_size": 64, "max_len": 15,
        "learning_rate": 1e-3, "epochs": 20, "seed": 14,
    },
    "coherence": {
        "unit_size": 256, "layers": 1, "emb_dim": 300, "batch_size": 64, "max_len": 15,
        "learning_rate": 1e-3, "epochs": 20, "seed": 15,
    },
    "discriminator": {
        "unit_size": 256, "emb_dim": 300, "batch_size": 64, "epochs": 10,
        "learning_rate": 1e-3, "max_len": 15, "seed": 16,
    },
    "rl": {
        "alpha": 0.3, "beta": 0.3, "iterations": 200, "batch_size": 64,
        "learning_rate": 1e-3, "temperature": 1.0, "baseline_decay": 0.9, "seed": 17,
    },
    "vrae": {
        "unit_size": 500, "latent_dim": 500, "bidirectional": True, "emb_dim": 300,
        "batch_size": 48, "epochs": 20, "learning_rate": 1e-3, "max_len": 15,
        "word_dropout_p": 0.3, "anneal_warmup": 1000, "annealing": True, "seed": 18,
    },
    "plugplay": {
        "gamma": 400.0, "delta": 25.0, "step_size": 0.01, "max_steps": 200,
        "target_score": 0.8, "softargmax_temperature": 0.1,
    },
    "cyclegan": {
        "unit_size": 256, "gen_steps": 1, "disc_steps": 1, "gp_coefficient": 10.0,
        "identity_loss": False, "iterations": 2000, "batch_size": 32,
        "learning_rate": 1e-4, "margin": 0.4, "seed": 19,
    },
    "metrics": {
        "coh1_seed": 21, "coh2_seed": 22, "scl_seed": 23, "lm_seed": 24,
        "lm_unit_size": 256, "lm_layers": 2, "lm_epochs": 10,
    },
    "evaluate": {"persona_score": 1.0, "systems": "baseline,persona,rl,plugplay,cyclegan"},
    "human_eval": {"n_inputs": 10, "seed": 97},
    "serve": {"host": "127.0.0.1", "port": 8321},
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        cfg = _deep_merge(cfg, loaded)
    for item in overrides:
        if "=" not in item:
            raise SentibotError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        target = cfg
        for key in keys[:-1]:
            target = target.setdefault(key, {})
        target[keys[-1]] = yaml.safe_load(raw)
    return cfg


# ---------------------------------------------------------------------------
# Workdir layout helpers
# ---------------------------------------------------------------------------


def _wd(cfg) -> Path:
    return Path(cfg["data"]["workdir"])


REGISTRY_ROOT_ENV = "SENTIBOT_REGISTRY_ROOT"


def _registry_root(cfg) -> Path:
    """Service checkpoint root: the env var wins over the config workdir."""
    import os

    override = os.environ.get(REGISTRY_ROOT_ENV)
    return Path(override) if override else _wd(cfg)


def _serve_lock(cfg) -> Path:
    return _registry_root(cfg) / ".serving"


def _refuse_if_served(cfg) -> None:
    """Training must not overwrite checkpoints a live service is reading."""
    lock = _serve_lock(cfg)
    if lock.exists():
        raise WorkdirBusy(
            f"workdir is being served (pid {lock.read_text().strip()}); stop it first"
        )


def _corpus_dir(cfg) -> Path:
    return _wd(cfg) / "corpus"


def _load_vocab(cfg) -> Vocabulary:
    return Vocabulary.load(_corpus_dir(cfg) / "vocab.json")


def _load_split_dialogues(cfg) -> tuple[list[DialoguePair], list[DialoguePair]]:
    mode = cfg["data"]["segmentation"]
    d = _corpus_dir(cfg)
    return (
        load_dialogue_corpus(d / "dialogues.train.jsonl", mode),
        load_dialogue_corpus(d / "dialogues.test.jsonl", mode),
    )


def _load_split_sentiment(cfg) -> tuple[list[LabeledSentence], list[LabeledSentence]]:
    mode = cfg["data"]["segmentation"]
    d = _corpus_dir(cfg)
    return (
        load_sentiment_corpus(d / "sentiment.train.jsonl", mode),
        load_sentiment_corpus(d / "sentiment.test.jsonl", mode),
    )


def _update_manifest(cfg, side: str, name: str, checkpoint_id: str) -> None:
    path = _wd(cfg) / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {"training": {}, "metrics": {}}
    manifest[side][name] = checkpoint_id
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_registry(cfg) -> None:
    """Record every trained responder currently present in the workdir."""
    wd = _wd(cfg)
    models = {}
    if (wd / "baseline" / "config.json").exists():
        models["baseline"] = {"kind": "baseline", "paths": {"model": "baseline"}}
    if (wd / "persona" / "config.json").exists():
        models["persona"] = {"kind": "persona", "paths": {"model": "persona"}}
    if (wd / "rl" / "config.json").exists():
        models["rl"] = {"kind": "rl", "paths": {"model": "rl"}}
    if (wd / "vrae" / "config.json").exists() and (wd / "baseline" / "config.json").exists():
        models["plugplay"] = {
            "kind": "plugplay",
            "paths": {"seq2seq": "baseline", "vrae": "vrae", "classifier": "classifier"},
            "opt_config": dict(cfg["plugplay"]),
        }
    if (wd / "cyclegan" / "config.json").exists() and (wd / "baseline" / "config.json").exists():
        models["cyclegan"] = {
            "kind": "cyclegan",
            "paths": {"seq2seq": "baseline", "gan": "cyclegan"},
        }
    (wd / "registry.json").write_text(json.dumps({"models": models}, indent=2, sort_keys=True))


def _seq2seq_config(section: dict) -> Seq2SeqConfig:
    return Seq2SeqConfig(
        unit_size=section["unit_size"],
        layers=section["layers"],
        emb_dim=section["emb_dim"],
        batch_size=section["batch_size"],
        max_len=section["max_len"],
        learning_rate=section["learning_rate"],
        epochs=section["epochs"],
        seed=section["seed"],
        lr_decay_every=section.get("lr_decay_every", 0),
        lr_decay_rate=section.get("lr_decay_rate", 1.0),
        optimizer=section.get("optimizer", "adam"),
    )


def _log(message: str) -> None:
    print(message, flush=True)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_toy(cfg, args) -> int:
    pairs, labeled = generate_toy_corpus(
        cfg["toy"]["seed"], cfg["toy"]["n_pairs"], cfg["toy"]["n_labeled"]
    )
    d = _corpus_dir(cfg)
    d.mkdir(parents=True, exist_ok=True)
    write_dialogue_corpus(d / "dialogues.jsonl", pairs)
    write_sentiment_corpus(d / "sentiment.jsonl", labeled)
    _log(f"wrote {len(pairs)} dialogue pairs and {len(labeled)} labeled sentences to {d}")
    return cmd_prepare_data(cfg, args)


def cmd_prepare_data(cfg, args) -> int:
    """Split raw corpora and build the shared vocabulary from the train sides."""
    data = cfg["data"]
    d = _corpus_dir(cfg)
    dialogue_path = getattr(args, "dialogues", None) or d / "dialogues.jsonl"
    sentiment_path = getattr(args, "sentiment", None) or d / "sentiment.jsonl"
    pairs = load_dialogue_corpus(dialogue_path, data["segmentation"])
    labeled = load_sentiment_corpus(sentiment_path, data["segmentation"])
    d.mkdir(parents=True, exist_ok=True)
    pair_split = split_corpus(pairs, data["dialogue_test_size"], data["split_seed"])
    sent_split = split_corpus(labeled, data["sentiment_test_size"], data["split_seed"])
    write_dialogue_corpus(d / "dialogues.train.jsonl", pair_split.train)
    write_dialogue_corpus(d / "dialogues.test.jsonl", pair_split.test)
    write_sentiment_corpus(d / "sentiment.train.jsonl", sent_split.train)
    write_sentiment_corpus(d / "sentiment.test.jsonl", sent_split.test)
    sentences = (
        [p.x for p in pair_split.train]
        + [p.y for p in pair_split.train]
        + [s.text for s in sent_split.train]
    )
    vocab = build_vocabulary(sentences, data["max_vocab"], data["segmentation"])
    vocab.save(d / "vocab.json")
    _log(
        f"split: {len(pair_split.train)}/{len(pair_split.test)} dialogues, "
        f"{len(sent_split.train)}/{len(sent_split.test)} labeled; vocab {len(vocab)}"
    )
    return 0


def cmd_train_embeddings(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    train_sents, _ = _load_split_sentiment(cfg)
    sentences = [p.x for p in train_pairs] + [p.y for p in train_pairs] + [
        s.text for s in train_sents
    ]
    e = cfg["embedding"]
    table = train_skipgram(
        sentences, vocab, dim=e["dim"], window=e["window"], negative_samples=e["negative"],
        epochs=e["epochs"], seed=e["seed"], lr=e["lr"],
    )
    table.save(_wd(cfg) / "embeddings")
    _log(f"trained {len(vocab)}x{e['dim']} embedding table")
    return 0


def cmd_train_classifier(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_set, test_set = _load_split_sentiment(cfg)
    c = cfg["classifier"]
    config = ClassifierConfig(
        architecture=c["architecture"], segmentation=cfg["data"]["segmentation"],
        unit_size=c["unit_size"], emb_dim=c["emb_dim"], batch_size=c["batch_size"],
        epochs=c["epochs"], learning_rate=c["learning_rate"], max_len=c["max_len"],
        seed=c["seed"],
    )
    model = train_classifier(train_set, vocab, config, log=_log)
    report = evaluate_classifier(model, test_set)
    cid = ckpt.save_classifier(_wd(cfg) / "classifier", model)
    (_wd(cfg) / "classifier" / "eval.json").write_text(json.dumps(report, indent=2))
    _update_manifest(cfg, "training", "classifier", cid)
    _log(f"classifier accuracy {report['accuracy']:.3f} auc {report.get('auc')}")

    if cfg["refine"]["enabled"]:
        refined = relabel_filter(train_set, model, cfg["refine"]["margin"])
        config2 = ClassifierConfig(**{**config.__dict__, "seed": cfg["refine"]["seed"]})
        model2 = train_classifier(refined, vocab, config2, log=_log)
        report2 = evaluate_classifier(model2, test_set)
        cid2 = ckpt.save_classifier(_wd(cfg) / "classifier_refined", model2)
        (_wd(cfg) / "classifier_refined" / "eval.json").write_text(json.dumps(report2, indent=2))
        _update_manifest(cfg, "training", "classifier_refined", cid2)
        _log(
            f"refined on {len(refined)}/{len(train_set)} kept: "
            f"accuracy {report2['accuracy']:.3f} auc {report2.get('auc')}"
        )
    _write_registry(cfg)
    return 0


def cmd_train_baseline(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    model = train_mle(train_pairs, vocab, _seq2seq_config(cfg["baseline"]), log=_log)
    cid = ckpt.save_seq2seq(_wd(cfg) / "baseline", model)
    _update_manifest(cfg, "training", "baseline", cid)
    _write_registry(cfg)
    return 0


def cmd_train_persona(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    sc_model = ckpt.load_classifier(_wd(cfg) / "classifier")
    model = train_persona(train_pairs, sc_model, vocab, _seq2seq_config(cfg["persona"]), log=_log)
    cid = ckpt.save_seq2seq(
        _wd(cfg) / "persona", model,
        provenance={"classifier": ckpt.checkpoint_id(_wd(cfg) / "classifier")},
    )
    _update_manifest(cfg, "training", "persona", cid)
    _write_registry(cfg)
    return 0


def cmd_train_discriminator(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    d = cfg["discriminator"]
    config = DiscriminatorConfig(
        unit_size=d["unit_size"], emb_dim=d["emb_dim"], batch_size=d["batch_size"],
        epochs=d["epochs"], learning_rate=d["learning_rate"], max_len=d["max_len"],
        seed=d["seed"],
    )
    model = train_pair_discriminator(train_pairs, vocab, config, log=_log)
    cid = ckpt.save_discriminator(_wd(cfg) / "discriminator", model)
    _update_manifest(cfg, "training", "discriminator", cid)
    return 0


def cmd_train_rl(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    pretrained = ckpt.load_seq2seq(_wd(cfg) / "baseline")

    coherence = None
    coh_dir = _wd(cfg) / "coherence"
    if not (coh_dir / "config.json").exists():
        coh_model = train_mle(train_pairs, vocab, _seq2seq_config(cfg["coherence"]), log=_log)
        cid = ckpt.save_seq2seq(coh_dir, coh_model)
        _update_manifest(cfg, "training", "coherence", cid)
    coherence = ckpt.load_seq2seq(coh_dir)
    discriminator = ckpt.load_discriminator(_wd(cfg) / "discriminator")
    sc_model = ckpt.load_classifier(_wd(cfg) / "classifier")

    r = cfg["rl"]
    weights = RewardWeights(alpha=r["alpha"], beta=r["beta"])
    policy_cfg = PolicyConfig(
        iterations=r["iterations"], batch_size=r["batch_size"],
        learning_rate=r["learning_rate"], temperature=r["temperature"],
        baseline_decay=r["baseline_decay"], seed=r["seed"],
    )
    model = train_policy(
        pretrained,
        RewardModels(coherence=coherence, discriminator=discriminator, sentiment=sc_model),
        weights,
        train_pairs,
        policy_cfg,
        log_path=_wd(cfg) / "rl_training.jsonl",
        log=_log,
    )
    cid = ckpt.save_seq2seq(
        _wd(cfg) / "rl", model,
        provenance={
            "pretrained": ckpt.checkpoint_id(_wd(cfg) / "baseline"),
            "coherence": ckpt.checkpoint_id(coh_dir),
            "discriminator": ckpt.checkpoint_id(_wd(cfg) / "discriminator"),
            "classifier": ckpt.checkpoint_id(_wd(cfg) / "classifier"),
        },
    )
    _update_manifest(cfg, "training", "rl", cid)
    _write_registry(cfg)
    return 0


def cmd_train_vrae(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    v = cfg["vrae"]
    config = VRAEConfig(
        unit_size=v["unit_size"], latent_dim=v["latent_dim"], bidirectional=v["bidirectional"],
        emb_dim=v["emb_dim"], batch_size=v["batch_size"], epochs=v["epochs"],
        learning_rate=v["learning_rate"], max_len=v["max_len"],
        word_dropout_p=v["word_dropout_p"],
        anneal=AnnealSchedule(warmup_steps=v["anneal_warmup"]),
        annealing=v["annealing"], seed=v["seed"],
    )
    model = train_vrae([p.y for p in train_pairs], vocab, config, log=_log)
    cid = ckpt.save_vrae(_wd(cfg) / "vrae", model)
    _update_manifest(cfg, "training", "vrae", cid)
    _write_registry(cfg)
    return 0


def cmd_train_cyclegan(cfg, args) -> int:
    _refuse_if_served(cfg)
    table = EmbeddingTable.load(_wd(cfg) / "embeddings")
    train_set, _ = _load_split_sentiment(cfg)
    sc_model = ckpt.load_classifier(_wd(cfg) / "classifier")
    g = cfg["cyclegan"]
    filtered = relabel_filter(train_set, sc_model, g["margin"])
    pos = [s.text for s in filtered if s.label == 1]
    neg = [s.text for s in filtered if s.label == 0]
    config = CycleConfig(
        gen_steps=g["gen_steps"], disc_steps=g["disc_steps"],
        gp_coefficient=g["gp_coefficient"], identity_loss=g["identity_loss"],
        iterations=g["iterations"], batch_size=g["batch_size"],
        learning_rate=g["learning_rate"], unit_size=g["unit_size"], seed=g["seed"],
    )
    model = train_cyclegan(
        pos, neg, table, config, log_path=_wd(cfg) / "cyclegan_training.jsonl", log=_log
    )
    cid = ckpt.save_cyclegan(
        _wd(cfg) / "cyclegan", model,
        provenance={"classifier": ckpt.checkpoint_id(_wd(cfg) / "classifier")},
    )
    _update_manifest(cfg, "training", "cyclegan", cid)
    _write_registry(cfg)
    _log(f"cyclegan trained on {len(pos)} positive / {len(neg)} negative sentences")
    return 0


def cmd_train_metrics(cfg, args) -> int:
    _refuse_if_served(cfg)
    vocab = _load_vocab(cfg)
    train_pairs, _ = _load_split_dialogues(cfg)
    train_sents, _ = _load_split_sentiment(cfg)
    m = cfg["metrics"]
    wd = _wd(cfg)

    coh1_cfg = _seq2seq_config({**cfg["coherence"], "seed": m["coh1_seed"]})
    coh1_model = train_mle(train_pairs, vocab, coh1_cfg, log=_log)
    cid1 = ckpt.save_seq2seq(wd / "metrics" / "coh1", coh1_model)

    d = cfg["discriminator"]
    coh2_cfg = DiscriminatorConfig(
        unit_size=d["unit_size"], emb_dim=d["emb_dim"], batch_size=d["batch_size"],
        epochs=d["epochs"], learning_rate=d["learning_rate"], max_len=d["max_len"],
        seed=m["coh2_seed"],
    )
    coh2_model = train_pair_discriminator(train_pairs, vocab, coh2_cfg, log=_log)
    cid2 = ckpt.save_discriminator(wd / "metrics" / "coh2", coh2_model)

    c = cfg["classifier"]
    scl_cfg = ClassifierConfig(
        architecture=c["architecture"], segmentation=cfg["data"]["segmentation"],
        unit_size=c["unit_size"], emb_dim=c["emb_dim"], batch_size=c["batch_size"],
        epochs=c["epochs"], learning_rate=c["learning_rate"], max_len=c["max_len"],
        seed=m["scl_seed"],
    )
    scl_model = train_classifier(train_sents, vocab, scl_cfg, log=_log)
    cid3 = ckpt.save_classifier(wd / "metrics" / "scl", scl_model)

    lm_cfg = LMConfig(
        unit_size=m["lm_unit_size"], layers=m["lm_layers"], emb_dim=c["emb_dim"],
        batch_size=32, epochs=m["lm_epochs"], learning_rate=1e-3,
        max_len=cfg["classifier"]["max_len"], seed=m["lm_seed"],
    )
    lm_model = train_lm(
        [p.y for p in train_pairs] + [s.text for s in train_sents], vocab, lm_cfg, log=_log
    )
    cid4 = ckpt.save_lm(wd / "metrics" / "lm", lm_model)

    ckpt.save_bundle_manifest(
        wd / "metrics", {"coh1": "coh1", "coh2": "coh2", "scl": "scl", "lm": "lm"}
    )
    for name, cid in (("coh1", cid1), ("coh2", cid2), ("scl", cid3), ("lm", cid4)):
        _update_manifest(cfg, "metrics", name, cid)
    _log("metric bundle trained")
    return 0


def _build_responders(cfg, systems: list[str]):
    from .registry import load_registry

    registry = load_registry(_wd(cfg) / "registry.json")
    persona_score = cfg["evaluate"]["persona_score"]
    responders = {}
    for name in systems:
        entry = registry.get(name)
        if name == "persona":
            responders[name] = lambda x, e=entry: e.responder.respond(x, persona_score)
        else:
            responders[name] = lambda x, e=entry: e.responder.respond(x, None)
    return responders


def cmd_evaluate(cfg, args) -> int:
    systems = [s.strip() for s in (args.systems or cfg["evaluate"]["systems"]).split(",") if s.strip()]
    bundle = ckpt.load_bundle(_wd(cfg) / "metrics")
    _, test_pairs = _load_split_dialogues(cfg)
    responders = _build_responders(cfg, systems)
    reports = [
        evaluate_system(responders[name], test_pairs, bundle, system=name) for name in systems
    ]
    table = render_comparison(reports)
    wd = _wd(cfg)
    out = Path(args.out) if args.out else wd / "report.json"
    write_reports(
        reports, json_path=out, csv_path=wd / "table.csv", items_path=wd / "items.jsonl"
    )
    (wd / "table.txt").write_text(table)
    print(table, end="")
    return 0


def cmd_transfer(cfg, args) -> int:
    gan = ckpt.load_cyclegan(_wd(cfg) / "cyclegan")
    from .cyclegan import transfer as do_transfer

    tokens = corpus_mod.tokenize(args.text, cfg["data"]["segmentation"])
    translator = gan.G if args.direction == "pos" else gan.F
    print(" ".join(do_transfer(translator, gan.table, tokens)))
    return 0


def cmd_chat(cfg, args) -> int:
    from .registry import load_registry

    registry = load_registry(_wd(cfg) / "registry.json")
    entry = registry.get(args.model_id)
    sentiment = args.sentiment
    print(f"chatting with {entry.model_id} ({entry.kind}); empty line quits", flush=True)
    for line in sys.stdin:
        message = line.strip()
        if not message:
            break
        tokens = corpus_mod.tokenize(message, cfg["data"]["segmentation"])
        reply = entry.responder.respond(tokens, sentiment)
        print(" ".join(reply), flush=True)
    return 0


def cmd_export_human_eval(cfg, args) -> int:
    systems = [s.strip() for s in (args.systems or cfg["evaluate"]["systems"]).split(",") if s.strip()]
    _, test_pairs = _load_split_dialogues(cfg)
    n = min(cfg["human_eval"]["n_inputs"], len(test_pairs))
    responders = _build_responders(cfg, systems)
    responses = {}
    for name in systems:
        rows = []
        for pair in test_pairs[:n]:
            reply = responders[name](list(pair.x))
            rows.append((" ".join(pair.x), " ".join(reply)))
        responses[name] = rows
    out = Path(args.out) if args.out else _wd(cfg) / "human_eval.csv"
    key_path = export_human_eval(responses, out, cfg["human_eval"]["seed"])
    _log(f"wrote {out} (key: {key_path})")
    return 0


def cmd_serve(cfg, args) -> int:
    import os

    import uvicorn

    from .registry import load_registry
    from .service import create_app

    root = _registry_root(cfg)
    registry = load_registry(root / "registry.json")
    bundle = ckpt.load_bundle(root / "metrics")
    app = create_app(registry, bundle, segmentation=cfg["data"]["segmentation"])
    host = args.host or cfg["serve"]["host"]
    port = args.port or cfg["serve"]["port"]
    lock = _serve_lock(cfg)
    lock.write_text(str(os.getpid()))
    try:
        uvicorn.run(app, host=host, port=port)
    finally:
        lock.unlink(missing_ok=True)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

COMMANDS = {
    "gen-toy": cmd_gen_toy,
    "prepare-data": cmd_prepare_data,
    "train-embeddings": cmd_train_embeddings,
    "train-classifier": cmd_train_classifier,
    "train-baseline": cmd_train_baseline,
    "train-persona": cmd_train_persona,
    "train-discriminator": cmd_train_discriminator,
    "train-rl": cmd_train_rl,
    "train-vrae": cmd_train_vrae,
    "train-cyclegan": cmd_train_cyclegan,
    "train-metrics": cmd_train_metrics,
    "evaluate": cmd_evaluate,
    "transfer": cmd_transfer,
    "chat": cmd_chat,
    "export-human-eval": cmd_export_human_eval,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentibot")
    parser.add_argument("--config", help="YAML config file", default=None)
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="SECTION.KEY=VALUE", help="override a config value",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "prepare-data":
            p.add_argument("--dialogues", default=None)
            p.add_argument("--sentiment", default=None)
        if name == "evaluate":
            p.add_argument("--systems", default=None)
            p.add_argument("--out", default=None)
        if name == "transfer":
            p.add_argument("--text", required=True)
            p.add_argument("--direction", choices=["pos", "neg"], default="pos")
        if name == "chat":
            p.add_argument("--model-id", required=True)
            p.add_argument("--sentiment", type=float, default=None)
        if name == "export-human-eval":
            p.add_argument("--systems", default=None)
            p.add_argument("--out", default=None)
        if name == "serve":
            p.add_argument("--host", default=None)
            p.add_argument("--port", type=int, default=None)
    return parser


def main(argv=None) -> int:
    pin_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg, args)
    except SentibotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

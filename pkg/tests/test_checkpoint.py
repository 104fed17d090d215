import numpy as np
import pytest
import torch

from sentibot import checkpoint as ckpt
from sentibot.classifier import score
from sentibot.corpus import build_vocabulary
from sentibot.cyclegan import CycleConfig, train_cyclegan, transfer
from sentibot.embedding import EmbeddingTable
from sentibot.errors import CheckpointError
from sentibot.metrics import LMConfig, lm_score, train_lm
from sentibot.persona import respond, train_persona
from sentibot.plugplay import AnnealSchedule, VRAEConfig, train_vrae
from sentibot.rl import DiscriminatorConfig, reward_r2, train_pair_discriminator
from sentibot.seq2seq import Seq2SeqConfig, decode_greedy, train_mle


def test_seq2seq_roundtrip(tmp_path, toy_corpus, toy_vocab, toy_baseline):
    pairs, _ = toy_corpus
    cid = ckpt.save_seq2seq(tmp_path / "m", toy_baseline)
    loaded = ckpt.load_seq2seq(tmp_path / "m")
    assert decode_greedy(loaded, pairs[0].x) == decode_greedy(toy_baseline, pairs[0].x)
    assert ckpt.checkpoint_id(tmp_path / "m") == cid


def test_persona_roundtrip(tmp_path, toy_corpus, toy_vocab, toy_classifier):
    pairs, _ = toy_corpus
    cfg = Seq2SeqConfig(unit_size=16, emb_dim=12, batch_size=32, max_len=10, epochs=5,
                        learning_rate=5e-3, seed=31)
    model = train_persona(pairs[:100], toy_classifier, toy_vocab, cfg)
    ckpt.save_seq2seq(tmp_path / "p", model)
    loaded = ckpt.load_seq2seq(tmp_path / "p")
    x = pairs[0].x
    assert respond(loaded, x, 1.0) == respond(model, x, 1.0)
    assert respond(loaded, x, 0.0) == respond(model, x, 0.0)


def test_kind_mismatch_raises(tmp_path, toy_corpus, toy_vocab, toy_classifier):
    ckpt.save_classifier(tmp_path / "c", toy_classifier)
    with pytest.raises(CheckpointError):
        ckpt.load_seq2seq(tmp_path / "c")


def test_classifier_roundtrip(tmp_path, toy_classifier):
    ckpt.save_classifier(tmp_path / "c", toy_classifier)
    loaded = ckpt.load_classifier(tmp_path / "c")
    y = ["so", "happy", "here"]
    assert score(loaded, y) == score(toy_classifier, y)


def test_discriminator_roundtrip(tmp_path, toy_corpus, toy_vocab):
    pairs, _ = toy_corpus
    disc = train_pair_discriminator(
        pairs[:80], toy_vocab,
        DiscriminatorConfig(unit_size=12, emb_dim=8, epochs=3, learning_rate=1e-2, seed=16),
    )
    ckpt.save_discriminator(tmp_path / "d", disc)
    loaded = ckpt.load_discriminator(tmp_path / "d")
    p = pairs[0]
    assert reward_r2(loaded, p.x, p.y) == reward_r2(disc, p.x, p.y)
    assert loaded.heldout_accuracy == disc.heldout_accuracy


def test_vrae_roundtrip(tmp_path, toy_corpus, toy_vocab):
    pairs, _ = toy_corpus
    cfg = VRAEConfig(unit_size=16, latent_dim=8, bidirectional=True, emb_dim=12,
                     epochs=3, learning_rate=3e-3, max_len=10,
                     anneal=AnnealSchedule(warmup_steps=100), seed=18)
    vrae = train_vrae([p.y for p in pairs[:80]], toy_vocab, cfg)
    ckpt.save_vrae(tmp_path / "v", vrae)
    loaded = ckpt.load_vrae(tmp_path / "v")
    h = vrae.encode_mean(pairs[0].y)
    assert torch.equal(loaded.encode_mean(pairs[0].y), h)
    assert loaded.decode_greedy(h) == vrae.decode_greedy(h)


def test_lm_roundtrip(tmp_path, toy_corpus, toy_vocab):
    pairs, _ = toy_corpus
    lm = train_lm([p.y for p in pairs[:80]], toy_vocab,
                  LMConfig(unit_size=12, layers=2, emb_dim=8, epochs=2, seed=24))
    ckpt.save_lm(tmp_path / "lm", lm)
    loaded = ckpt.load_lm(tmp_path / "lm")
    assert lm_score(loaded, pairs[0].y) == lm_score(lm, pairs[0].y)


def test_cyclegan_roundtrip(tmp_path):
    vocab = build_vocabulary([[f"t{i}" for i in range(8)]], max_size=12)
    rng = np.random.default_rng(2)
    table = EmbeddingTable(matrix=rng.normal(size=(len(vocab), 6)), vocab=vocab, dim=6)
    pos = [["t0", "t1"], ["t1", "t2"]] * 3
    neg = [["t4", "t5"], ["t5", "t6"]] * 3
    model = train_cyclegan(pos, neg, table,
                           CycleConfig(iterations=10, batch_size=4, unit_size=8,
                                       learning_rate=1e-3, seed=19))
    ckpt.save_cyclegan(tmp_path / "gan", model)
    loaded = ckpt.load_cyclegan(tmp_path / "gan")
    assert transfer(loaded.G, loaded.table, ["t4", "t5"]) == transfer(model.G, model.table, ["t4", "t5"])


class TestCheckpointIds:
    def test_same_training_same_id(self, tmp_path, toy_corpus, toy_vocab):
        pairs, _ = toy_corpus
        cfg = Seq2SeqConfig(unit_size=12, emb_dim=8, batch_size=32, max_len=10,
                            epochs=2, learning_rate=5e-3, seed=40)
        a = train_mle(pairs[:60], toy_vocab, cfg)
        b = train_mle(pairs[:60], toy_vocab, cfg)
        id_a = ckpt.save_seq2seq(tmp_path / "a", a)
        id_b = ckpt.save_seq2seq(tmp_path / "b", b)
        assert id_a == id_b
        assert (tmp_path / "a" / "params.npz").read_bytes() == (tmp_path / "b" / "params.npz").read_bytes()

    def test_different_seed_different_id(self, tmp_path, toy_corpus, toy_vocab):
        pairs, _ = toy_corpus
        base = dict(unit_size=12, emb_dim=8, batch_size=32, max_len=10, epochs=2,
                    learning_rate=5e-3)
        a = train_mle(pairs[:60], toy_vocab, Seq2SeqConfig(seed=41, **base))
        b = train_mle(pairs[:60], toy_vocab, Seq2SeqConfig(seed=42, **base))
        assert ckpt.save_seq2seq(tmp_path / "a", a) != ckpt.save_seq2seq(tmp_path / "b", b)


def test_bundle_roundtrip(tmp_path, toy_corpus, toy_vocab, toy_classifier, toy_baseline):
    pairs, _ = toy_corpus
    disc = train_pair_discriminator(
        pairs[:80], toy_vocab,
        DiscriminatorConfig(unit_size=12, emb_dim=8, epochs=3, learning_rate=1e-2, seed=22),
    )
    lm = train_lm([p.y for p in pairs[:80]], toy_vocab,
                  LMConfig(unit_size=12, layers=2, emb_dim=8, epochs=2, seed=24))
    metrics_dir = tmp_path / "metrics"
    ckpt.save_seq2seq(metrics_dir / "coh1", toy_baseline)
    ckpt.save_discriminator(metrics_dir / "coh2", disc)
    ckpt.save_classifier(metrics_dir / "scl", toy_classifier)
    ckpt.save_lm(metrics_dir / "lm", lm)
    ckpt.save_bundle_manifest(metrics_dir, {"coh1": "coh1", "coh2": "coh2", "scl": "scl", "lm": "lm"})
    bundle = ckpt.load_bundle(metrics_dir)
    assert set(bundle.checkpoint_ids) == {"coh1", "coh2", "scl", "lm"}
    assert len(set(bundle.checkpoint_ids.values())) == 4

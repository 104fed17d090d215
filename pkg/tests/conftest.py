import pytest
import torch

from sentibot.corpus import build_vocabulary, generate_toy_corpus
from sentibot.seeding import pin_threads

pin_threads()


_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::", 1)[-1]
        _acceptance_results[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    """One visible pass/fail line per acceptance criterion."""
    if not _acceptance_results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, status in _acceptance_results.items():
        terminalreporter.write_line(f"[{status}] {name}")


@pytest.fixture(scope="session")
def toy_corpus():
    """Deterministic toy data shared by the training-dependent tests."""
    pairs, labeled = generate_toy_corpus(seed=0, n_pairs=400, n_labeled=300)
    return pairs, labeled


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    pairs, labeled = toy_corpus
    sentences = [p.x for p in pairs] + [p.y for p in pairs] + [s.text for s in labeled]
    return build_vocabulary(sentences, max_size=200)


@pytest.fixture(scope="session")
def toy_classifier(toy_corpus, toy_vocab):
    from sentibot.classifier import ClassifierConfig, train_classifier

    _, labeled = toy_corpus
    config = ClassifierConfig(
        architecture="gru-last", unit_size=24, emb_dim=16, epochs=6, seed=5,
        learning_rate=5e-3,
    )
    return train_classifier(labeled, toy_vocab, config)


@pytest.fixture(scope="session")
def toy_baseline(toy_corpus, toy_vocab):
    from sentibot.seq2seq import Seq2SeqConfig, train_mle

    pairs, _ = toy_corpus
    config = Seq2SeqConfig(
        unit_size=32, emb_dim=24, batch_size=32, max_len=12, epochs=30,
        learning_rate=5e-3, seed=6,
    )
    return train_mle(pairs, toy_vocab, config)


def assert_params_equal(a: torch.nn.Module, b: torch.nn.Module):
    sa, sb = a.state_dict(), b.state_dict()
    assert sa.keys() == sb.keys()
    for k in sa:
        assert torch.equal(sa[k], sb[k]), f"parameter {k} differs"

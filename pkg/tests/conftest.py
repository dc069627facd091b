import numpy as np
import pytest

from crisis_ssl.corpus import Example, EventCorpus, humaid_schema, make_split_plan
from crisis_ssl.featurizer import FeaturizerConfig
from crisis_ssl.model import TrainConfig
from crisis_ssl.strategies import ModelConfig, build_context
from crisis_ssl.synth import SynthConfig, generate_corpus


def corpus_from_counts(class_counts, name="event") -> EventCorpus:
    """An EventCorpus whose train split realizes the given class histogram."""
    schema = humaid_schema()
    examples = []
    i = 0
    for c, n in enumerate(class_counts):
        for _ in range(n):
            examples.append(Example(f"{name}-{i:05d}", f"post number {i}", c))
            i += 1
    return EventCorpus(name, schema, examples)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SynthConfig(
        train_size=600, val_size=150, test_size=150, seed=13,
        event_name="small-synth"))


@pytest.fixture(scope="session")
def small_features(small_corpus):
    from crisis_ssl.featurizer import texts_to_csr
    cfg = FeaturizerConfig(dim=2**10, ngram_orders=frozenset({1}))
    return tuple(texts_to_csr([ex.text for ex in split], cfg)
                 for split in (small_corpus.train, small_corpus.val, small_corpus.test))


@pytest.fixture(scope="session")
def ctx_factory(small_corpus, small_features):
    """Contexts over the shared small corpus, cached per (budget, seed)."""
    cache = {}
    feat_cfg = FeaturizerConfig(dim=2**10, ngram_orders=frozenset({1}))

    def make(budget=5, seed=0):
        key = (budget, seed)
        if key not in cache:
            plan = make_split_plan(small_corpus, budget, seed)
            cache[key] = build_context(small_corpus, plan, feat_cfg,
                                       features=small_features)
        return cache[key]

    return make


@pytest.fixture
def small_ctx(ctx_factory):
    return ctx_factory(budget=5, seed=0)


@pytest.fixture
def fast_train():
    return TrainConfig(learning_rate=3e-3, batch_size=32, epochs=6, seed=0)


@pytest.fixture
def fast_model():
    return ModelConfig(hidden_dim=16, dropout_rate=0.1)


def separable_blobs(n_per_class, n_classes, dim, seed, spread=0.25):
    """Well-separated gaussian blobs: one center per class, tight clusters."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_classes, dim)) * 3.0
    X, y = [], []
    for c in range(n_classes):
        X.append(centers[c] + rng.normal(scale=spread, size=(n_per_class, dim)))
        y += [c] * n_per_class
    return np.vstack(X), np.array(y)


def blob_corpus(n_per_class, n_classes, seed, tokens_per_class=6):
    """A trivially separable text corpus: each class has its own tokens."""
    rng = np.random.default_rng(seed)
    schema_names = tuple(f"class-{c}" for c in range(n_classes))
    from crisis_ssl.corpus import LabelSchema
    schema = LabelSchema(schema_names)

    def text(c):
        k = rng.integers(3, 7)
        return " ".join(f"t{c}x{rng.integers(tokens_per_class)}" for _ in range(k))

    def split(name, n_each):
        out = []
        for c in range(n_classes):
            for i in range(n_each):
                out.append(Example(f"{name}-{c}-{i}", text(c), c))
        return out

    return EventCorpus("blobs", schema, split("train", n_per_class),
                       split("val", max(4, n_per_class // 4)),
                       split("test", max(4, n_per_class // 4)))

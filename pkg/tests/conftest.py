import numpy as np
import pytest

from uapolicy import corpus, oracle, synthetic, vectors
from uapolicy.env import AttackEnv
from uapolicy.perturb import PosLexicon, SearchSpace, load_stopwords
from uapolicy.vectors import MeanVectorEmbedder


class SmallWorld:
    """A generated corpus with trained oracle and ready-made search space."""

    def __init__(self, tmpdir, seed=1, n_pos=120, n_neg=120):
        self.world = synthetic.generate_world(seed=seed, n_pos=n_pos, n_neg=n_neg)
        self.paths = synthetic.write_world(self.world, tmpdir)
        self.store = vectors.load_vectors(self.paths["vectors"])
        self.embedder = MeanVectorEmbedder(self.store)
        self.docs = corpus.load_corpus(self.paths["corpus"])
        self.handle = oracle.train_builtin(self.docs, self.embedder, epochs=40, seed=0)
        self.space = SearchSpace(
            synonyms=self.store,
            vectors=self.store,
            cfg=synthetic_config(self.paths),
            tagger=PosLexicon.load(self.paths["pos_lexicon"]),
            embedder=self.embedder,
        )
        self.pos_texts = [
            corpus.tokenize(d.raw_text, d.id) for d in self.docs if d.label == 1
        ]

    def env(self, **kw) -> AttackEnv:
        return AttackEnv(self.handle, self.space, **kw)


def synthetic_config(paths):
    from uapolicy.perturb import SynonymConfig

    return SynonymConfig(stopwords=load_stopwords(paths["stopwords"]))


@pytest.fixture(scope="session")
def small_world(tmp_path_factory) -> SmallWorld:
    return SmallWorld(tmp_path_factory.mktemp("smallworld"))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

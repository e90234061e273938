"""Word-vector storage, text embedding, similarity and action encodings.

Two logical stores exist in a full experiment: one whose cosine
neighborhoods define the synonym candidates and one that backs text and
action embeddings. At desk scale both may point at the same file.
"""

import logging
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


class VectorError(Exception):
    pass


class DimensionMismatchError(VectorError):
    """A row in a vector file disagrees with the file's dimension."""


class UnknownWordError(VectorError, KeyError):
    """Lookup of a word that is not in the store."""


class OddDimensionError(VectorError):
    """Sinusoidal position encodings require an even dimension."""


class WordVectorStore:
    """Immutable word -> vector map with unit-norm rows precomputed.

    Absent words are a distinguishable miss (`None` from `get`, raise
    from `vector`), never a silent zero.
    """

    def __init__(self, words: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or len(words) != matrix.shape[0]:
            raise ValueError("matrix must be (len(words), dim)")
        self.words = list(words)
        self.matrix = matrix
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in store")
        norms = np.linalg.norm(matrix, axis=1)
        safe = np.where(norms == 0.0, 1.0, norms)
        self.unit_matrix = matrix / safe[:, None]
        self._syn_cache: dict[tuple[str, float], list[tuple[str, float]]] = {}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        try:
            return self.matrix[self.index[word]]
        except KeyError:
            raise UnknownWordError(word) from None

    def get(self, word: str) -> np.ndarray | None:
        i = self.index.get(word)
        return None if i is None else self.matrix[i]

    def unit(self, word: str) -> np.ndarray:
        try:
            return self.unit_matrix[self.index[word]]
        except KeyError:
            raise UnknownWordError(word) from None


def load_vectors(path) -> WordVectorStore:
    """Load a plain-text vector file: one `word v1 ... vd` entry per line.

    Duplicate words keep the last row (a warning is logged). Raises
    DimensionMismatchError if any row's length differs from the first.
    """
    words: list[str] = []
    rows: list[list[float]] = []
    seen: dict[str, int] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], [float(x) for x in parts[1:]]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: row for {word!r} has {len(values)} values, expected {dim}"
                )
            if word in seen:
                logger.warning("duplicate vector row for %r (line %d); last row wins", word, lineno)
                rows[seen[word]] = values
            else:
                seen[word] = len(words)
                words.append(word)
                rows.append(values)
    if dim is None:
        raise ValueError(f"{path}: empty vector file")
    return WordVectorStore(words, np.array(rows, dtype=np.float64))


def text_embedding(tokens: Sequence[str], store: WordVectorStore) -> np.ndarray:
    """Mean vector of in-vocabulary tokens; the zero vector if none are."""
    idx = [store.index[t] for t in tokens if t in store.index]
    if not idx:
        return np.zeros(store.dim)
    return store.matrix[idx].mean(axis=0)


class MeanVectorEmbedder:
    """Default pluggable text embedder: mean of word vectors.

    Anything with `dim` and `embed(tokens) -> vector` can stand in, e.g.
    a contextual sentence encoder served out of process.
    """

    def __init__(self, store: WordVectorStore):
        self.store = store

    @property
    def dim(self) -> int:
        return self.store.dim

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        return text_embedding(tokens, self.store)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def embedding_sim(e1: np.ndarray, e2: np.ndarray) -> float:
    """Clamped cosine of two embeddings: 0 for a zero vector on either
    side, exactly 1 for identical nonzero vectors, else cosine clipped
    into [0, 1]."""
    if not e1.any() or not e2.any():
        return 0.0
    if np.array_equal(e1, e2):
        return 1.0
    return min(1.0, max(0.0, cosine(e1, e2)))


def semantic_sim(tokens1: Sequence[str], tokens2: Sequence[str], embedder) -> float:
    """Clamped-cosine similarity of two texts' embeddings, in [0, 1]."""
    return embedding_sim(embedder.embed(tokens1), embedder.embed(tokens2))


def pos_enc(i: int, dim: int) -> np.ndarray:
    """Deterministic sinusoidal position encoding.

    Component 2k is sin(i / 10000^(2k/dim)), component 2k+1 the matching
    cosine.
    """
    if dim % 2 != 0:
        raise OddDimensionError(f"dim must be even, got {dim}")
    if i < 0:
        raise ValueError(f"position must be >= 0, got {i}")
    k = np.arange(dim // 2)
    angles = i / np.power(10000.0, 2.0 * k / dim)
    out = np.empty(dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def action_embedding(word: str, i: int, alpha: float, store: WordVectorStore) -> np.ndarray:
    """Embedding of "replace the word `word` at position `i`".

    Word vector plus alpha-scaled position encoding; out-of-vocabulary
    words contribute the zero vector.
    """
    wv = store.get(word)
    if wv is None:
        wv = np.zeros(store.dim)
    return wv + alpha * pos_enc(i, store.dim)


def nearest_synonyms(word: str, tau_word: float, store: WordVectorStore) -> list[tuple[str, float]]:
    """All other words with unit-vector cosine >= tau_word.

    Sorted by cosine descending, ties broken lexicographically. Exact
    linear scan; store sizes here never warrant an index.
    """
    if word not in store.index:
        raise UnknownWordError(word)
    key = (word, float(tau_word))
    cached = store._syn_cache.get(key)
    if cached is not None:
        return list(cached)
    row = store.index[word]
    sims = store.unit_matrix @ store.unit_matrix[row]
    keep = [
        (store.words[j], float(sims[j]))
        for j in np.nonzero(sims >= tau_word)[0]
        if j != row
    ]
    keep.sort(key=lambda ws: (-ws[1], ws[0]))
    store._syn_cache[key] = keep
    return list(keep)

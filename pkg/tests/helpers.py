"""Shared builders for scripted worlds and independent re-implementations.

The enumerators here deliberately re-derive behavior from first
principles (raw vector math, exhaustive candidate scans) so tests never
validate the library against itself.
"""

import numpy as np

from uapolicy.corpus import TokenizedText
from uapolicy.oracle import ClassifierHandle, ScriptedBackend
from uapolicy.perturb import PosLexicon, SearchSpace, SynonymConfig
from uapolicy.vectors import WordVectorStore


def make_store(entries: dict[str, list[float]]) -> WordVectorStore:
    words = list(entries)
    return WordVectorStore(words, np.array([entries[w] for w in words], dtype=np.float64))


def make_space(
    entries: dict[str, list[float]],
    tau_word: float = 0.7,
    tau_sent: float = 0.0,
    stopwords=(),
    tags: dict[str, str] | None = None,
    pos_filter: bool = True,
) -> SearchSpace:
    store = make_store(entries)
    cfg = SynonymConfig(
        tau_word=tau_word,
        tau_sent=tau_sent,
        stopwords=frozenset(stopwords),
        pos_filter_enabled=pos_filter,
    )
    return SearchSpace(synonyms=store, vectors=store, cfg=cfg, tagger=PosLexicon(tags or {}))


def count_oracle(weights: dict[str, np.ndarray], bias, counter=None) -> ClassifierHandle:
    """Linear function of token counts: logits = bias + sum w[token]."""
    bias = np.asarray(bias, dtype=np.float64)

    def fn(tokens):
        out = bias.copy()
        for tok in tokens:
            if tok in weights:
                out = out + np.asarray(weights[tok], dtype=np.float64)
        return out

    return ClassifierHandle(ScriptedBackend(fn, len(bias)), counter)


def text(tokens, doc_id="t") -> TokenizedText:
    return TokenizedText(tuple(tokens), doc_id)


def mean_embed(tokens, store: WordVectorStore) -> np.ndarray:
    rows = [store.matrix[store.index[t]] for t in tokens if t in store.index]
    if not rows:
        return np.zeros(store.dim)
    return np.sum(rows, axis=0) / len(rows)


def clamped_cos(u, v) -> float:
    if not u.any() or not v.any():
        return 0.0
    if np.array_equal(u, v):
        return 1.0
    c = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return min(1.0, max(0.0, c))


def enumerate_apply_action(t: TokenizedText, i: int, t_init: TokenizedText, y: int,
                           handle: ClassifierHandle, space: SearchSpace):
    """Independent exhaustive re-derivation of the perturbation choice.

    Returns (changed, chosen_word, flipped) using raw vector math and the
    backend directly (no library candidate machinery, no counting).
    """
    store = space.synonyms
    cfg = space.cfg
    token = t.tokens[i]
    row = store.matrix[store.index[token]]
    unit = row / np.linalg.norm(row) if np.linalg.norm(row) else row

    candidates = []
    for w in store.words:
        if w == token or w in cfg.stopwords:
            continue
        v = store.matrix[store.index[w]]
        nv = np.linalg.norm(v)
        cos = float(np.dot(unit, v / nv)) if nv and np.linalg.norm(row) else 0.0
        if cos >= cfg.tau_word:
            candidates.append(w)
    if cfg.pos_filter_enabled:
        tags = space.tagger.entries
        orig = tags.get(token, "OTHER")
        candidates = [
            w for w in candidates
            if orig == "OTHER" or tags.get(w, "OTHER") in ("OTHER", orig)
        ]

    e_prev = mean_embed(t.tokens, store)
    e_init = mean_embed(t_init.tokens, store)
    flips, keeps = [], []
    for w in candidates:
        cand = list(t.tokens)
        cand[i] = w
        e_cand = mean_embed(cand, store)
        if clamped_cos(e_cand, e_prev) < cfg.tau_sent:
            continue
        logits = handle.backend.raw_logits(tuple(cand))
        label = int(np.argmax(logits))
        margin = float(logits[y] - np.delete(logits, y).max())
        if label != y:
            flips.append((clamped_cos(e_cand, e_init), w))
        else:
            keeps.append((margin, w))
    if flips:
        best = max(s for s, _ in flips)
        word = min(w for s, w in flips if s == best)
        return True, word, True
    if keeps:
        best = min(m for m, _ in keeps)
        word = min(w for m, w in keeps if m == best)
        return True, word, False
    return False, None, False


def random_instance(rng: np.random.Generator):
    """Random tiny world: (space, oracle handle, text); may have no legal actions."""
    n_words = int(rng.integers(4, 51))
    dim = int(rng.integers(3, 7))
    words = [f"w{k}" for k in range(n_words)]
    matrix = rng.normal(size=(n_words, dim))
    # cluster some rows together so synonym candidates actually exist
    for _ in range(n_words // 3):
        a, b = rng.integers(n_words, size=2)
        matrix[b] = matrix[a] + rng.normal(scale=0.2, size=dim)
    entries = {w: list(matrix[k]) for k, w in enumerate(words)}
    stop = set(rng.choice(words, size=n_words // 6, replace=False)) if n_words >= 6 else set()
    tag_pool = ["NOUN", "VERB", "ADJ", "ADV", "OTHER"]
    tags = {w: tag_pool[int(rng.integers(5))] for w in words if rng.random() < 0.7}
    space = make_space(
        entries,
        tau_word=float(rng.uniform(0.55, 0.85)),
        tau_sent=float(rng.uniform(0.0, 0.95)),
        stopwords=stop,
        tags=tags,
        pos_filter=bool(rng.random() < 0.7),
    )
    weights = {w: rng.normal(scale=1.5, size=2) for w in words if rng.random() < 0.8}
    handle = count_oracle(weights, bias=rng.normal(scale=0.5, size=2))
    n_tok = int(rng.integers(2, 9))
    toks = [words[int(rng.integers(n_words))] if rng.random() < 0.85 else f"oov{k}" for k in range(n_tok)]
    return space, handle, text(toks, doc_id=f"r{rng.integers(1 << 30)}")

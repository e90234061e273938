"""Single-position synonym replacement: the search space's one move.

A position is a legal action when its token has in-vocabulary synonyms
and is not a stopword or already replaced. Applying an action runs the
candidate pipeline: cosine neighbors, stopword and part-of-speech
filters, a sentence-similarity gate against the current text, then
oracle-guided selection among the survivors.
"""

from dataclasses import dataclass, field
from typing import Iterable

from .corpus import TokenizedText
from .oracle import ClassifierHandle, PHASE_SYNONYM, margin_of
from .vectors import WordVectorStore, MeanVectorEmbedder, embedding_sim, nearest_synonyms

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "OTHER")


class IllegalActionError(Exception):
    """The requested position is not a legal perturbation."""


@dataclass(frozen=True)
class SynonymConfig:
    """Thresholds and filters defining the admissible candidate set."""

    tau_word: float = 0.7
    tau_sent: float = 0.84
    stopwords: frozenset[str] = frozenset()
    pos_filter_enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau_word <= 1.0 or not 0.0 <= self.tau_sent <= 1.0:
            raise ValueError("thresholds must lie in [0, 1]")


class PosLexicon:
    """Coarse part-of-speech tags from a fixed lexicon.

    Words absent from the lexicon tag as OTHER, which never causes
    filtering. Context arguments exist for pluggability; the lexicon
    lookup itself is context-free.
    """

    def __init__(self, entries: dict[str, str] | None = None):
        entries = entries or {}
        for word, tag in entries.items():
            if tag not in POS_TAGS:
                raise ValueError(f"unknown tag {tag!r} for {word!r}")
        self.entries = dict(entries)

    @classmethod
    def load(cls, path) -> "PosLexicon":
        entries = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word TAG'")
                entries[parts[0]] = parts[1]
        return cls(entries)

    def tag(self, word: str, text: TokenizedText | None = None, i: int | None = None) -> str:
        return self.entries.get(word, "OTHER")


def load_stopwords(path) -> frozenset[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(w for w in (line.strip() for line in fh) if w)


def pos_tag(word: str, text: TokenizedText, i: int, lexicon: PosLexicon) -> str:
    """Tag of `word` as used at position `i` of `text`."""
    if text.tokens[i] != word:
        raise ValueError(f"text[{i}] is {text.tokens[i]!r}, not {word!r}")
    return lexicon.tag(word, text, i)


@dataclass
class SearchSpace:
    """Everything that defines the perturbation space, minus the oracle.

    `synonyms` drives candidate generation; `vectors` backs text and
    action embeddings. At desk scale they are usually the same store.
    """

    synonyms: WordVectorStore
    vectors: WordVectorStore
    cfg: SynonymConfig
    tagger: PosLexicon = field(default_factory=PosLexicon)
    embedder: object = None

    def __post_init__(self):
        if self.embedder is None:
            self.embedder = MeanVectorEmbedder(self.vectors)


@dataclass
class PerturbResult:
    """Outcome of applying one action: the (possibly unchanged) text."""

    text: TokenizedText
    changed: bool
    chosen_word: str | None
    flipped: bool
    sim_to_prev: float
    # Book-keeping reused by the environment so no query is paid twice.
    margin_after: float | None = None
    sim_to_init: float | None = None


def _static_legal(token: str, space: SearchSpace) -> bool:
    if token in space.cfg.stopwords or token not in space.synonyms:
        return False
    return bool(nearest_synonyms(token, space.cfg.tau_word, space.synonyms))


def legal_actions(
    t: TokenizedText, already_replaced: Iterable[int], space: SearchSpace
) -> set[int]:
    """Positions that may still be perturbed: in-vocabulary, non-stopword,
    not yet replaced, and with at least one synonym above the threshold."""
    replaced = set(already_replaced)
    return {
        i
        for i, token in enumerate(t.tokens)
        if i not in replaced and _static_legal(token, space)
    }


def apply_action(
    t: TokenizedText,
    i: int,
    t_init: TokenizedText,
    y_tilde: int,
    oracle: ClassifierHandle,
    space: SearchSpace,
) -> PerturbResult:
    """Replace the word at position `i` with the best admissible synonym.

    Candidates are cosine neighbors of the current token, minus
    stopwords, minus part-of-speech mismatches, minus texts whose
    similarity to the *current* text falls below the sentence gate. One
    logit query per survivor; if any survivor flips the prediction away
    from `y_tilde`, the flipping text most similar to the *initial* text
    wins, otherwise the text with the smallest remaining margin. Ties
    break on the candidate word, lexicographically. No survivors leaves
    the text unchanged.
    """
    if not 0 <= i < len(t.tokens) or not _static_legal(t.tokens[i], space):
        raise IllegalActionError(f"position {i} is not a legal action")
    cfg = space.cfg
    original = t.tokens[i]
    candidates = [w for w, _ in nearest_synonyms(original, cfg.tau_word, space.synonyms)]
    candidates = [w for w in candidates if w not in cfg.stopwords]
    if cfg.pos_filter_enabled:
        orig_tag = space.tagger.tag(original, t, i)
        kept = []
        for w in candidates:
            cand_tag = space.tagger.tag(w, t, i)
            if orig_tag == "OTHER" or cand_tag == "OTHER" or cand_tag == orig_tag:
                kept.append(w)
        candidates = kept

    e_prev = space.embedder.embed(t.tokens)
    e_init = space.embedder.embed(t_init.tokens)
    survivors: list[tuple[str, TokenizedText, float, object]] = []
    for w in candidates:
        cand = t.replace(i, w)
        e_cand = space.embedder.embed(cand.tokens)
        sim_prev = embedding_sim(e_cand, e_prev)
        if sim_prev >= cfg.tau_sent:
            survivors.append((w, cand, sim_prev, e_cand))
    if not survivors:
        return PerturbResult(text=t, changed=False, chosen_word=None, flipped=False, sim_to_prev=1.0)

    flips: list[tuple[float, str, TokenizedText, float, float]] = []
    keeps: list[tuple[float, str, TokenizedText, float]] = []
    with oracle.counter.phase(PHASE_SYNONYM):
        for w, cand, sim_prev, e_cand in survivors:
            logits = oracle.predict_logits(cand)
            label = int(logits.argmax())
            m = margin_of(logits, y_tilde)
            if label != y_tilde:
                flips.append((embedding_sim(e_cand, e_init), w, cand, sim_prev, m))
            else:
                keeps.append((m, w, cand, sim_prev))

    if flips:
        sim_init, w, cand, sim_prev, m = max(flips, key=lambda f: (f[0], _LexLow(f[1])))
        return PerturbResult(
            text=cand, changed=True, chosen_word=w, flipped=True,
            sim_to_prev=sim_prev, margin_after=m, sim_to_init=sim_init,
        )
    m, w, cand, sim_prev = min(keeps, key=lambda k: (k[0], k[1]))
    return PerturbResult(
        text=cand, changed=True, chosen_word=w, flipped=False,
        sim_to_prev=sim_prev, margin_after=m,
    )


class _LexLow:
    """Orders strings descending under max(), so lexicographically lowest wins ties."""

    __slots__ = ("s",)

    def __init__(self, s: str):
        self.s = s

    def __lt__(self, other: "_LexLow") -> bool:
        return self.s > other.s

    def __eq__(self, other) -> bool:
        return self.s == other.s

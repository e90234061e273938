"""Synthetic movie-review world for desk-scale benchmarks.

Word vectors live in a block layout: one sentiment axis, one axis per
word cluster, and a noise block that individualizes words. Words inside
a cluster are mutual synonym candidates; sentiment clusters span a
polarity range, so swapping a strong word for its weakest cluster-mate
is the planted attack. Filler clusters are legal but useless decoys,
anchor words embed without being replaceable, and texts come in easy,
medium, and hard shapes that differ in how many decoys dilute the one
replacement that matters.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import Document
from .seeding import named_rng

DIM = 32
_AX_SENTIMENT = 0
_AX_CLUSTERS = 1  # one axis per cluster, assigned in registration order
_NOISE_START = 22
CLUSTER_SCALE = 4.0

# (word, sentiment) sentiment clusters; the low end is the attack vector.
# The spread inside one cluster is capped by the synonym threshold: the
# strongest and weakest members must stay above 0.7 cosine. Both classes
# draw from the SAME clusters (positive texts from the top, negative
# from the bottom), so cluster presence carries no class signal and the
# classifier can only separate on the sentiment coordinate -- which a
# within-cluster swap moves.
ADJ_SENT = [
    ("superb", 1.95), ("excellent", 1.95), ("wonderful", 1.9), ("fantastic", 1.9),
    ("terrific", 1.85), ("brilliant", 1.85), ("outstanding", 1.8), ("marvelous", 1.8),
    ("solid", 0.6), ("decent", 0.5), ("watchable", 0.4), ("passable", 0.3),
    ("forgettable", -1.1), ("lackluster", -1.2), ("mediocre", -1.25),
]
VERB_SENT = [
    ("loved", 1.9), ("adored", 1.85), ("cherished", 1.8), ("savored", 1.75),
    ("enjoyed", 1.4), ("liked", 0.9), ("tolerated", -1.1), ("endured", -1.2),
]

FILLER_CLUSTERS = {
    "film": ["movie", "film", "picture", "flick"],
    "plot": ["plot", "story", "script", "storyline"],
    "acting": ["acting", "cast", "performances", "portrayal"],
    "music": ["music", "score", "soundtrack", "melody"],
    "visuals": ["visuals", "scenery", "imagery", "cinematography"],
    "ending": ["ending", "finale", "conclusion", "climax"],
    "pace": ["pacing", "rhythm", "tempo", "momentum"],
    "dialog": ["dialogue", "banter", "exchanges", "monologues"],
    "director": ["director", "filmmaker", "auteur", "screenwriter"],
}

# In the store (they shape the embedding) but without cluster-mates, so
# never legal actions.
ANCHORS = ["characters", "setting", "runtime", "premise", "tone", "atmosphere", "structure", "themes"]

# No vectors at all: token count varies without touching embeddings.
OOV_FILLERS = ["overall", "honestly", "frankly", "somehow", "afterwards", "meanwhile"]

STOPWORDS = [
    "the", "a", "an", "and", "or", "but", "was", "were", "is", "are", "it", "its",
    "i", "we", "this", "that", "of", "to", "in", "on", "at", "by", "with", "had",
    "has", "have", "while", "when", "so", "very", "really", "quite", "truly",
    "for", "from", "as", "be", "been", "my", "our", "though", "stayed", "seemed",
    "felt", "looked",
]

SENT_NOISE = 0.12
FILLER_NOISE = 0.72
FILLER_SENT_JITTER = 0.04


@dataclass
class SyntheticWorld:
    docs: list[Document]
    vector_lines: list[str]
    stopwords: list[str]
    pos_entries: dict[str, str]
    direction_label: int = 1
    dim: int = DIM
    kinds: dict[str, str] = field(default_factory=dict)  # doc id -> easy/medium/hard


def _vector(axis: int, sentiment: float, noise: np.ndarray) -> np.ndarray:
    v = np.zeros(DIM)
    v[_AX_SENTIMENT] = sentiment
    v[_AX_CLUSTERS + axis] = CLUSTER_SCALE
    v[_NOISE_START:] = noise
    return v


def _build_vocabulary(rng: np.random.Generator):
    """Assign every in-store word its vector; returns (lines, pos tags)."""
    n_noise = DIM - _NOISE_START
    lines: list[str] = []
    pos_entries: dict[str, str] = {}
    axis = 0

    def add(word: str, sentiment: float, noise_scale: float, tag: str, ax: int):
        noise = rng.normal(0.0, noise_scale, size=n_noise)
        vec = _vector(ax, sentiment, noise)
        lines.append(word + " " + " ".join(repr(float(x)) for x in vec))
        pos_entries[word] = tag

    for cluster, tag in ((ADJ_SENT, "ADJ"), (VERB_SENT, "VERB")):
        for word, sentiment in cluster:
            add(word, sentiment, SENT_NOISE, tag, axis)
        axis += 1
    for members in FILLER_CLUSTERS.values():
        for word in members:
            jitter = float(rng.normal(0.0, FILLER_SENT_JITTER))
            add(word, jitter, FILLER_NOISE, "NOUN", axis)
        axis += 1
    for word in ANCHORS:
        jitter = float(rng.normal(0.0, FILLER_SENT_JITTER))
        add(word, jitter, SENT_NOISE, "NOUN", axis)
        axis += 1
    if _AX_CLUSTERS + axis > _NOISE_START:
        raise AssertionError("cluster axes overflow into the noise block")
    return lines, pos_entries


def _strong(cluster):
    top = max(s for _, s in cluster)
    return [w for w, s in cluster if s >= 0.9 * top]


def _bottom(cluster):
    low = min(s for _, s in cluster)
    return [w for w, s in cluster if s <= 0.9 * low]


def _mild(cluster):
    return [w for w, s in cluster if 0.0 < s < 1.0]


# Template skeletons. Placeholders: d<i> decoy filler, a<i> anchor,
# o<i> out-of-vocabulary filler, K key sentiment word, M mild sentiment word.
_TEMPLATES = {
    "easy": [
        ("adj", "the d0 was K , the a0 , the a1 and the a2 were o0"),
        ("verb", "i K the d0 , and the a0 with the a1 had a o0 a2"),
    ],
    "medium": [
        ("adj", "the d0 was K and the d1 was M , though the d2 and the a0 were o0"),
        ("verb", "we K the d0 though the d1 was M , and the d2 with the a0 felt o0"),
    ],
    "hard": [
        ("adj", "the d0 , the d1 and the d2 were o0 , the d3 had a K a0 while the d4 and the d5 were o1"),
        ("verb", "we K the d0 though the d1 , the d2 and the d3 were o0 , while the d4 with the d5 stayed o1"),
    ],
}


def _render(kind: str, polarity: str, rng: np.random.Generator) -> list[str]:
    key_pos, skeleton = _TEMPLATES[kind][rng.integers(len(_TEMPLATES[kind]))]
    key_cluster = ADJ_SENT if key_pos == "adj" else VERB_SENT
    parts = skeleton.split()
    n_decoys = sum(1 for p in parts if p.startswith("d"))
    clusters = rng.choice(sorted(FILLER_CLUSTERS), size=n_decoys, replace=False)
    decoys = [FILLER_CLUSTERS[c][rng.integers(len(FILLER_CLUSTERS[c]))] for c in clusters]
    anchors = list(rng.choice(ANCHORS, size=sum(1 for p in parts if p.startswith("a")), replace=False))
    oovs = list(rng.choice(OOV_FILLERS, size=sum(1 for p in parts if p.startswith("o")), replace=False))
    key_pool = _strong(key_cluster) if polarity == "pos" else _bottom(key_cluster)
    key = key_pool[rng.integers(len(key_pool))]
    mild_words = _mild(ADJ_SENT)
    mild = mild_words[rng.integers(len(mild_words))]

    out = []
    for p in parts:
        if p == "K":
            out.append(key)
        elif p == "M":
            out.append(mild)
        elif p.startswith("d") and p[1:].isdigit():
            out.append(decoys[int(p[1:])])
        elif p.startswith("a") and p[1:].isdigit():
            out.append(anchors[int(p[1:])])
        elif p.startswith("o") and p[1:].isdigit():
            out.append(oovs[int(p[1:])])
        else:
            out.append(p)
    return out


def generate_world(
    seed: int = 0,
    n_pos: int = 900,
    n_neg: int = 900,
    mix: tuple[float, float, float] = (0.4, 0.3, 0.3),
) -> SyntheticWorld:
    """Build a corpus plus matching vector, stopword, and tag resources.

    `mix` gives the easy/medium/hard proportions of each polarity.
    Positive docs get label 1 (the attack direction), negative label 0.
    """
    vocab_rng = named_rng(seed, "synthetic.vocab")
    text_rng = named_rng(seed, "synthetic.texts")
    lines, pos_entries = _build_vocabulary(vocab_rng)

    kinds = ["easy", "medium", "hard"]
    probs = np.array(mix, dtype=float)
    probs = probs / probs.sum()
    docs: list[Document] = []
    kind_of: dict[str, str] = {}
    for polarity, label, count in (("pos", 1, n_pos), ("neg", 0, n_neg)):
        for j in range(count):
            kind = kinds[text_rng.choice(3, p=probs)]
            tokens = _render(kind, polarity, text_rng)
            doc_id = f"{polarity}-{j:04d}"
            docs.append(Document(id=doc_id, raw_text=" ".join(tokens), label=label))
            kind_of[doc_id] = kind
    return SyntheticWorld(
        docs=docs,
        vector_lines=lines,
        stopwords=list(STOPWORDS),
        pos_entries=pos_entries,
        kinds=kind_of,
    )


def write_world(world: SyntheticWorld, outdir) -> dict[str, str]:
    """Materialize the world as the files the CLI consumes."""
    from pathlib import Path

    from .corpus import save_corpus
    from .ioutil import atomic_write_text

    outdir = Path(outdir)
    paths = {
        "corpus": outdir / "corpus.jsonl",
        "vectors": outdir / "vectors.txt",
        "stopwords": outdir / "stopwords.txt",
        "pos_lexicon": outdir / "pos_lexicon.txt",
    }
    save_corpus(world.docs, paths["corpus"])
    atomic_write_text(paths["vectors"], "".join(line + "\n" for line in world.vector_lines))
    atomic_write_text(paths["stopwords"], "".join(w + "\n" for w in world.stopwords))
    atomic_write_text(
        paths["pos_lexicon"],
        "".join(f"{w} {t}\n" for w, t in sorted(world.pos_entries.items())),
    )
    return {k: str(v) for k, v in paths.items()}

"""Corpus ingestion, normalization, and attack-ready train/test splits.

Texts enter as raw strings with class labels, get tokenized into the
lowercase word sequences the perturbation machinery operates on, and are
filtered down to documents that (a) the attacked classifier predicts
correctly with the chosen direction label and (b) at least one reference
attack is known to defeat.
"""

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .env import AttackOutcome
    from .oracle import ClassifierHandle


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    """Malformed corpus or split record; carries the 1-based line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class EmptySplitError(CorpusError):
    """No document survived attack-set filtering."""


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    label: int


@dataclass(frozen=True)
class TokenizedText:
    """Lowercase token sequence with provenance back to its document."""

    tokens: tuple[str, ...]
    doc_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def replace(self, i: int, word: str) -> "TokenizedText":
        toks = list(self.tokens)
        toks[i] = word
        return TokenizedText(tuple(toks), self.doc_id)

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class DatasetSplit:
    train: list[Document]
    test: list[Document]
    direction_label: int
    attacked_by: dict[str, list[str]] = field(default_factory=dict)


_TAG_RE = re.compile(r"<[^>]*>")
_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def tokenize(raw: str, doc_id: str = "") -> TokenizedText:
    """Normalize raw text into attack-ready tokens.

    HTML tags are stripped, text is lowercased and split on whitespace,
    and punctuation characters come out as standalone one-char tokens.
    Total: any input (including empty) yields a token list.
    """
    cleaned = _TAG_RE.sub(" ", raw).lower()
    return TokenizedText(tuple(_TOKEN_RE.findall(cleaned)), doc_id)


def load_corpus(path) -> list[Document]:
    """Read a JSONL corpus: one {"id", "text", "label"} object per line."""
    docs = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, lineno, f"invalid JSON: {e.msg}") from None
            if not isinstance(rec, dict):
                raise ParseError(path, lineno, "record is not an object")
            try:
                doc = Document(id=str(rec["id"]), raw_text=str(rec["text"]), label=int(rec["label"]))
            except KeyError as e:
                raise ParseError(path, lineno, f"missing field {e.args[0]!r}") from None
            except (TypeError, ValueError):
                raise ParseError(path, lineno, "field has wrong type") from None
            if doc.id in seen:
                raise ParseError(path, lineno, f"duplicate id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def save_corpus(docs: Sequence[Document], path) -> None:
    from .ioutil import atomic_write_text

    lines = [
        json.dumps({"id": d.id, "text": d.raw_text, "label": d.label}, sort_keys=True)
        for d in docs
    ]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def save_split(split: DatasetSplit, path) -> None:
    """Write a split file: corpus records plus split membership and provenance."""
    from .ioutil import atomic_write_text

    lines = []
    for name, docs in (("train", split.train), ("test", split.test)):
        for d in docs:
            rec = {
                "id": d.id,
                "text": d.raw_text,
                "label": d.label,
                "split": name,
                "attacked_by": split.attacked_by.get(d.id, []),
            }
            lines.append(json.dumps(rec, sort_keys=True))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_split(path) -> DatasetSplit:
    train: list[Document] = []
    test: list[Document] = []
    attacked_by: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(id=str(rec["id"]), raw_text=str(rec["text"]), label=int(rec["label"]))
                part = rec["split"]
                attacked_by[doc.id] = [str(a) for a in rec.get("attacked_by", [])]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise ParseError(path, lineno, "malformed split record") from None
            if part == "train":
                train.append(doc)
            elif part == "test":
                test.append(doc)
            else:
                raise ParseError(path, lineno, f"unknown split {part!r}")
    if not train and not test:
        raise EmptySplitError(f"{path}: no records")
    labels = {d.label for d in train} | {d.label for d in test}
    direction = labels.pop() if len(labels) == 1 else min({d.label for d in train + test})
    return DatasetSplit(train=train, test=test, direction_label=direction, attacked_by=attacked_by)


AttackFn = Callable[[TokenizedText], "AttackOutcome"]


def build_attack_sets(
    docs: Sequence[Document],
    oracle: "ClassifierHandle",
    attackers: Mapping[str, AttackFn],
    train_filter_attack: str,
    direction_label: int,
    train_fraction: float = 0.7,
    rng: np.random.Generator | None = None,
) -> DatasetSplit:
    """Filter documents down to the attackable ones and split them.

    A document survives when the classifier predicts its true label,
    that label equals `direction_label`, and at least one attacker
    defeats it. Attackers run lazily: the train filter always runs
    first, the others only until one succeeds. Documents the train
    filter defeats are split train/test by `train_fraction`; documents
    only other attackers defeat always land in test.
    """
    if train_filter_attack not in attackers:
        raise ValueError(f"train_filter_attack {train_filter_attack!r} not among attackers")
    if rng is None:
        rng = np.random.default_rng(0)

    filter_wins: list[Document] = []
    other_wins: list[Document] = []
    attacked_by: dict[str, list[str]] = {}
    for doc in docs:
        if doc.label != direction_label:
            continue
        text = tokenize(doc.raw_text, doc_id=doc.id)
        if oracle.predict_label(text) != doc.label:
            continue
        succeeded = []
        if attackers[train_filter_attack](text).success:
            succeeded.append(train_filter_attack)
        else:
            for name, attack in attackers.items():
                if name == train_filter_attack:
                    continue
                if attack(text).success:
                    succeeded.append(name)
                    break
        if not succeeded:
            continue
        attacked_by[doc.id] = succeeded
        if train_filter_attack in succeeded:
            filter_wins.append(doc)
        else:
            other_wins.append(doc)

    if not filter_wins and not other_wins:
        raise EmptySplitError("no document survived attack-set filtering")

    order = rng.permutation(len(filter_wins))
    n_train = int(round(train_fraction * len(filter_wins)))
    train = [filter_wins[i] for i in order[:n_train]]
    test = [filter_wins[i] for i in order[n_train:]] + other_wins
    train.sort(key=lambda d: d.id)
    test.sort(key=lambda d: d.id)
    return DatasetSplit(train=train, test=test, direction_label=direction_label, attacked_by=attacked_by)

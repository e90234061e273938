"""The attacked classifier behind one interface, with query accounting.

Three backends: a builtin feed-forward classifier over text embeddings
(the desk-scale attack target), scripted pure functions of the token
sequence (exact ground truth for property tests), and a client for a
classifier served over HTTP. Every prediction increments exactly one
counter bucket: a logit query implies label knowledge but is counted
once, as logit.
"""

import contextlib
import json
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import Document, TokenizedText, tokenize
from .ioutil import atomic_write_text
from .nn import Adam, Mlp, cross_entropy_grad
from .seeding import named_rng

logger = logging.getLogger(__name__)

# Query phases. "ordering" covers anything spent deciding which position
# to perturb, "synonym" the candidate selection inside the perturbation,
# "status" initial predictions and other bookkeeping.
PHASE_STATUS = "status"
PHASE_ORDERING = "ordering"
PHASE_SYNONYM = "synonym"


class OracleError(Exception):
    pass


class BackendUnavailableError(OracleError):
    """The external classifier endpoint could not be reached or answered garbage."""


class DegenerateDataError(OracleError):
    """Training data with fewer than two classes."""


class AccessCounter:
    """Monotone per-kind, per-phase query counts. Safe under concurrent callers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[tuple[str, str], int] = {}
        self._phase = PHASE_STATUS

    @contextlib.contextmanager
    def phase(self, name: str):
        prev = self._phase
        self._phase = name
        try:
            yield self
        finally:
            self._phase = prev

    def record(self, kind: str) -> None:
        with self._lock:
            key = (self._phase, kind)
            self._counts[key] = self._counts.get(key, 0) + 1

    @property
    def label_queries(self) -> int:
        with self._lock:
            return sum(n for (_, kind), n in self._counts.items() if kind == "label")

    @property
    def logit_queries(self) -> int:
        with self._lock:
            return sum(n for (_, kind), n in self._counts.items() if kind == "logit")

    def snapshot(self) -> dict[tuple[str, str], int]:
        with self._lock:
            return dict(self._counts)

    def merge(self, other: "AccessCounter") -> None:
        for key, n in other.snapshot().items():
            with self._lock:
                self._counts[key] = self._counts.get(key, 0) + n


def counter_delta(after: dict, before: dict) -> dict[tuple[str, str], int]:
    keys = set(after) | set(before)
    return {k: after.get(k, 0) - before.get(k, 0) for k in keys if after.get(k, 0) != before.get(k, 0)}


def _as_tokens(t) -> tuple[str, ...]:
    return t.tokens if isinstance(t, TokenizedText) else tuple(t)


class ScriptedBackend:
    """Pure function of the token sequence; exact and replayable in tests."""

    kind = "scripted"

    def __init__(self, fn: Callable[[tuple[str, ...]], Sequence[float]], num_classes: int):
        self.fn = fn
        self.num_classes = num_classes

    def raw_logits(self, tokens: tuple[str, ...]) -> np.ndarray:
        out = np.asarray(self.fn(tokens), dtype=np.float64)
        if out.shape != (self.num_classes,):
            raise ValueError(f"scripted oracle returned shape {out.shape}")
        return out


class BuiltinBackend:
    """Feed-forward classifier over a pluggable text embedder."""

    kind = "builtin"

    def __init__(self, net: Mlp, embedder, train_accuracy: float | None = None):
        self.net = net
        self.embedder = embedder
        self.num_classes = net.out_dim
        self.train_accuracy = train_accuracy

    def raw_logits(self, tokens: tuple[str, ...]) -> np.ndarray:
        return self.net.forward(self.embedder.embed(tokens))[0]


class ExternalBackend:
    """Client for a classifier served over HTTP.

    POST {base_url}/logits with {"texts": [str]} -> {"logits": [[float]]}
    POST {base_url}/labels with {"texts": [str]} -> {"labels": [int]}
    """

    kind = "external"

    def __init__(self, base_url: str, num_classes: int, timeout: float = 10.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self.num_classes = num_classes
        self.timeout = timeout
        self._session = requests.Session()

    def _post(self, endpoint: str, tokens: tuple[str, ...]) -> dict:
        import requests

        try:
            resp = self._session.post(
                f"{self.base_url}/{endpoint}",
                json={"texts": [" ".join(tokens)]},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as e:
            raise BackendUnavailableError(f"{self.base_url}/{endpoint}: {e}") from e

    def raw_logits(self, tokens: tuple[str, ...]) -> np.ndarray:
        payload = self._post("logits", tokens)
        try:
            row = payload["logits"][0]
        except (KeyError, IndexError, TypeError):
            raise BackendUnavailableError(f"malformed /logits response: {payload!r}") from None
        out = np.asarray(row, dtype=np.float64)
        if out.shape != (self.num_classes,):
            raise BackendUnavailableError(f"/logits returned {out.shape[0] if out.ndim else '?'} classes")
        return out

    def raw_label(self, tokens: tuple[str, ...]) -> int:
        payload = self._post("labels", tokens)
        try:
            return int(payload["labels"][0])
        except (KeyError, IndexError, TypeError, ValueError):
            raise BackendUnavailableError(f"malformed /labels response: {payload!r}") from None


class ClassifierHandle:
    """The attacked model: deterministic predictions plus access accounting."""

    def __init__(self, backend, counter: AccessCounter | None = None):
        self.backend = backend
        self.counter = counter if counter is not None else AccessCounter()

    @property
    def num_classes(self) -> int:
        return self.backend.num_classes

    def predict_logits(self, t) -> np.ndarray:
        """Class scores for a text; one logit query."""
        self.counter.record("logit")
        return self.backend.raw_logits(_as_tokens(t))

    def predict_label(self, t) -> int:
        """Predicted class (argmax, ties to the lowest index); one label query."""
        self.counter.record("label")
        backend_label = getattr(self.backend, "raw_label", None)
        if backend_label is not None:
            return backend_label(_as_tokens(t))
        return int(np.argmax(self.backend.raw_logits(_as_tokens(t))))

    def margin(self, t, y: int) -> float:
        """Logit of class y minus the best other class; one logit query."""
        if not 0 <= y < self.num_classes:
            raise ValueError(f"class {y} out of range for {self.num_classes} classes")
        logits = self.predict_logits(t)
        others = np.delete(logits, y)
        return float(logits[y] - others.max())


def margin_of(logits: np.ndarray, y: int) -> float:
    """Margin recomputed from already-obtained logits; no extra query."""
    others = np.delete(np.asarray(logits, dtype=np.float64), y)
    return float(logits[y] - others.max())


@dataclass
class OracleTrainConfig:
    hidden: int = 32
    epochs: int = 60
    lr: float = 1e-2
    batch_size: int = 32
    seed: int = 0


def train_builtin(
    train_docs: Sequence[Document],
    embedder,
    epochs: int = 60,
    lr: float = 1e-2,
    seed: int = 0,
    hidden: int = 32,
    batch_size: int = 32,
) -> ClassifierHandle:
    """Fit the builtin classifier on text embeddings with cross-entropy.

    One hidden rectifier layer; deterministic given the seed. Training
    accuracy lands on the backend (`train_accuracy`) and in the log.
    """
    labels = np.array([d.label for d in train_docs], dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DegenerateDataError("training corpus has fewer than two classes")
    num_classes = int(labels.max()) + 1
    X = np.stack([embedder.embed(tokenize(d.raw_text, d.id).tokens) for d in train_docs])

    net = Mlp([embedder.dim, hidden, num_classes], rng=named_rng(seed, "oracle.init"))
    opt = Adam(lr=lr)
    order_rng = named_rng(seed, "oracle.batches")
    n = len(train_docs)
    for _ in range(epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            out, acts = net.forward_cached(X[idx])
            _, grad = cross_entropy_grad(out, labels[idx])
            gw, gb = net.backward(acts, grad)
            opt.step(net.param_arrays(), gw + gb)

    pred = np.argmax(net.forward(X), axis=1)
    acc = float(np.mean(pred == labels))
    logger.info("builtin oracle trained: %d docs, train accuracy %.4f", n, acc)
    return ClassifierHandle(BuiltinBackend(net, embedder, train_accuracy=acc))


def save_builtin(handle: ClassifierHandle, path) -> None:
    if not isinstance(handle.backend, BuiltinBackend):
        raise ValueError("only builtin classifiers can be checkpointed")
    atomic_write_text(path, json.dumps(handle.backend.net.to_lists(), sort_keys=True) + "\n")


def load_builtin(path, embedder) -> ClassifierHandle:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    net = Mlp.from_lists(payload)
    if net.in_dim != embedder.dim:
        raise ValueError(f"checkpoint input dim {net.in_dim} != embedder dim {embedder.dim}")
    return ClassifierHandle(BuiltinBackend(net, embedder))

"""Non-learned comparison attacks sharing the exact same search space.

All of them order positions and hand the ordering to the shared rollout,
so any advantage of the learned policy is attributable to ordering alone:
random order (simple search), per-text importance heuristics that probe
the oracle (deletion-margin and saliency-weighted styles), and a
supervised regressor that predicts importance from the text embedding so
test-time ordering costs no queries.
"""

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import TokenizedText
from .env import AttackEnv, AttackOutcome
from .ioutil import atomic_write_text
from .nn import Adam, Mlp
from .oracle import ClassifierHandle, PHASE_ORDERING
from .perturb import SearchSpace, legal_actions, nearest_synonyms
from .seeding import named_rng

# Reserved substitution marker; never appears in any vector store.
OOV_MARKER = "__oov__"


class TooFewTextsError(Exception):
    pass


def ordering_from_importance(importance: np.ndarray, legal: Sequence[int]) -> list[int]:
    """Legal positions sorted by importance descending, ties to the lowest index."""
    return sorted(legal, key=lambda i: (-importance[i], i))


def simple_search_attack(
    t: TokenizedText,
    env: AttackEnv,
    rng: np.random.Generator,
    method: str = "simple-search",
    seed: int | None = None,
) -> AttackOutcome:
    """Random position ordering; synonym selection identical to every
    other method."""
    legal = sorted(legal_actions(t, set(), env.space))
    ordering = [legal[j] for j in rng.permutation(len(legal))]
    return env.rollout(ordering, t, method=method, seed=seed)


def importance_tf(t: TokenizedText, oracle: ClassifierHandle) -> np.ndarray:
    """Deletion-margin importance: how much removing each token costs the
    predicted class's margin. One logit query per position plus one base."""
    n = len(t.tokens)
    with oracle.counter.phase(PHASE_ORDERING):
        y = oracle.predict_label(t)
        base = oracle.margin(t, y)
        imp = np.empty(n)
        for i in range(n):
            reduced = TokenizedText(t.tokens[:i] + t.tokens[i + 1 :], t.doc_id)
            imp[i] = base - oracle.margin(reduced, y)
    return imp


def _substitution_candidates(t: TokenizedText, i: int, space: SearchSpace) -> list[str]:
    """Candidate pipeline minus the sentence gate: neighbors, stopword and
    part-of-speech filters."""
    token = t.tokens[i]
    if token in space.cfg.stopwords or token not in space.synonyms:
        return []
    out = [w for w, _ in nearest_synonyms(token, space.cfg.tau_word, space.synonyms)]
    out = [w for w in out if w not in space.cfg.stopwords]
    if space.cfg.pos_filter_enabled:
        orig_tag = space.tagger.tag(token, t, i)
        out = [
            w
            for w in out
            if orig_tag == "OTHER" or space.tagger.tag(w, t, i) in ("OTHER", orig_tag)
        ]
    return out


def importance_pwws(t: TokenizedText, oracle: ClassifierHandle, space: SearchSpace) -> np.ndarray:
    """Saliency-weighted swap importance.

    Saliency of a position: margin cost of blanking its token with a
    reserved out-of-vocabulary marker. Swap gain: best margin drop over
    its substitution candidates (0 when it has none). Importance is
    softmax(saliency) * gain.
    """
    n = len(t.tokens)
    with oracle.counter.phase(PHASE_ORDERING):
        y = oracle.predict_label(t)
        base = oracle.margin(t, y)
        saliency = np.empty(n)
        for i in range(n):
            saliency[i] = base - oracle.margin(t.replace(i, OOV_MARKER), y)
        gain = np.zeros(n)
        for i in range(n):
            candidates = _substitution_candidates(t, i, space)
            if candidates:
                gain[i] = max(base - oracle.margin(t.replace(i, w), y) for w in candidates)
    shifted = np.exp(saliency - saliency.max())
    return (shifted / shifted.sum()) * gain


def per_text_greedy_attack(
    t: TokenizedText,
    env: AttackEnv,
    importance_fn: Callable[[TokenizedText], np.ndarray],
    method: str = "greedy",
    seed: int | None = None,
) -> AttackOutcome:
    """Attack in importance order; the importance probes are billed to
    this attack's ordering phase."""
    before = env.oracle.counter.snapshot()
    importance = importance_fn(t)
    legal = sorted(legal_actions(t, set(), env.space))
    ordering = ordering_from_importance(importance, legal)
    return env.rollout(ordering, t, method=method, seed=seed, counter_before=before)


@dataclass
class GenfoolerModel:
    """Importance regressor: text embedding in, one score per position."""

    net: Mlp
    l_max: int
    epochs: int
    target_fn: str

    def predict(self, embedding: np.ndarray) -> np.ndarray:
        return self.net.forward(embedding)[0]


def _masked_targets(texts, importance_fn, l_max):
    Y = np.zeros((len(texts), l_max))
    M = np.zeros((len(texts), l_max))
    for r, t in enumerate(texts):
        imp = importance_fn(t)
        k = min(len(imp), l_max)
        Y[r, :k] = imp[:k]
        M[r, :k] = 1.0
    return Y, M


def _masked_mse(pred, Y, M) -> float:
    return float(np.sum(((pred - Y) * M) ** 2) / max(M.sum(), 1.0))


def _fit_epochs(net, X, Y, M, epochs, lr, batch_size, rng, X_val=None, Y_val=None, M_val=None):
    """Minibatch regression on masked MSE; returns per-epoch validation loss."""
    opt = Adam(lr=lr)
    val_losses = []
    n = X.shape[0]
    denom = max(M.sum(), 1.0)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            out, acts = net.forward_cached(X[idx])
            grad = 2.0 * (out - Y[idx]) * M[idx] / denom
            gw, gb = net.backward(acts, grad)
            opt.step(net.param_arrays(), gw + gb)
        if X_val is not None:
            val_losses.append(_masked_mse(net.forward(X_val), Y_val, M_val))
    return val_losses


def genfooler_train(
    texts: Sequence[TokenizedText],
    importance_fn: Callable[[TokenizedText], np.ndarray],
    embedder,
    target_fn: str = "tf",
    l_max: int = 64,
    folds: int = 5,
    max_epochs: int = 40,
    lr: float = 1e-3,
    seed: int = 0,
    hidden: tuple[int, ...] = (64, 64),
    batch_size: int = 32,
) -> GenfoolerModel:
    """Fit the importance regressor with cross-validated epoch selection.

    Importance targets are computed once per training text, padded (or
    truncated) to `l_max` with the loss masked beyond each text's true
    length. The epoch count minimizing mean fold-validation loss wins;
    the returned model is retrained on all texts for that many epochs.
    """
    if len(texts) < folds:
        raise TooFewTextsError(f"{len(texts)} texts < {folds} folds")
    X = np.stack([embedder.embed(t.tokens) for t in texts])
    Y, M = _masked_targets(texts, importance_fn, l_max)

    fold_rng = named_rng(seed, "genfooler.folds")
    order = fold_rng.permutation(len(texts))
    fold_ids = np.array_split(order, folds)
    per_epoch = np.zeros(max_epochs)
    for f, val_idx in enumerate(fold_ids):
        tr_idx = np.concatenate([fold_ids[g] for g in range(folds) if g != f])
        net = Mlp([X.shape[1], *hidden, l_max], rng=named_rng(seed, f"genfooler.fold{f}.init"))
        losses = _fit_epochs(
            net, X[tr_idx], Y[tr_idx], M[tr_idx], max_epochs, lr, batch_size,
            named_rng(seed, f"genfooler.fold{f}.batches"),
            X[val_idx], Y[val_idx], M[val_idx],
        )
        per_epoch += np.array(losses)
    best_epochs = int(np.argmin(per_epoch)) + 1

    net = Mlp([X.shape[1], *hidden, l_max], rng=named_rng(seed, "genfooler.final.init"))
    _fit_epochs(net, X, Y, M, best_epochs, lr, batch_size, named_rng(seed, "genfooler.final.batches"))
    return GenfoolerModel(net=net, l_max=l_max, epochs=best_epochs, target_fn=target_fn)


def genfooler_attack(
    t: TokenizedText,
    env: AttackEnv,
    model: GenfoolerModel,
    method: str = "genfooler",
    seed: int | None = None,
) -> AttackOutcome:
    """Attack in predicted-importance order; ordering costs no queries."""
    pred = model.predict(env.space.embedder.embed(t.tokens))
    importance = np.zeros(len(t.tokens))
    k = min(len(t.tokens), model.l_max)
    importance[:k] = pred[:k]
    legal = sorted(legal_actions(t, set(), env.space))
    ordering = ordering_from_importance(importance, legal)
    return env.rollout(ordering, t, method=method, seed=seed)


def save_genfooler(model: GenfoolerModel, path) -> None:
    payload = model.net.to_lists()
    payload["variant"] = "genfooler"
    payload["l_max"] = model.l_max
    payload["epochs"] = model.epochs
    payload["target_fn"] = model.target_fn
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")


def load_genfooler(path) -> GenfoolerModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("variant") != "genfooler":
        raise ValueError(f"not a genfooler checkpoint: variant={payload.get('variant')!r}")
    return GenfoolerModel(
        net=Mlp.from_lists(payload),
        l_max=int(payload["l_max"]),
        epochs=int(payload["epochs"]),
        target_fn=payload.get("target_fn", "tf"),
    )

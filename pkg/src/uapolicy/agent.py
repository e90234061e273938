"""Q-learning over perturbation actions, with embedded-action generalization.

The headline variant feeds the Q-network a (state embedding, action
embedding) pair and reads a single scalar, so knowledge transfers across
actions that replace similar words. The classic ablation keeps the
standard interface: state in, one output per position index. Both share
the environment mechanics, replay memory, and optimizer; they differ
only behind the network interface.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .corpus import TokenizedText
from .env import AttackEnv, AttackOutcome
from .ioutil import atomic_write_text
from .nn import Adam, Mlp
from .seeding import named_rng
from .vectors import action_embedding

VARIANT_ACTION_EMB = "action_emb"
VARIANT_CLASSIC = "classic"

# Which network selects / evaluates the next-state action in TD targets:
#   target_select — target net picks the argmax, policy net scores it
#   double        — policy net picks, target net scores (double DQN)
#   dqn           — target net does both (plain DQN max)
TD_VARIANTS = ("target_select", "double", "dqn")


class NoLegalActionsError(Exception):
    pass


class PositionOverflowError(Exception):
    """A text has more positions than the classic network has outputs."""


@dataclass
class TrainConfig:
    num_rounds: int = 500
    # Undiscounted returns make every flipping path worth the same total
    # logit reward, so only the (tiny) similarity delta ranks orderings;
    # a discount < 1 rewards flipping sooner, which is the objective.
    gamma: float = 0.9
    lr: float = 1e-3
    batch_size: int = 32
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_decay: float = 1000.0
    target_update_every: int = 20
    max_turns_train: int = 30
    memory_capacity: int = 10000
    seed: int = 0
    alpha: float = 1.0
    hidden: tuple[int, ...] = (128, 128, 64, 64, 32, 32)
    td_variant: str = "target_select"
    l_max: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.eps_end > self.eps_start:
            raise ValueError("eps_end must not exceed eps_start")
        if self.td_variant not in TD_VARIANTS:
            raise ValueError(f"td_variant must be one of {TD_VARIANTS}")


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Exploration rate after `step` global actions; decays exponentially."""
    return cfg.eps_end + (cfg.eps_start - cfg.eps_end) * float(np.exp(-step / cfg.eps_decay))


@dataclass
class Transition:
    s_emb: np.ndarray
    a_repr: object  # action embedding (vector) or position index
    reward: float
    s_next_emb: np.ndarray
    next_reprs: object  # stacked embeddings or position list; empty when none
    done: bool


class ReplayMemory:
    """Fixed-capacity ring with strictly FIFO eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buf: list[Transition] = []
        self.insertions = 0

    def __len__(self) -> int:
        return len(self._buf)

    def push(self, tr: Transition) -> None:
        if len(self._buf) < self.capacity:
            self._buf.append(tr)
        else:
            self._buf[self.insertions % self.capacity] = tr
        self.insertions += 1

    def sample(self, rng: np.random.Generator, k: int) -> list[Transition]:
        n = len(self._buf)
        if n == 0:
            return []
        idx = rng.choice(n, size=min(k, n), replace=False)
        return [self._buf[i] for i in idx]

    def items(self) -> list[Transition]:
        return list(self._buf)


class QNetwork:
    """Scores one (state, action-embedding) pair with a single output."""

    variant = VARIANT_ACTION_EMB

    def __init__(self, state_dim: int, action_dim: int, hidden: Sequence[int], rng=None, net: Mlp | None = None):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = net if net is not None else Mlp([state_dim + action_dim, *hidden, 1], rng=rng)

    def q_value(self, s_emb: np.ndarray, a_emb: np.ndarray) -> float:
        return float(self.q_for(s_emb, np.atleast_2d(a_emb))[0])

    def q_for(self, s_emb: np.ndarray, reprs) -> np.ndarray:
        reprs = np.atleast_2d(np.asarray(reprs, dtype=np.float64))
        if s_emb.shape != (self.state_dim,) or reprs.shape[1] != self.action_dim:
            raise ValueError(
                f"expected state ({self.state_dim},) and actions (*, {self.action_dim}), "
                f"got {s_emb.shape} and {reprs.shape}"
            )
        X = np.hstack([np.broadcast_to(s_emb, (reprs.shape[0], self.state_dim)), reprs])
        return self.net.forward(X)[:, 0]

    def copy(self) -> "QNetwork":
        return QNetwork(self.state_dim, self.action_dim, (), net=self.net.copy())


class ClassicQNetwork:
    """Standard interface: state in, one output per position index."""

    variant = VARIANT_CLASSIC

    def __init__(self, state_dim: int, l_max: int, hidden: Sequence[int], rng=None, net: Mlp | None = None):
        self.state_dim = state_dim
        self.l_max = l_max
        self.net = net if net is not None else Mlp([state_dim, *hidden, l_max], rng=rng)

    def q_for(self, s_emb: np.ndarray, reprs) -> np.ndarray:
        positions = np.asarray(reprs, dtype=np.int64).ravel()
        if positions.size and positions.max() >= self.l_max:
            raise PositionOverflowError(f"position {positions.max()} >= l_max {self.l_max}")
        return self.net.forward(s_emb)[0, positions]

    def copy(self) -> "ClassicQNetwork":
        return ClassicQNetwork(self.state_dim, self.l_max, (), net=self.net.copy())


def action_reprs(policy, text: TokenizedText, positions: Sequence[int], space, alpha: float):
    """Per-position action representations for the given variant."""
    if policy.variant == VARIANT_ACTION_EMB:
        if not positions:
            return np.zeros((0, space.vectors.dim))
        return np.stack(
            [action_embedding(text.tokens[i], i, alpha, space.vectors) for i in positions]
        )
    if len(text.tokens) > policy.l_max:
        raise PositionOverflowError(f"text has {len(text.tokens)} tokens, l_max is {policy.l_max}")
    return list(positions)


def select_action(policy, s_emb, legal: Sequence[int], reprs, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the legal positions; greedy ties go to the
    lowest position index (legal must be sorted ascending)."""
    if not len(legal):
        raise NoLegalActionsError("no legal actions to select from")
    if eps > 0.0 and rng.random() < eps:
        return int(legal[rng.integers(len(legal))])
    q = policy.q_for(s_emb, reprs)
    return int(legal[int(np.argmax(q))])


def td_target(policy, target, tr: Transition, gamma: float, td_variant: str = "target_select") -> float:
    """Bootstrapped regression target for one transition."""
    if tr.done or len(tr.next_reprs) == 0:
        return tr.reward
    q_target = target.q_for(tr.s_next_emb, tr.next_reprs)
    if td_variant == "dqn":
        return tr.reward + gamma * float(q_target.max())
    q_policy = policy.q_for(tr.s_next_emb, tr.next_reprs)
    if td_variant == "double":
        return tr.reward + gamma * float(q_target[int(np.argmax(q_policy))])
    return tr.reward + gamma * float(q_policy[int(np.argmax(q_target))])


def train_step(policy, batch: Sequence[Transition], target, gamma: float, adam: Adam,
               td_variant: str = "target_select") -> float:
    """One MSE regression step of the policy net onto TD targets.

    Returns the pre-step loss.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    ys = np.array([td_target(policy, target, tr, gamma, td_variant) for tr in batch])
    n = len(batch)
    if policy.variant == VARIANT_ACTION_EMB:
        X = np.stack([np.concatenate([tr.s_emb, tr.a_repr]) for tr in batch])
        out, acts = policy.net.forward_cached(X)
        q = out[:, 0]
        residual = q - ys
        grad_out = (2.0 / n) * residual[:, None]
    else:
        X = np.stack([tr.s_emb for tr in batch])
        out, acts = policy.net.forward_cached(X)
        cols = np.array([tr.a_repr for tr in batch], dtype=np.int64)
        q = out[np.arange(n), cols]
        residual = q - ys
        grad_out = np.zeros_like(out)
        grad_out[np.arange(n), cols] = (2.0 / n) * residual
    loss = float(np.mean(residual**2))
    gw, gb = policy.net.backward(acts, grad_out)
    adam.step(policy.net.param_arrays(), gw + gb)
    return loss


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)

    CSV_HEADER = "round,text_id,cum_reward,success,epsilon,loss_mean"

    def append(self, **row) -> None:
        self.rows.append(row)

    def to_csv(self, path) -> None:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r['round']},{r['text_id']},{r['cum_reward']!r},{int(r['success'])},"
                f"{r['epsilon']!r},{r['loss_mean']!r}"
            )
        atomic_write_text(path, "\n".join(lines) + "\n")


def _new_policy(variant: str, space, cfg: TrainConfig, rng):
    d = space.vectors.dim
    if variant == VARIANT_ACTION_EMB:
        return QNetwork(d, d, cfg.hidden, rng=rng)
    return ClassicQNetwork(d, cfg.l_max, cfg.hidden, rng=rng)


def train_policy(
    texts: Sequence[TokenizedText],
    env: AttackEnv,
    cfg: TrainConfig,
    variant: str = VARIANT_ACTION_EMB,
):
    """Learn a universal attack policy on the training texts.

    Texts are visited round-robin (a reshuffled permutation per pass).
    Each action inserts a transition into replay memory and takes one
    regression step; the target network syncs to the policy every
    `target_update_every` rounds. Episodes end on a class flip, on legal
    actions running out, or at `max_turns_train` actions.

    Returns (policy network, training log). Fully deterministic given
    (cfg.seed, texts, env).
    """
    if not texts:
        raise ValueError("training set is empty")
    init_rng = named_rng(cfg.seed, "agent.init")
    explore_rng = named_rng(cfg.seed, "agent.explore")
    sample_rng = named_rng(cfg.seed, "agent.sample")
    texts_rng = named_rng(cfg.seed, "agent.texts")

    policy = _new_policy(variant, env.space, cfg, init_rng)
    target = policy.copy()
    memory = ReplayMemory(cfg.memory_capacity)
    adam = Adam(lr=cfg.lr)
    log = TrainingLog()
    embedder = env.space.embedder

    order: list[int] = []
    global_step = 0
    for round_idx in range(cfg.num_rounds):
        if not order:
            order = list(texts_rng.permutation(len(texts)))
        t = texts[order.pop(0)]
        state = env.reset(t)
        s_emb = embedder.embed(state.t_cur.tokens)
        round_eps = epsilon_at(global_step, cfg)
        cum_reward = 0.0
        losses: list[float] = []
        while not state.done and state.turn < cfg.max_turns_train:
            legal = env.legal(state)
            reprs = action_reprs(policy, state.t_cur, legal, env.space, cfg.alpha)
            eps = epsilon_at(global_step, cfg)
            a = select_action(policy, s_emb, legal, reprs, eps, explore_rng)
            a_repr = reprs[legal.index(a)]
            outcome = env.step(state, a)
            s_next_emb = embedder.embed(state.t_cur.tokens)
            next_legal = env.legal(state) if not state.done else []
            next_reprs = action_reprs(policy, state.t_cur, next_legal, env.space, cfg.alpha)
            memory.push(
                Transition(
                    s_emb=s_emb, a_repr=a_repr, reward=outcome.reward,
                    s_next_emb=s_next_emb, next_reprs=next_reprs, done=outcome.flipped,
                )
            )
            global_step += 1
            cum_reward += outcome.reward
            batch = memory.sample(sample_rng, cfg.batch_size)
            losses.append(train_step(policy, batch, target, cfg.gamma, adam, cfg.td_variant))
            s_emb = s_next_emb
        log.append(
            round=round_idx,
            text_id=t.doc_id,
            cum_reward=cum_reward,
            success=state.done_reason == "flipped",
            epsilon=round_eps,
            loss_mean=float(np.mean(losses)) if losses else 0.0,
        )
        if (round_idx + 1) % cfg.target_update_every == 0:
            target = policy.copy()
    return policy, log


def attack_with_policy(
    t: TokenizedText,
    env: AttackEnv,
    policy,
    alpha: float = 1.0,
    method: str = "lunatc",
    seed: int | None = None,
) -> AttackOutcome:
    """Greedy attack on an unseen text: no exploration, and no oracle
    access at all for choosing which position to replace."""
    space = env.space

    def choose(text: TokenizedText, legal: list[int]) -> int:
        s_emb = space.embedder.embed(text.tokens)
        reprs = action_reprs(policy, text, legal, space, alpha)
        return select_action(policy, s_emb, legal, reprs, 0.0, _NO_RNG)

    return env.run_policy(t, choose, method=method, seed=seed)


class _NeverRandom:
    """Stand-in generator for the greedy path; any draw is a bug."""

    def random(self):  # pragma: no cover
        raise AssertionError("greedy selection must not consume randomness")

    def integers(self, *a, **k):  # pragma: no cover
        raise AssertionError("greedy selection must not consume randomness")


_NO_RNG = _NeverRandom()


def save_policy(policy, cfg: TrainConfig, path) -> None:
    payload = policy.net.to_lists()
    payload["variant"] = policy.variant
    payload["alpha"] = cfg.alpha
    payload["config"] = asdict(cfg)
    payload["config"]["hidden"] = list(cfg.hidden)
    if policy.variant == VARIANT_CLASSIC:
        payload["l_max"] = policy.l_max
        payload["state_dim"] = policy.state_dim
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")


def load_policy(path):
    """Returns (policy, alpha, config dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    net = Mlp.from_lists(payload)
    variant = payload.get("variant", VARIANT_ACTION_EMB)
    if variant == VARIANT_ACTION_EMB:
        if net.in_dim % 2 != 0:
            raise ValueError("action-embedding checkpoint must have even input dim")
        d = net.in_dim // 2
        policy = QNetwork(d, d, (), net=net)
    elif variant == VARIANT_CLASSIC:
        policy = ClassicQNetwork(payload["state_dim"], payload["l_max"], (), net=net)
    else:
        raise ValueError(f"unknown checkpoint variant {variant!r}")
    return policy, float(payload.get("alpha", 1.0)), payload.get("config", {})

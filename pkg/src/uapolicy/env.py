"""Episodic attack environment: transitions, rewards, and rollouts.

An episode starts from a text the oracle classifies as `y_tilde` and
applies one perturbation per step. Rewards follow the margin-decrease
scheme: no-ops pay a small penalty, ordinary moves pay the drop in the
prediction margin, and a class flip ends the episode with the margin
drop plus the scaled similarity of the final text to the original. The
margin terms telescope, so every successful episode collects the same
cumulative logit reward no matter its path.
"""

from dataclasses import dataclass, field

from .corpus import TokenizedText
from .oracle import ClassifierHandle, PHASE_STATUS, counter_delta
from .perturb import IllegalActionError, SearchSpace, apply_action, legal_actions
from .vectors import semantic_sim

REASON_RUNNING = "running"
REASON_FLIPPED = "flipped"
REASON_NO_ACTIONS = "no_actions"
REASON_MAX_TURNS = "max_turns"


class EpisodeDoneError(Exception):
    """step() on an episode that already terminated."""


@dataclass
class EpisodeState:
    t_init: TokenizedText
    t_cur: TokenizedText
    replaced: set[int]
    y_tilde: int
    turn: int = 0
    done: bool = False
    done_reason: str = REASON_RUNNING
    actions: list[int] = field(default_factory=list)
    # Margin of t_cur under y_tilde, cached from the last oracle answer.
    margin_cur: float | None = None


@dataclass
class StepOutcome:
    reward: float
    state: EpisodeState
    flipped: bool
    # Margin-decrease component alone; None for no-op steps.
    r_logit: float | None = None


@dataclass
class AttackOutcome:
    """Result of one attack on one text, with its oracle bill."""

    doc_id: str
    final_text: TokenizedText
    success: bool
    similarity: float
    actions: list[int]
    label_queries: int
    logit_queries: int
    phase_label_queries: dict[str, int] = field(default_factory=dict)
    phase_logit_queries: dict[str, int] = field(default_factory=dict)
    method: str = ""
    seed: int | None = None

    @property
    def score(self) -> float:
        return self.similarity if self.success else 0.0

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "success": self.success,
            "similarity": self.similarity,
            "actions": list(self.actions),
            "final_text": self.final_text.text(),
            "label_queries": self.label_queries,
            "logit_queries": self.logit_queries,
            "phase_label_queries": dict(sorted(self.phase_label_queries.items())),
            "phase_logit_queries": dict(sorted(self.phase_logit_queries.items())),
            "method": self.method,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AttackOutcome":
        tokens = tuple(rec["final_text"].split())
        return cls(
            doc_id=rec["doc_id"],
            final_text=TokenizedText(tokens, rec["doc_id"]),
            success=bool(rec["success"]),
            similarity=float(rec["similarity"]),
            actions=[int(a) for a in rec["actions"]],
            label_queries=int(rec["label_queries"]),
            logit_queries=int(rec["logit_queries"]),
            phase_label_queries={k: int(v) for k, v in rec.get("phase_label_queries", {}).items()},
            phase_logit_queries={k: int(v) for k, v in rec.get("phase_logit_queries", {}).items()},
            method=rec.get("method", ""),
            seed=rec.get("seed"),
        )


class AttackEnv:
    """Stateless coordinator; per-episode state lives in EpisodeState."""

    def __init__(
        self,
        oracle: ClassifierHandle,
        space: SearchSpace,
        eps_penalty: float = 0.2,
        sim_scale: float = 100.0,
        max_turns: int | None = None,
    ):
        self.oracle = oracle
        self.space = space
        self.eps_penalty = eps_penalty
        self.sim_scale = sim_scale
        self.max_turns = max_turns

    def reset(self, t: TokenizedText) -> EpisodeState:
        """Fresh episode on `t`; one label query for the starting class."""
        with self.oracle.counter.phase(PHASE_STATUS):
            y = self.oracle.predict_label(t)
        state = EpisodeState(t_init=t, t_cur=t, replaced=set(), y_tilde=y)
        if not legal_actions(t, state.replaced, self.space):
            state.done = True
            state.done_reason = REASON_NO_ACTIONS
        return state

    def legal(self, state: EpisodeState) -> list[int]:
        return sorted(legal_actions(state.t_cur, state.replaced, self.space))

    def step(self, state: EpisodeState, i: int) -> StepOutcome:
        """Apply action `i`, advance the state, and score the move."""
        if state.done:
            raise EpisodeDoneError(f"episode already ended ({state.done_reason})")
        if i in state.replaced:
            raise IllegalActionError(f"position {i} was already replaced")
        result = apply_action(state.t_cur, i, state.t_init, state.y_tilde, self.oracle, self.space)

        r_logit = None
        if not result.changed:
            reward = -self.eps_penalty
        else:
            if state.margin_cur is None:
                with self.oracle.counter.phase(PHASE_STATUS):
                    state.margin_cur = self.oracle.margin(state.t_cur, state.y_tilde)
            r_logit = state.margin_cur - max(result.margin_after, 0.0)
            state.t_cur = result.text
            state.margin_cur = result.margin_after
            state.actions.append(i)
            reward = r_logit
            if result.flipped:
                reward = r_logit + self.sim_scale * result.sim_to_init

        state.replaced.add(i)
        state.turn += 1
        if result.flipped:
            state.done = True
            state.done_reason = REASON_FLIPPED
        elif not legal_actions(state.t_cur, state.replaced, self.space):
            state.done = True
            state.done_reason = REASON_NO_ACTIONS
        elif self.max_turns is not None and state.turn >= self.max_turns:
            state.done = True
            state.done_reason = REASON_MAX_TURNS
        return StepOutcome(reward=reward, state=state, flipped=result.flipped, r_logit=r_logit)

    def rollout(
        self,
        ordering,
        t: TokenizedText,
        method: str = "",
        seed: int | None = None,
        counter_before: dict | None = None,
    ) -> AttackOutcome:
        """Attack `t` with a fixed position ordering, stopping at the first flip.

        Pays no reward-related queries: the only oracle traffic is the
        initial class lookup and the per-candidate synonym selection.
        Entries that are illegal or perturb nothing are skipped.
        `counter_before` widens the outcome's accounting window to cover
        queries already spent preparing the ordering.
        """
        before = counter_before if counter_before is not None else self.oracle.counter.snapshot()
        with self.oracle.counter.phase(PHASE_STATUS):
            y = self.oracle.predict_label(t)
        replaced: set[int] = set()
        actions: list[int] = []
        cur = t
        success = False
        for i in ordering:
            if i in replaced or not 0 <= i < len(t.tokens):
                continue
            if i not in legal_actions(cur, replaced, self.space):
                continue
            result = apply_action(cur, i, t, y, self.oracle, self.space)
            replaced.add(i)
            if result.changed:
                cur = result.text
                actions.append(i)
            if result.flipped:
                success = True
                break
        return self._outcome(t, cur, success, actions, before, method, seed)

    def run_policy(self, t: TokenizedText, choose, method: str = "", seed: int | None = None) -> AttackOutcome:
        """Attack `t` with an interactive position chooser.

        `choose(current_text, legal_sorted)` picks the next position from
        the current state; it must not touch the oracle. Runs until a
        flip or until legal actions are exhausted (no turn cap, matching
        test-time semantics).
        """
        before = self.oracle.counter.snapshot()
        with self.oracle.counter.phase(PHASE_STATUS):
            y = self.oracle.predict_label(t)
        replaced: set[int] = set()
        actions: list[int] = []
        cur = t
        success = False
        while True:
            legal = sorted(legal_actions(cur, replaced, self.space))
            if not legal:
                break
            i = choose(cur, legal)
            if i not in legal:
                raise IllegalActionError(f"chooser returned illegal position {i}")
            result = apply_action(cur, i, t, y, self.oracle, self.space)
            replaced.add(i)
            if result.changed:
                cur = result.text
                actions.append(i)
            if result.flipped:
                success = True
                break
        return self._outcome(t, cur, success, actions, before, method, seed)

    def _outcome(self, t_init, final, success, actions, counter_before, method, seed) -> AttackOutcome:
        delta = counter_delta(self.oracle.counter.snapshot(), counter_before)
        label_by_phase: dict[str, int] = {}
        logit_by_phase: dict[str, int] = {}
        for (phase, kind), n in delta.items():
            bucket = label_by_phase if kind == "label" else logit_by_phase
            bucket[phase] = bucket.get(phase, 0) + n
        return AttackOutcome(
            doc_id=t_init.doc_id,
            final_text=final,
            success=success,
            similarity=semantic_sim(t_init.tokens, final.tokens, self.space.embedder),
            actions=actions,
            label_queries=sum(label_by_phase.values()),
            logit_queries=sum(logit_by_phase.values()),
            phase_label_queries=label_by_phase,
            phase_logit_queries=logit_by_phase,
            method=method,
            seed=seed,
        )

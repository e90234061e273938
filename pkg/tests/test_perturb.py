import numpy as np
import pytest

from uapolicy.oracle import AccessCounter
from uapolicy.perturb import (
    IllegalActionError,
    PosLexicon,
    SynonymConfig,
    apply_action,
    legal_actions,
    load_stopwords,
    pos_tag,
)

from helpers import (
    count_oracle,
    enumerate_apply_action,
    make_space,
    random_instance,
    text,
)


class TestSynonymConfig:
    def test_threshold_bounds_enforced(self):
        with pytest.raises(ValueError):
            SynonymConfig(tau_word=1.5)
        with pytest.raises(ValueError):
            SynonymConfig(tau_sent=-0.1)


class TestPosLexicon:
    def test_load_and_lookup(self, tmp_path):
        p = tmp_path / "pos.txt"
        p.write_text("movie NOUN\nrun VERB\n")
        lex = PosLexicon.load(p)
        assert lex.tag("movie") == "NOUN"
        assert lex.tag("absent") == "OTHER"

    def test_unknown_tag_rejected(self):
        with pytest.raises(ValueError):
            PosLexicon({"x": "ADJECTIVE"})

    def test_pos_tag_checks_word_at_position(self):
        lex = PosLexicon({"movie": "NOUN"})
        t = text(["good", "movie"])
        assert pos_tag("movie", t, 1, lex) == "NOUN"
        with pytest.raises(ValueError):
            pos_tag("movie", t, 0, lex)

    def test_stopword_loader(self, tmp_path):
        p = tmp_path / "sw.txt"
        p.write_text("the\n\na\n")
        assert load_stopwords(p) == frozenset({"the", "a"})


TWO_CLUSTER = {
    "good": [1.0, 0.0],
    "great": [0.99, 0.05],
    "fine": [0.97, 0.1],
    "movie": [0.0, 1.0],
    "film": [0.05, 0.99],
}


class TestLegalActions:
    def test_in_vocab_with_synonyms(self):
        space = make_space(TWO_CLUSTER)
        assert legal_actions(text(["good", "movie"]), set(), space) == {0, 1}

    def test_already_replaced_excluded(self):
        space = make_space(TWO_CLUSTER)
        assert legal_actions(text(["good", "movie"]), {0}, space) == {1}

    def test_all_oov_empty(self):
        space = make_space(TWO_CLUSTER)
        assert legal_actions(text(["xx", "yy"]), set(), space) == set()

    def test_stopwords_excluded(self):
        space = make_space(TWO_CLUSTER, stopwords={"good"})
        assert legal_actions(text(["good", "movie"]), set(), space) == {1}

    def test_no_synonym_above_threshold_excluded(self):
        entries = dict(TWO_CLUSTER, lonely=[-1.0, -1.0])
        space = make_space(entries)
        t = text(["lonely", "movie"])
        assert legal_actions(t, set(), space) == {1}


class TestApplyAction:
    def test_single_survivor_no_flip(self):
        # margin drops 1.2 -> 0.4 when good -> great
        space = make_space({"good": [1.0, 0.0], "great": [0.98, 0.05]})
        h = count_oracle({"good": [1.2, 0.0], "great": [0.4, 0.0]}, bias=[0.0, 0.0])
        t = text(["good"])
        res = apply_action(t, 0, t, 0, h, space)
        assert res.changed and not res.flipped
        assert res.chosen_word == "great"
        assert res.margin_after == pytest.approx(0.4)
        assert h.counter.logit_queries == 1

    def test_flip_prefers_most_similar_to_initial(self):
        # two flipping candidates with different similarity to the original
        entries = {
            "good": [1.0, 0.0, 0.0],
            "near": [0.99, 0.1, 0.0],     # closer to the original text
            "far": [0.75, 0.6, 0.28],     # flips too, but further away
            "pad": [0.0, 0.0, 1.0],
        }
        space = make_space(entries, tau_word=0.7)
        h = count_oracle({"near": [-1.5, 0.0], "far": [-1.5, 0.0]}, bias=[1.0, 0.0])
        t = text(["good", "pad"])
        res = apply_action(t, 0, t, 0, h, space)
        assert res.flipped and res.chosen_word == "near"

    def test_all_below_sentence_gate_is_noop(self):
        space = make_space({"good": [1.0, 0.0], "odd": [0.75, 0.66]}, tau_sent=0.999)
        h = count_oracle({}, bias=[1.0, 0.0])
        t = text(["good"])
        res = apply_action(t, 0, t, 0, h, space)
        assert not res.changed
        assert res.text.tokens == t.tokens
        assert h.counter.logit_queries == 0

    def test_stopword_candidates_dropped(self):
        space = make_space({"good": [1.0, 0.0], "great": [0.99, 0.05]}, stopwords={"great"})
        h = count_oracle({}, bias=[1.0, 0.0])
        res = apply_action(text(["good"]), 0, text(["good"]), 0, h, space)
        assert not res.changed

    def test_pos_filter_drops_mismatch_but_other_is_lenient(self):
        entries = {"good": [1.0, 0.0], "great": [0.99, 0.05], "well": [0.97, 0.1]}
        tags = {"good": "ADJ", "great": "ADV"}  # "well" is untagged -> OTHER
        space = make_space(entries, tags=tags)
        h = count_oracle({"well": [0.5, 0.0], "great": [-1.0, 0.0]}, bias=[1.0, 0.0])
        res = apply_action(text(["good"]), 0, text(["good"]), 0, h, space)
        # "great" (ADV vs ADJ) is filtered; OTHER-tagged "well" survives
        assert res.chosen_word == "well"

    def test_illegal_action_raises(self):
        space = make_space(TWO_CLUSTER)
        t = text(["good", "xx"])
        with pytest.raises(IllegalActionError):
            apply_action(t, 1, t, 0, count_oracle({}, [0.0, 0.0]), space)
        with pytest.raises(IllegalActionError):
            apply_action(t, 5, t, 0, count_oracle({}, [0.0, 0.0]), space)

    def test_changed_text_differs_in_exactly_position_i(self, rng):
        checked = 0
        while checked < 60:
            space, handle, t = random_instance(rng)
            legal = sorted(legal_actions(t, set(), space))
            if not legal:
                continue
            i = legal[int(rng.integers(len(legal)))]
            res = apply_action(t, i, t, 0, handle, space)
            if res.changed:
                diffs = [k for k in range(len(t.tokens)) if res.text.tokens[k] != t.tokens[k]]
                assert diffs == [i]
                assert res.text.tokens[i] == res.chosen_word
            checked += 1

    def test_determinism(self, rng):
        space, handle, t = None, None, None
        while True:
            space, handle, t = random_instance(rng)
            legal = sorted(legal_actions(t, set(), space))
            if legal:
                break
        i = legal[0]
        c1, c2 = AccessCounter(), AccessCounter()
        h1 = count_oracle({}, [0.0, 0.0], c1)
        h1.backend = handle.backend
        h2 = count_oracle({}, [0.0, 0.0], c2)
        h2.backend = handle.backend
        r1 = apply_action(t, i, t, 0, h1, space)
        r2 = apply_action(t, i, t, 0, h2, space)
        assert r1 == r2
        assert c1.snapshot() == c2.snapshot()

    def test_matches_exhaustive_enumeration(self, rng):
        run_bruteforce_equivalence(rng, n_instances=40)


def run_bruteforce_equivalence(rng, n_instances):
    """Compare the pipeline's choice with an independent enumeration."""
    checked = 0
    while checked < n_instances:
        space, handle, t = random_instance(rng)
        legal = sorted(legal_actions(t, set(), space))
        if not legal:
            continue
        i = legal[int(rng.integers(len(legal)))]
        y = int(np.argmax(handle.backend.raw_logits(t.tokens)))
        expected = enumerate_apply_action(t, i, t, y, handle, space)
        res = apply_action(t, i, t, y, handle, space)
        assert (res.changed, res.chosen_word, res.flipped) == expected
        checked += 1
    return checked

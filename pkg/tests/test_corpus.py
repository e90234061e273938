import json
from types import SimpleNamespace

import numpy as np
import pytest

from uapolicy.corpus import (
    Document,
    EmptySplitError,
    ParseError,
    build_attack_sets,
    load_corpus,
    load_split,
    save_corpus,
    save_split,
    tokenize,
)

from helpers import count_oracle


class TestTokenize:
    def test_lowercases_and_isolates_punctuation(self):
        assert tokenize("I LOVED this movie!").tokens == ("i", "loved", "this", "movie", "!")

    def test_strips_html_tags(self):
        assert tokenize("<b>good</b> film").tokens == ("good", "film")

    def test_empty_input(self):
        assert tokenize("").tokens == ()

    def test_numbers_survive(self):
        assert tokenize("11 cases reported.").tokens == ("11", "cases", "reported", ".")

    def test_apostrophes_split(self):
        assert tokenize("don't").tokens == ("don", "'", "t")

    def test_idempotent_on_own_output(self, rng):
        alphabet = list("abcdefghij") + ["!", ",", ".", "'", "7"]
        for _ in range(200):
            toks = tuple(
                alphabet[rng.integers(len(alphabet))] for _ in range(rng.integers(1, 10))
            )
            joined = " ".join(toks)
            assert tokenize(joined).tokens == tokenize(" ".join(tokenize(joined).tokens)).tokens


class TestCorpusIO:
    def test_load_single_record(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"id":"a","text":"x y","label":0}\n')
        assert load_corpus(p) == [Document("a", "x y", 0)]

    def test_round_trip(self, tmp_path):
        docs = [Document("a", "x y", 0), Document("b", "<b>Hi</b>", 1)]
        p = tmp_path / "c.jsonl"
        save_corpus(docs, p)
        assert load_corpus(p) == docs

    def test_missing_label_reports_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"id":"a","text":"x"}\n')
        with pytest.raises(ParseError) as err:
            load_corpus(p)
        assert err.value.lineno == 1

    def test_bad_json_reports_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"id":"a","text":"x","label":0}\nnot json\n')
        with pytest.raises(ParseError) as err:
            load_corpus(p)
        assert err.value.lineno == 2

    def test_duplicate_id_rejected(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"id":"a","text":"x","label":0}\n{"id":"a","text":"y","label":0}\n')
        with pytest.raises(ParseError):
            load_corpus(p)

    def test_split_round_trip(self, tmp_path):
        split = _make_split()
        p = tmp_path / "s.jsonl"
        save_split(split, p)
        loaded = load_split(p)
        assert loaded.train == split.train
        assert loaded.test == split.test
        assert loaded.attacked_by == split.attacked_by

    def test_split_file_schema(self, tmp_path):
        p = tmp_path / "s.jsonl"
        save_split(_make_split(), p)
        rec = json.loads(p.read_text().splitlines()[0])
        assert set(rec) == {"id", "text", "label", "split", "attacked_by"}


def _make_split():
    from uapolicy.corpus import DatasetSplit

    return DatasetSplit(
        train=[Document("a", "x", 1)],
        test=[Document("b", "y", 1)],
        direction_label=1,
        attacked_by={"a": ["greedy-tf"], "b": ["simple-search"]},
    )


def _attacker(success_words):
    """Succeeds exactly when the text contains one of the given words."""

    def attack(t):
        return SimpleNamespace(success=any(w in t.tokens for w in success_words))

    return attack


class TestBuildAttackSets:
    def _docs(self):
        # label-1 docs; 'pos' makes the scripted oracle predict class 1
        return [
            Document("d0", "pos key", 1),
            Document("d1", "pos key alt", 1),
            Document("d2", "pos alt", 1),        # only the other attacker succeeds
            Document("d3", "pos nothing", 1),    # no attacker succeeds
            Document("d4", "neutral key", 1),    # oracle mispredicts
            Document("d5", "pos key", 0),        # wrong direction
        ]

    def _oracle(self, counter=None):
        return count_oracle({"pos": np.array([0.0, 2.0])}, bias=[1.0, 0.0], counter=counter)

    def test_membership_matches_brute_force(self, rng):
        docs = self._docs()
        attackers = {"tf": _attacker(["key"]), "ss": _attacker(["alt"])}
        split = build_attack_sets(docs, self._oracle(), attackers, "tf", 1, rng=rng)
        ids = lambda docs_: {d.id for d in docs_}  # noqa: E731
        # brute-force expectation by definition
        assert ids(split.train) | ids(split.test) == {"d0", "d1", "d2"}
        assert "d2" in ids(split.test) and "d2" not in ids(split.train)
        for d in split.train:
            assert "tf" in split.attacked_by[d.id]

    def test_train_test_disjoint(self, rng):
        docs = self._docs()
        attackers = {"tf": _attacker(["key"]), "ss": _attacker(["alt"])}
        split = build_attack_sets(docs, self._oracle(), attackers, "tf", 1, rng=rng)
        assert not {d.id for d in split.train} & {d.id for d in split.test}

    def test_all_mispredicted_is_empty(self, rng):
        docs = [Document("x", "neutral key", 1)]
        with pytest.raises(EmptySplitError):
            build_attack_sets(docs, self._oracle(), {"tf": _attacker(["key"])}, "tf", 1, rng=rng)

    def test_unknown_filter_name(self, rng):
        with pytest.raises(ValueError):
            build_attack_sets([], self._oracle(), {"tf": _attacker([])}, "nope", 1, rng=rng)

    def test_train_filter_success_is_rerunnable(self, rng):
        docs = self._docs()
        tf = _attacker(["key"])
        attackers = {"tf": tf, "ss": _attacker(["alt"])}
        split = build_attack_sets(docs, self._oracle(), attackers, "tf", 1, rng=rng)
        for d in split.train:
            assert tf(tokenize(d.raw_text, d.id)).success

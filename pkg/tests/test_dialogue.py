import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convgraph.dialogue import (
    Act,
    Corpus,
    Dialogue,
    Speaker,
    Turn,
    Vocabulary,
    bits_to_str,
    build_vocabulary,
    dumps_corpus,
    encode_act,
    encode_state,
    loads_corpus,
    validate_lines,
)
from convgraph.errors import AlternationViolation, DataError, EmptyCorpus, UnknownLabel
from convgraph.synthetic import random_corpus

U, A = Speaker.USER, Speaker.AGENT


def labels(vocab, bits):
    return {vocab.act_labels[i] for i in np.flatnonzero(bits[: vocab.n_act])}


class TestVocabulary:
    def test_f1_labels(self, f1_vocab, golden):
        assert f1_vocab.to_dict() == golden["vocab"]
        assert f1_vocab.width == 11

    def test_idempotent_over_repeated_corpora(self, f1_corpus):
        assert build_vocabulary([f1_corpus, f1_corpus]) == build_vocabulary([f1_corpus])

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocabulary([Corpus(())])

    def test_order_independent(self):
        corpus = random_corpus(3)
        dialogues = list(corpus.dialogues)
        random.Random(0).shuffle(dialogues)
        assert build_vocabulary(Corpus(tuple(dialogues))) == build_vocabulary(corpus)

    def test_rejects_unsorted(self):
        with pytest.raises(DataError):
            Vocabulary(("b", "a"), (), (), ())

    def test_round_trip(self, f1_vocab, tmp_path):
        path = tmp_path / "vocab.json"
        f1_vocab.save(path)
        again = Vocabulary.load(path)
        assert again == f1_vocab
        assert again.to_json() == path.read_text()


class TestEncoding:
    def test_confirm_date_time(self, f1_vocab):
        bits = encode_act([Act("confirm", (("date", "x"), ("time", "y")))], f1_vocab)
        assert labels(f1_vocab, bits) == {"confirm", "confirm.date", "confirm.time"}

    def test_union_of_acts(self, f1_vocab):
        bits = encode_act([Act("inform", (("date", "x"),)), Act("request", (("time", ""),))], f1_vocab)
        assert labels(f1_vocab, bits) == {"inform", "inform.date", "request", "request.time"}

    def test_state_layout(self, f1_vocab):
        turn = Turn(U, (Act("inform", (("date", "friday"),)),), {"date": "friday"})
        bits = encode_state(turn, f1_vocab)
        assert labels(f1_vocab, bits) == {"inform", "inform.date"}
        assert bits[f1_vocab.n_act:].tolist() == [1, 0]

    def test_empty_belief(self, f1_vocab):
        turn = Turn(U, (Act("affirm"),), {})
        assert encode_state(turn, f1_vocab)[f1_vocab.n_act:].sum() == 0

    def test_empty_value_is_unfilled(self, f1_vocab):
        turn = Turn(U, (Act("affirm"),), {"date": ""})
        assert encode_state(turn, f1_vocab)[f1_vocab.n_act:].sum() == 0

    def test_values_abstracted(self, f1_vocab):
        a = Turn(U, (Act("inform", (("date", "friday"),)),), {"date": "friday"})
        b = Turn(U, (Act("inform", (("date", "monday"),)),), {"date": "monday"})
        assert np.array_equal(encode_state(a, f1_vocab), encode_state(b, f1_vocab))

    def test_unknown_label(self, f1_vocab):
        with pytest.raises(UnknownLabel):
            encode_act([Act("offer")], f1_vocab)
        with pytest.raises(UnknownLabel):
            encode_state(Turn(U, (Act("affirm"),), {"food": "x"}), f1_vocab)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.data())
    def test_value_changes_never_change_state(self, seed, data):
        corpus = random_corpus(seed, max_dialogues=3)
        vocab = build_vocabulary(corpus)
        turn = corpus.dialogues[0].turns[0]
        new_value = data.draw(st.text(min_size=1, max_size=5))
        changed = Turn(
            turn.speaker,
            tuple(Act(a.intent, tuple((s, new_value) for s, _ in a.slots)) for a in turn.acts),
            {s: new_value for s, v in turn.belief if v},
        )
        assert bits_to_str(encode_state(changed, vocab)) == bits_to_str(encode_state(turn, vocab))
        assert len(encode_state(turn, vocab)) == vocab.width


class TestSchema:
    def test_alternation_enforced(self):
        with pytest.raises(AlternationViolation):
            Dialogue("x", (Turn(A, (Act("greet"),)),))
        with pytest.raises(AlternationViolation):
            Dialogue("x", (Turn(U, (Act("a"),)), Turn(U, (Act("b"),))))

    def test_reset_allows_new_segment(self):
        d = Dialogue("x", (Turn(U, (Act("a"),)), Turn(U, (Act("b"),))), resets=(1,))
        assert d.resets == (1,)

    def test_empty_acts_rejected(self):
        with pytest.raises(DataError):
            Turn(U, ())

    def test_duplicate_ids(self, f1_corpus):
        d = f1_corpus.dialogues[0]
        with pytest.raises(DataError):
            Corpus((d, d))

    def test_utterance_text_ignored(self):
        line = json.dumps({"id": "a", "turns": [{"speaker": "user", "text": "hi there",
                                                 "acts": [{"intent": "greet", "slots": []}],
                                                 "belief": {}}]})
        corpus = loads_corpus(line)
        assert corpus.dialogues[0].turns[0].acts[0].intent == "greet"

    def test_corpus_round_trip(self, f1_corpus):
        text = dumps_corpus(f1_corpus)
        again = loads_corpus(text)
        assert again == f1_corpus
        assert dumps_corpus(again) == text


class TestValidate:
    def test_clean(self, f1_corpus):
        assert list(validate_lines(dumps_corpus(f1_corpus).splitlines())) == []

    def test_agent_first(self, f1_corpus):
        lines = dumps_corpus(f1_corpus).splitlines()
        lines.append(json.dumps({"id": "bad", "turns": [
            {"speaker": "agent", "acts": [{"intent": "greet", "slots": []}], "belief": {}}]}))
        (diag,) = validate_lines(lines)
        assert diag.line == 4 and diag.kind == "alternation"

    def test_truncated_line(self):
        (diag,) = validate_lines(['{"id": "a", "turns": ['])
        assert diag.line == 1 and diag.kind == "parse"

    def test_empty_acts(self):
        line = json.dumps({"id": "a", "turns": [{"speaker": "user", "acts": [], "belief": {}}]})
        (diag,) = validate_lines([line])
        assert diag.kind == "empty-acts"

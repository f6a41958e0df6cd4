import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrl_retrieve.data_model import (
    MrcRecord,
    chunk_around_answer,
    chunk_for_index,
    load_mrc_jsonl,
    split_sentences,
    write_mrc_jsonl,
)
from ctrl_retrieve.errors import (
    AnswerNotInContext,
    AnswerSentenceTooLong,
    EmptyText,
    MalformedLine,
    MissingField,
    SentenceTooLong,
)
from ctrl_retrieve.tokenization import build_vocab, count_tokens

VOCAB = build_vocab(["placeholder"])


def _write_lines(path, objs):
    path.write_text("\n".join(o if isinstance(o, str) else json.dumps(o) for o in objs) + "\n")
    return path


def _rec(**kw):
    base = {"id": "r1", "question": "q", "context": "A. B.", "answer_text": "B.", "category": "science"}
    base.update(kw)
    return base


# ---------------------------------------------------------------- loading


def test_load_single_record(tmp_path):
    recs = load_mrc_jsonl(_write_lines(tmp_path / "c.jsonl", [_rec()]))
    assert len(recs) == 1
    assert recs[0].answer_start() == 3


def test_missing_category_names_line(tmp_path):
    bad = _rec()
    del bad["category"]
    with pytest.raises(MissingField) as exc:
        load_mrc_jsonl(_write_lines(tmp_path / "c.jsonl", [bad]))
    assert exc.value.line == 1 and exc.value.field == "category"


def test_fail_fast_on_fourth_line(tmp_path):
    lines = [_rec(id=f"r{i}") for i in range(3)] + [_rec(id="r3", answer_text="zzz")]
    with pytest.raises(AnswerNotInContext) as exc:
        load_mrc_jsonl(_write_lines(tmp_path / "c.jsonl", lines))
    assert exc.value.record_id == "r3"


def test_malformed_json_line(tmp_path):
    path = _write_lines(tmp_path / "c.jsonl", [_rec(), "{not json"])
    with pytest.raises(MalformedLine) as exc:
        load_mrc_jsonl(path)
    assert exc.value.line == 2


def test_empty_question_rejected(tmp_path):
    with pytest.raises(EmptyText):
        load_mrc_jsonl(_write_lines(tmp_path / "c.jsonl", [_rec(question="   ")]))


def test_answer_char_start_must_match(tmp_path):
    with pytest.raises(AnswerNotInContext):
        load_mrc_jsonl(_write_lines(tmp_path / "c.jsonl", [_rec(answer_char_start=0)]))
    recs = load_mrc_jsonl(_write_lines(tmp_path / "d.jsonl", [_rec(answer_char_start=3)]))
    assert recs[0].answer_char_start == 3


def test_write_then_load_roundtrip(tmp_path):
    recs = [
        MrcRecord("a", "질문?", "첫 문장. 둘째 문장.", "둘째", "land", 6, "doc-1"),
        MrcRecord("b", "q", "x y.", "y", "science"),
    ]
    write_mrc_jsonl(recs, tmp_path / "c.jsonl")
    assert load_mrc_jsonl(tmp_path / "c.jsonl") == recs


# ---------------------------------------------------------------- sentences


def _texts(text):
    return [text[s.char_start:s.char_end] for s in split_sentences(text)]


def test_split_two_sentences_offsets():
    # "A cat." is 6 chars, one space, "A dog." runs from 7 to 13
    spans = split_sentences("A cat. A dog.")
    assert [(s.char_start, s.char_end) for s in spans] == [(0, 6), (7, 13)]


def test_split_no_terminator():
    spans = split_sentences("No terminator here")
    assert [(s.char_start, s.char_end) for s in spans] == [(0, 18)]


def test_split_decimal_guard():
    assert _texts("Pi is 3.14. Done.") == ["Pi is 3.14.", "Done."]


def test_split_fullwidth_and_runs():
    assert _texts("What?! Yes！ 好。 end") == ["What?!", "Yes！", "好。", "end"]


@settings(max_examples=200)
@given(st.lists(st.sampled_from(["A", "b", "3", ".", "?", " ", "\n", "1.5", "。", "가"]), min_size=1, max_size=40))
def test_split_properties(parts):
    text = "".join(parts)
    if not text.strip():
        return
    spans = split_sentences(text)
    # ordered, non-overlapping, trimmed, and covering all non-whitespace
    for a, b in zip(spans, spans[1:]):
        assert a.char_end <= b.char_start
    covered = set()
    for s in spans:
        piece = text[s.char_start:s.char_end]
        assert piece == piece.strip() and piece
        covered.update(range(s.char_start, s.char_end))
    assert all(i in covered for i, ch in enumerate(text) if not ch.isspace())
    # idempotent on each sentence
    for s in spans:
        assert len(split_sentences(text[s.char_start:s.char_end])) == 1


# ---------------------------------------------------------------- chunking


def _equal_sentences(n, words_each):
    return " ".join(" ".join(f"w{i}x{j}" for j in range(words_each)) + "." for i in range(n))


def test_chunk_single_sentence_context():
    rec = MrcRecord("r", "q", "Only one sentence here.", "one", "c")
    ch = chunk_around_answer(rec, VOCAB)
    assert ch.text == "Only one sentence here." and ch.category == "c"


def test_chunk_expands_right_then_left():
    ctx = _equal_sentences(5, 4)
    spans = split_sentences(ctx)
    rec = MrcRecord("r", "q", ctx, "w2x1", "c")  # answer in the third sentence
    ch = chunk_around_answer(rec, VOCAB, max_tokens=12)
    assert ch.char_span == (spans[1].char_start, spans[3].char_end)
    assert ch.token_count == 12


def test_chunk_right_first_when_only_one_fits():
    ctx = _equal_sentences(5, 4)
    spans = split_sentences(ctx)
    rec = MrcRecord("r", "q", ctx, "w2x1", "c")
    ch = chunk_around_answer(rec, VOCAB, max_tokens=8)
    assert ch.char_span == (spans[2].char_start, spans[3].char_end)


def test_chunk_saturates_to_whole_context():
    ctx = _equal_sentences(5, 4)
    rec = MrcRecord("r", "q", ctx, "w4x3", "c")
    assert chunk_around_answer(rec, VOCAB, max_tokens=512).text == ctx


def test_chunk_answer_sentence_too_long():
    rec = MrcRecord("r", "q", _equal_sentences(2, 10), "w0x1", "c")
    with pytest.raises(AnswerSentenceTooLong):
        chunk_around_answer(rec, VOCAB, max_tokens=5)


def test_index_chunks_pack_pairs():
    ctx = _equal_sentences(4, 200)
    chunks = chunk_for_index("d", ctx, "c", VOCAB, max_tokens=512)
    assert [c.token_count for c in chunks] == [400, 400]
    assert [c.chunk_id for c in chunks] == ["d#0000", "d#0001"]


def test_index_chunk_single_short():
    assert len(chunk_for_index("d", "Short.", "c", VOCAB)) == 1


def test_index_chunk_errors():
    with pytest.raises(EmptyText):
        chunk_for_index("d", "   ", "c", VOCAB)
    with pytest.raises(SentenceTooLong) as exc:
        chunk_for_index("d", _equal_sentences(3, 10), "c", VOCAB, max_tokens=5)
    assert exc.value.index == 0


sentence_st = st.builds(
    lambda ws, end: " ".join(ws) + end,
    st.lists(st.text(alphabet="abcdefg가나다", min_size=1, max_size=6), min_size=1, max_size=12),
    st.sampled_from([".", "?", "!"]),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(sentence_st, min_size=1, max_size=15), st.integers(12, 40), st.data())
def test_chunk_invariants(sentences, max_tokens, data):
    ctx = " ".join(sentences)
    chunks = chunk_for_index("d", ctx, "c", VOCAB, max_tokens=max_tokens)
    assert all(c.token_count <= max_tokens for c in chunks)
    assert all(c.token_count == count_tokens(c.text) for c in chunks)
    # every sentence appears exactly once, in order
    rebuilt = [c.text[s.char_start:s.char_end] for c in chunks for s in split_sentences(c.text)]
    assert rebuilt == [ctx[s.char_start:s.char_end] for s in split_sentences(ctx)]

    target = data.draw(st.sampled_from(split_sentences(ctx)))
    answer = ctx[target.char_start:target.char_end].split()[0]
    rec = MrcRecord("r", "q", ctx, answer, "c")
    ch = chunk_around_answer(rec, VOCAB, max_tokens=max_tokens)
    assert answer in ch.text and ch.token_count <= max_tokens
    # boundaries land on sentence boundaries of the source context
    starts = {s.char_start for s in split_sentences(ctx)}
    ends = {s.char_end for s in split_sentences(ctx)}
    assert ch.char_span[0] in starts and ch.char_span[1] in ends

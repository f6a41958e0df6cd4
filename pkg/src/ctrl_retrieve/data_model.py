"""MRC records, sentence splitting and chunking.

Two chunkers live here. ``chunk_around_answer`` builds the training passage
for one question by growing a window of sentences around the answer.
``chunk_for_index`` packs a whole context into consecutive, non-overlapping
chunks so that every sentence is searchable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    AnswerNotInContext,
    AnswerSentenceTooLong,
    EmptyText,
    MalformedLine,
    MissingField,
    SentenceTooLong,
    ValidationError,
)
from .tokenization import Vocab, count_tokens

DEFAULT_MAX_CHUNK_TOKENS = 512

REQUIRED_FIELDS = ("id", "question", "context", "answer_text", "category")

# ASCII terminators plus their full-width forms (and the ideographic full stop)
TERMINATORS = frozenset(".!?．！？。")


@dataclass(frozen=True)
class MrcRecord:
    id: str
    question: str
    context: str
    answer_text: str
    category: str
    answer_char_start: int | None = None
    doc_id: str | None = None

    def answer_start(self) -> int:
        if self.answer_char_start is not None:
            return self.answer_char_start
        return self.context.index(self.answer_text)

    def resolved_doc_id(self) -> str:
        """``doc_id`` if given, else a stable digest of (category, context)."""
        if self.doc_id:
            return self.doc_id
        digest = hashlib.sha1(f"{self.category}\n{self.context}".encode("utf-8"))
        return "doc-" + digest.hexdigest()[:12]

    def to_json(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class SentenceSpan:
    index: int
    char_start: int
    char_end: int


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    category: str
    token_count: int
    char_span: tuple[int, int]

    def to_json(self) -> str:
        payload = asdict(self)
        payload["char_span"] = list(self.char_span)
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            text=d["text"],
            category=d["category"],
            token_count=int(d["token_count"]),
            char_span=(int(d["char_span"][0]), int(d["char_span"][1])),
        )


def validate_record(rec: MrcRecord) -> MrcRecord:
    if not rec.question.strip():
        raise EmptyText(rec.id, "question")
    if not rec.context.strip():
        raise EmptyText(rec.id, "context")
    if not rec.answer_text:
        raise EmptyText(rec.id, "answer_text")
    if rec.answer_char_start is not None:
        start = rec.answer_char_start
        if start < 0 or not rec.context.startswith(rec.answer_text, start):
            raise AnswerNotInContext(rec.id)
    elif rec.answer_text not in rec.context:
        raise AnswerNotInContext(rec.id)
    return rec


def parse_record(obj: object, line: int) -> MrcRecord:
    if not isinstance(obj, dict):
        raise MalformedLine(line, "expected a JSON object")
    for key in REQUIRED_FIELDS:
        if key not in obj:
            raise MissingField(line, key)
    for key in REQUIRED_FIELDS + ("doc_id",):
        if key in obj and not isinstance(obj[key], str):
            raise MalformedLine(line, f"field {key!r} must be a string")
    start = obj.get("answer_char_start")
    if start is not None and (isinstance(start, bool) or not isinstance(start, int)):
        raise MalformedLine(line, "answer_char_start must be an integer")
    rec = MrcRecord(
        id=obj["id"],
        question=obj["question"],
        context=obj["context"],
        answer_text=obj["answer_text"],
        category=obj["category"],
        answer_char_start=start,
        doc_id=obj.get("doc_id"),
    )
    return validate_record(rec)


def load_mrc_jsonl(path: str | Path) -> list[MrcRecord]:
    """Parse a JSONL corpus, failing on the first bad line.

    Blank lines are ignored. Nothing is returned unless every line is valid.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from exc
            records.append(parse_record(obj, lineno))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValidationError(f"duplicate record id {dup!r}")
    return records


def write_mrc_jsonl(records: Iterable[MrcRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def _is_break(text: str, i: int) -> bool:
    """True if a sentence ends after position ``i`` (a terminator run end)."""
    n = len(text)
    if text[i] not in TERMINATORS:
        return False
    nxt = i + 1
    if nxt < n and text[nxt] in TERMINATORS:
        return False  # inside a run like "?!" or "..."
    if 0 < i and nxt < n and text[i - 1].isdigit() and text[nxt].isdigit():
        return False
    return nxt == n or text[nxt].isspace()


def split_sentences(text: str) -> list[SentenceSpan]:
    spans = []
    n = len(text)
    pos = 0
    while pos < n:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        end = pos
        while end < n and not _is_break(text, end):
            end += 1
        end = min(end + 1, n)
        stop = end
        while stop > pos and text[stop - 1].isspace():
            stop -= 1
        spans.append(SentenceSpan(len(spans), pos, stop))
        pos = end
    return spans


def _sentence_tokens(text: str, spans: Sequence[SentenceSpan]) -> list[int]:
    return [count_tokens(text[s.char_start:s.char_end]) for s in spans]


def chunk_around_answer(
    record: MrcRecord, vocab: Vocab, max_tokens: int = DEFAULT_MAX_CHUNK_TOKENS
) -> Chunk:
    """Grow a window of whole sentences around the answer, right side first.

    Sides alternate (right, left, right, ...). A side closes when it runs out
    of sentences or its next sentence would overflow the budget; expansion
    continues on the other side until both are closed.
    """
    del vocab  # token counts depend only on the word splitter
    validate_record(record)
    ctx = record.context
    spans = split_sentences(ctx)
    counts = _sentence_tokens(ctx, spans)

    a_start = record.answer_start()
    a_end = a_start + len(record.answer_text)
    covering = [s.index for s in spans if s.char_start < a_end and s.char_end > a_start]
    lo, hi = covering[0], covering[-1]
    total = sum(counts[lo:hi + 1])
    if total > max_tokens:
        raise AnswerSentenceTooLong(record.id, total, max_tokens)

    right_open, left_open = True, True
    turn_right = True
    while right_open or left_open:
        if turn_right and right_open:
            if hi + 1 < len(spans) and total + counts[hi + 1] <= max_tokens:
                hi += 1
                total += counts[hi]
            else:
                right_open = False
        elif not turn_right and left_open:
            if lo - 1 >= 0 and total + counts[lo - 1] <= max_tokens:
                lo -= 1
                total += counts[lo]
            else:
                left_open = False
        turn_right = not turn_right

    start, end = spans[lo].char_start, spans[hi].char_end
    return Chunk(
        chunk_id=f"{record.id}#ans",
        doc_id=record.resolved_doc_id(),
        text=ctx[start:end],
        category=record.category,
        token_count=total,
        char_span=(start, end),
    )


def chunk_for_index(
    doc_id: str,
    context: str,
    category: str,
    vocab: Vocab,
    max_tokens: int = DEFAULT_MAX_CHUNK_TOKENS,
) -> list[Chunk]:
    """Greedily pack consecutive sentences into chunks of <= ``max_tokens``."""
    del vocab
    if not context.strip():
        raise EmptyText(doc_id, "context")
    spans = split_sentences(context)
    counts = _sentence_tokens(context, spans)
    for s, c in zip(spans, counts):
        if c > max_tokens:
            raise SentenceTooLong(doc_id, s.index, c, max_tokens)

    groups: list[list[int]] = []
    current: list[int] = []
    used = 0
    for s, c in zip(spans, counts):
        if current and used + c > max_tokens:
            groups.append(current)
            current, used = [], 0
        current.append(s.index)
        used += c
    if current:
        groups.append(current)

    chunks = []
    for n, group in enumerate(groups):
        start, end = spans[group[0]].char_start, spans[group[-1]].char_end
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id}#{n:04d}",
                doc_id=doc_id,
                text=context[start:end],
                category=category,
                token_count=sum(counts[i] for i in group),
                char_span=(start, end),
            )
        )
    return chunks


def unique_documents(records: Iterable[MrcRecord]) -> list[tuple[str, str, str]]:
    """(doc_id, context, category) per distinct document, first-seen order."""
    seen: dict[str, tuple[str, str, str]] = {}
    for rec in records:
        doc_id = rec.resolved_doc_id()
        if doc_id in seen:
            if seen[doc_id][1] != rec.context or seen[doc_id][2] != rec.category:
                raise ValidationError(f"doc_id {doc_id!r} reused with different content")
            continue
        seen[doc_id] = (doc_id, rec.context, rec.category)
    return list(seen.values())


def write_chunks_jsonl(chunks: Iterable[Chunk], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ch in chunks:
            fh.write(ch.to_json() + "\n")


def load_chunks_jsonl(path: str | Path) -> list[Chunk]:
    with open(path, encoding="utf-8") as fh:
        return [Chunk.from_dict(json.loads(line)) for line in fh if line.strip()]

"""Word-level vocabulary with atomic control-token entries.

Words are maximal runs of Unicode letters/digits after NFC normalisation and
lowercasing; everything else (whitespace, punctuation, ``#``, brackets) is a
delimiter. Control tokens therefore cannot be produced from plain text: the
only way to get ``###science`` into a sequence is :func:`compose_ct_input`.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DuplicateClass,
    EmptyCorpus,
    UnknownClass,
    ValidationError,
    VocabMismatch,
)

VOCAB_VERSION = 1

UNK = "<unk>"
CT_PREFIX = "###"
CT_UNKNOWN = "[unk]"
SPECIALS = (UNK,)

_WORD_RE = re.compile(r"[^\W_]+")


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text).lower()


def words(text: str) -> list[str]:
    return _WORD_RE.findall(normalize(text))


def count_tokens(text: str) -> int:
    return len(words(text))


def ct_surface(label: str) -> str:
    return CT_PREFIX + label


@dataclass(frozen=True)
class Vocab:
    """Immutable token <-> id mapping.

    ``id_to_token`` is the source of truth; the forward map and the control
    token lookups are derived from it.
    """

    id_to_token: tuple[str, ...]
    ct_classes: tuple[str, ...] = ()
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValidationError("vocabulary contains duplicate tokens")
        if UNK not in mapping:
            raise ValidationError(f"vocabulary lacks the {UNK} entry")
        for label in self.ct_classes:
            if ct_surface(label) not in mapping:
                raise ValidationError(f"control token for {label!r} missing from tokens")
        if self.ct_classes and CT_UNKNOWN not in mapping:
            raise ValidationError(f"control tokens registered without {CT_UNKNOWN}")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def ct_ids(self) -> dict[str, int]:
        return {label: self.token_to_id[ct_surface(label)] for label in self.ct_classes}

    @property
    def ct_unknown_id(self) -> int | None:
        return self.token_to_id.get(CT_UNKNOWN)

    def ct_id(self, ct: str) -> int:
        """Id for a class label or for ``CT_UNKNOWN``."""
        if ct == CT_UNKNOWN and self.ct_classes:
            return self.token_to_id[CT_UNKNOWN]
        if ct not in self.ct_classes:
            raise UnknownClass(ct)
        return self.token_to_id[ct_surface(ct)]

    def to_json(self) -> str:
        payload = {
            "version": VOCAB_VERSION,
            "tokens": list(self.id_to_token),
            "ct_classes": list(self.ct_classes),
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=0)

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        payload = json.loads(text)
        if payload.get("version") != VOCAB_VERSION:
            raise VocabMismatch(f"unsupported vocab version {payload.get('version')!r}")
        return cls(tuple(payload["tokens"]), tuple(payload["ct_classes"]))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.ids)


def build_vocab(
    corpus_texts: Iterable[str], min_count: int = 1, max_size: int | None = None
) -> Vocab:
    """Count words over the corpus and assign ids by (-count, token).

    ``max_size`` caps the number of word entries (specials not included).
    Words below ``min_count`` or past the cap are left out and encode to
    ``<unk>``.
    """
    texts = list(corpus_texts)
    if not texts:
        raise EmptyCorpus("cannot build a vocabulary from zero texts")
    counts = Counter()
    for text in texts:
        counts.update(words(text))
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    if max_size is not None:
        kept = kept[:max_size]
    return Vocab(SPECIALS + tuple(kept))


def register_control_tokens(vocab: Vocab, classes: Sequence[str]) -> Vocab:
    """Append ``###<class>`` entries (and ``[unk]``) without renumbering.

    Labels already registered are skipped, so re-registering the same set
    returns an identical vocabulary.
    """
    classes = list(classes)
    if not classes:
        raise ValidationError("at least one control-token class is required")
    seen: set[str] = set()
    for label in classes:
        if label in seen:
            raise DuplicateClass(label)
        if not isinstance(label, str) or not label or label == CT_UNKNOWN:
            raise ValidationError(f"invalid class label {label!r}")
        seen.add(label)

    tokens = list(vocab.id_to_token)
    registered = list(vocab.ct_classes)
    for label in classes:
        if label in registered:
            continue
        surface = ct_surface(label)
        if surface in vocab.token_to_id:
            raise DuplicateClass(label)
        tokens.append(surface)
        registered.append(label)
    if CT_UNKNOWN not in vocab.token_to_id:
        tokens.append(CT_UNKNOWN)
    return Vocab(tuple(tokens), tuple(registered))


def encode_text(vocab: Vocab, text: str, max_tokens: int | None = None) -> TokenSeq:
    lookup = vocab.token_to_id
    unk = vocab.unk_id
    ids = [lookup.get(w, unk) for w in words(text)]
    if max_tokens is not None and len(ids) > max_tokens:
        return TokenSeq(tuple(ids[:max_tokens]), truncated=True)
    return TokenSeq(tuple(ids), truncated=False)


def compose_ct_input(vocab: Vocab, ct: str, body: TokenSeq) -> TokenSeq:
    """Prepend the control token for ``ct`` (a class label or ``CT_UNKNOWN``)."""
    return TokenSeq((vocab.ct_id(ct),) + body.ids, truncated=body.truncated)

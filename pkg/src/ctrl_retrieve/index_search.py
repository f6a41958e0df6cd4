"""Exact dense index over control-token-composed passages.

Passages are encoded with their gold category's control token (known at
ingestion). Queries get whatever token the classifier assigns, the gold one
in oracle mode, or none at all when control tokens are disabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .containers import load_container, save_container
from .ct_classifier import ClassifierParams, assign_ct, predict_proba
from .data_model import Chunk
from .dual_encoder import PASSAGE, QUESTION, DualEncoder, embed, encode_batch
from .errors import (
    DimensionMismatch,
    EmptyChunks,
    EmptyQuestion,
    ValidationError,
    VocabMismatch,
)
from .tokenization import TokenSeq, Vocab, compose_ct_input, encode_text

INDEX_VERSION = 1

CT_CLASSIFIER, CT_ORACLE, CT_NONE = "classifier", "oracle", "none"


@dataclass(frozen=True)
class DenseIndex:
    vectors: np.ndarray  # [N, d_out] float64
    chunk_ids: tuple[str, ...]
    categories: tuple[str, ...]
    doc_ids: tuple[str, ...]
    encoder_hash: str
    use_ct: bool = True

    def __post_init__(self):
        n = self.vectors.shape[0]
        if not (len(self.chunk_ids) == len(self.categories) == len(self.doc_ids) == n):
            raise ValidationError("index arrays disagree on N")
        if len(set(self.chunk_ids)) != n:
            raise ValidationError("duplicate chunk ids in index")
        # rank of each chunk id in ascending order, the tie-break key
        order = sorted(range(n), key=lambda i: self.chunk_ids[i])
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n)
        object.__setattr__(self, "_id_rank", rank)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def d_out(self) -> int:
        return self.vectors.shape[1]

    def save(self, path: str | Path) -> None:
        meta = {
            "version": INDEX_VERSION,
            "encoder_hash": self.encoder_hash,
            "d_out": self.d_out,
            "N": len(self),
            "chunk_ids": list(self.chunk_ids),
            "metadata": [
                {"category": c, "doc_id": d} for c, d in zip(self.categories, self.doc_ids)
            ],
            "use_ct": self.use_ct,
        }
        save_container(path, meta, {"vectors": self.vectors})

    @classmethod
    def load(cls, path: str | Path) -> "DenseIndex":
        meta, arrays = load_container(path)
        if meta.get("version") != INDEX_VERSION:
            raise ValidationError(f"{path}: unsupported index version")
        return cls(
            arrays["vectors"],
            tuple(meta["chunk_ids"]),
            tuple(m["category"] for m in meta["metadata"]),
            tuple(m["doc_id"] for m in meta["metadata"]),
            meta["encoder_hash"],
            meta.get("use_ct", True),
        )


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    ranked: tuple[tuple[str, float], ...]
    assigned_ct: str | None = None

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "assigned_ct": self.assigned_ct,
            "ranked": [{"chunk_id": c, "score": s} for c, s in self.ranked],
        }


def passage_seq(vocab: Vocab, chunk: Chunk, use_ct: bool = True) -> TokenSeq:
    body = encode_text(vocab, chunk.text)
    return compose_ct_input(vocab, chunk.category, body) if use_ct else body


def build_index(
    encoder: DualEncoder, chunks: Sequence[Chunk], vocab: Vocab, use_ct: bool = True
) -> DenseIndex:
    if not chunks:
        raise EmptyChunks("cannot index zero chunks")
    if encoder.vocab_hash != vocab.hash:
        raise VocabMismatch("encoder was trained against a different vocabulary")
    seqs = [passage_seq(vocab, ch, use_ct) for ch in chunks]
    vectors = encode_batch(encoder, PASSAGE, seqs).astype(np.float64)
    return DenseIndex(
        vectors,
        tuple(ch.chunk_id for ch in chunks),
        tuple(ch.category for ch in chunks),
        tuple(ch.doc_id for ch in chunks),
        encoder.hash,
        use_ct,
    )


def search(index: DenseIndex, q_vec: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exhaustive dot-product scan; ties broken by ascending chunk id."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    q_vec = np.asarray(q_vec, dtype=np.float64)
    if q_vec.shape != (index.d_out,):
        raise DimensionMismatch(f"query has shape {q_vec.shape}, index expects ({index.d_out},)")
    scores = index.vectors @ q_vec
    order = np.lexsort((index._id_rank, -scores))[:k]
    return [(index.chunk_ids[i], float(scores[i])) for i in order]


def retrieve_with_ct(
    encoder: DualEncoder,
    classifier: ClassifierParams | None,
    index: DenseIndex,
    vocab: Vocab,
    question: str,
    threshold: float,
    k: int,
    *,
    query_id: str = "q",
    ct_mode: str = CT_CLASSIFIER,
    gold_ct: str | None = None,
) -> RetrievalResult:
    """Classify -> threshold -> prepend control token -> encode -> search.

    ``ct_mode`` selects where the query's control token comes from:
    the classifier, the supplied ``gold_ct`` (oracle upper bound), or
    nowhere (``"none"``, the plain DPR baseline).
    """
    if encoder.vocab_hash != vocab.hash:
        raise VocabMismatch("encoder and vocabulary disagree")
    if index.encoder_hash != encoder.hash:
        raise VocabMismatch("index was built with a different encoder checkpoint")
    body = encode_text(vocab, question)
    if len(body) == 0:
        raise EmptyQuestion(f"question {query_id!r} has no tokens")

    if ct_mode == CT_NONE:
        ct, seq = None, body
    else:
        if ct_mode == CT_CLASSIFIER:
            if classifier is None:
                raise ValidationError("classifier mode needs a classifier")
            classifier.check_vocab(vocab)
            ct = assign_ct(predict_proba(classifier, body), threshold)
        elif ct_mode == CT_ORACLE:
            if gold_ct is None:
                raise ValidationError("oracle mode needs gold_ct")
            ct = gold_ct
        else:
            raise ValidationError(f"unknown ct_mode {ct_mode!r}")
        seq = compose_ct_input(vocab, ct, body)

    q_vec = embed(encoder.tower(QUESTION), seq)
    return RetrievalResult(query_id, tuple(search(index, q_vec, k)), ct)

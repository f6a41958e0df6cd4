"""Two-tower encoder: mean-pooled token embeddings followed by a linear map.

Each tower computes ``v = proj_w.T @ mean(embedding[ids]) + proj_b``. The
question and passage towers have separate parameters but must share a
vocabulary, so a control token has the same id on both sides. Similarity is
the raw dot product; vectors are never normalised.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .containers import load_container, save_container
from .errors import DimensionMismatch, EmptySequence, ValidationError, VocabMismatch
from .tokenization import TokenSeq

CHECKPOINT_VERSION = 1
QUESTION, PASSAGE = "question", "passage"


@dataclass(frozen=True)
class EncoderParams:
    embedding: np.ndarray  # [vocab_size, d_emb]
    proj_w: np.ndarray  # [d_emb, d_out]
    proj_b: np.ndarray  # [d_out]

    def __post_init__(self):
        v, d_emb = self.embedding.shape
        if self.proj_w.shape[0] != d_emb or self.proj_b.shape != (self.proj_w.shape[1],):
            raise DimensionMismatch(
                f"inconsistent encoder shapes {self.embedding.shape}, "
                f"{self.proj_w.shape}, {self.proj_b.shape}"
            )
        for name in ("embedding", "proj_w", "proj_b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"non-finite values in {name}")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def d_emb(self) -> int:
        return self.embedding.shape[1]

    @property
    def d_out(self) -> int:
        return self.proj_w.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "proj_w": self.proj_w, "proj_b": self.proj_b}

    @classmethod
    def from_dict(cls, d: dict[str, np.ndarray]) -> "EncoderParams":
        return cls(d["embedding"], d["proj_w"], d["proj_b"])


def init_encoder(
    vocab_size: int, d_emb: int = 64, d_out: int = 128, seed: int = 0
) -> EncoderParams:
    if min(vocab_size, d_emb, d_out) < 1:
        raise ValidationError("encoder dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    embedding = rng.uniform(-0.05, 0.05, size=(vocab_size, d_emb))
    proj_w = rng.standard_normal((d_emb, d_out)) / np.sqrt(d_emb)
    return EncoderParams(embedding, proj_w, np.zeros(d_out))


def pooled(params: EncoderParams, seq: TokenSeq | Sequence[int]) -> np.ndarray:
    ids = seq.ids if isinstance(seq, TokenSeq) else tuple(seq)
    if not ids:
        raise EmptySequence()
    return params.embedding[list(ids)].sum(axis=0) / len(ids)


def _project(params: EncoderParams, m: np.ndarray) -> np.ndarray:
    # einsum's own loops keep each output row independent of batch size,
    # so a row encoded alone matches the same row encoded in a batch bitwise
    return np.einsum("bd,dk->bk", np.atleast_2d(m), params.proj_w) + params.proj_b


def embed(params: EncoderParams, seq: TokenSeq | Sequence[int]) -> np.ndarray:
    return _project(params, pooled(params, seq))[0]


def score(q_vec: np.ndarray, p_vec: np.ndarray) -> float:
    q_vec, p_vec = np.asarray(q_vec, dtype=np.float64), np.asarray(p_vec, dtype=np.float64)
    if q_vec.shape != p_vec.shape or q_vec.ndim != 1:
        raise DimensionMismatch(f"cannot score shapes {q_vec.shape} and {p_vec.shape}")
    return float(np.dot(q_vec, p_vec))


@dataclass(frozen=True)
class DualEncoder:
    q_params: EncoderParams
    p_params: EncoderParams
    vocab_hash: str

    def __post_init__(self):
        if self.q_params.vocab_size != self.p_params.vocab_size:
            raise VocabMismatch("towers were built against different vocabularies")
        if self.q_params.d_out != self.p_params.d_out:
            raise DimensionMismatch("towers disagree on d_out")

    def tower(self, side: str) -> EncoderParams:
        if side == QUESTION:
            return self.q_params
        if side == PASSAGE:
            return self.p_params
        raise ValueError(f"side must be {QUESTION!r} or {PASSAGE!r}, got {side!r}")

    @property
    def d_out(self) -> int:
        return self.q_params.d_out

    @property
    def hash(self) -> str:
        h = hashlib.sha256(self.vocab_hash.encode())
        for params in (self.q_params, self.p_params):
            for name, arr in params.as_dict().items():
                h.update(name.encode())
                h.update(str(arr.shape).encode())
                h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "d_emb": self.q_params.d_emb,
            "d_out": self.d_out,
            "vocab_hash": self.vocab_hash,
            "encoder_hash": self.hash,
        }
        arrays = {f"q_{k}": v for k, v in self.q_params.as_dict().items()}
        arrays.update({f"p_{k}": v for k, v in self.p_params.as_dict().items()})
        save_container(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "DualEncoder":
        meta, arrays = load_container(path)
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
        enc = cls(
            EncoderParams.from_dict({k[2:]: v for k, v in arrays.items() if k.startswith("q_")}),
            EncoderParams.from_dict({k[2:]: v for k, v in arrays.items() if k.startswith("p_")}),
            meta["vocab_hash"],
        )
        if enc.hash != meta.get("encoder_hash"):
            raise ValidationError(f"{path}: checkpoint hash mismatch (corrupted file?)")
        return enc


def init_dual_encoder(
    vocab_size: int, vocab_hash: str, d_emb: int = 64, d_out: int = 128, seed: int = 0
) -> DualEncoder:
    # towers get distinct streams so they do not start as copies of each other
    return DualEncoder(
        init_encoder(vocab_size, d_emb, d_out, seed),
        init_encoder(vocab_size, d_emb, d_out, seed + 1),
        vocab_hash,
    )


def encode_batch(encoder: DualEncoder, side: str, seqs: Sequence[TokenSeq]) -> np.ndarray:
    params = encoder.tower(side)
    if not seqs:
        return np.zeros((0, params.d_out))
    rows = []
    for i, seq in enumerate(seqs):
        if len(seq) == 0:
            raise EmptySequence(i)
        rows.append(pooled(params, seq))
    return _project(params, np.stack(rows))

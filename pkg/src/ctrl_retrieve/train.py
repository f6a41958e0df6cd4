"""In-batch-negative training of the dual encoder.

For a batch of B (query, positive) pairs the score matrix is
``S[i, j] = q_i . p_j``; row i is a B-way softmax whose correct class is the
diagonal. Gradients are written out by hand (score -> projection -> mean
pool -> embedding rows) and checked against finite differences in the tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dual_encoder import DualEncoder, EncoderParams, pooled
from .errors import NonFinite, ShapeMismatch, TooFewPairs, ValidationError
from .tokenization import TokenSeq


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 3e-3
    seed: int = 42
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2 for in-batch negatives")
        if self.epochs < 0 or self.learning_rate < 0:
            raise ValidationError("epochs and learning_rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainBatch:
    queries: Sequence[TokenSeq]
    positives: Sequence[TokenSeq]

    def __post_init__(self):
        if len(self.queries) != len(self.positives):
            raise ShapeMismatch("queries and positives differ in length")
        if len(self.queries) < 2:
            raise ValidationError("a batch needs at least 2 pairs")


def _log_softmax_rows(S: np.ndarray) -> np.ndarray:
    shifted = S - S.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def in_batch_nll(S: np.ndarray) -> float:
    """Mean over rows of -log softmax(S_i)[i]."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeMismatch(f"score matrix must be square, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise NonFinite("score matrix contains non-finite values")
    logp = _log_softmax_rows(S)
    return float(-np.mean(np.diag(logp)))


def _tower_forward(params: EncoderParams, seqs: Sequence[TokenSeq]):
    M = np.stack([pooled(params, s) for s in seqs])
    return M, M @ params.proj_w + params.proj_b


def _tower_backward(params: EncoderParams, seqs, M: np.ndarray, dV: np.ndarray):
    grads = {
        "proj_w": M.T @ dV,
        "proj_b": dV.sum(axis=0),
        "embedding": np.zeros_like(params.embedding),
    }
    dM = dV @ params.proj_w.T
    # each token occurrence in sequence i receives dM_i / len_i
    lengths = np.array([len(s.ids) for s in seqs])
    ids = np.concatenate([np.asarray(s.ids, dtype=np.int64) for s in seqs])
    rows = np.repeat(dM / lengths[:, None], lengths, axis=0)
    np.add.at(grads["embedding"], ids, rows)
    return grads


def loss_and_grad(encoder: DualEncoder, batch: TrainBatch):
    """Loss plus gradients as ``{"q": {...}, "p": {...}}`` keyed like EncoderParams."""
    Mq, Q = _tower_forward(encoder.q_params, batch.queries)
    Mp, P = _tower_forward(encoder.p_params, batch.positives)
    S = Q @ P.T
    loss = in_batch_nll(S)
    B = S.shape[0]
    dS = np.exp(_log_softmax_rows(S))
    dS[np.arange(B), np.arange(B)] -= 1.0
    dS /= B
    grads = {
        "q": _tower_backward(encoder.q_params, batch.queries, Mq, dS @ P),
        "p": _tower_backward(encoder.p_params, batch.positives, Mp, dS.T @ Q),
    }
    return loss, grads


def grad_batch(encoder: DualEncoder, batch: TrainBatch):
    return loss_and_grad(encoder, batch)[1]


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def step(params: dict, grads: dict, config: TrainConfig, state: AdamState | None = None) -> dict:
    """One optimizer update over a flat ``name -> array`` mapping.

    Adam keeps its moments in ``state`` (updated in place); passing ``None``
    starts from zero moments.
    """
    if set(params) != set(grads):
        raise ShapeMismatch(f"parameter/gradient keys differ: {sorted(params)} vs {sorted(grads)}")
    for name in params:
        if np.shape(params[name]) != np.shape(grads[name]):
            raise ShapeMismatch(f"{name}: {np.shape(params[name])} vs {np.shape(grads[name])}")
    lr = config.learning_rate
    if config.optimizer == "sgd":
        return {k: np.asarray(params[k]) - lr * np.asarray(grads[k]) for k in params}

    state = AdamState() if state is None else state
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1, c2 = 1 - b1**state.t, 1 - b2**state.t
    out = {}
    for k in params:
        g = np.asarray(grads[k], dtype=np.float64)
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += config.eps
        out[k] = np.asarray(params[k]) - lr * (m / c1) / denom
    return out


def _flatten(encoder: DualEncoder) -> dict:
    flat = {f"q_{k}": v for k, v in encoder.q_params.as_dict().items()}
    flat.update({f"p_{k}": v for k, v in encoder.p_params.as_dict().items()})
    return flat


def _unflatten(flat: dict, vocab_hash: str) -> DualEncoder:
    q = EncoderParams.from_dict({k[2:]: v for k, v in flat.items() if k.startswith("q_")})
    p = EncoderParams.from_dict({k[2:]: v for k, v in flat.items() if k.startswith("p_")})
    return DualEncoder(q, p, vocab_hash)


def train_retriever(
    encoder: DualEncoder,
    pairs: Sequence[tuple[TokenSeq, TokenSeq]],
    config: TrainConfig,
) -> tuple[DualEncoder, list[float]]:
    """Train on (query, positive) pairs; returns the encoder and per-epoch mean loss.

    Pairs are reshuffled every epoch from a generator seeded with
    ``config.seed``; the trailing partial batch is dropped.
    """
    B = config.batch_size
    if len(pairs) < B:
        raise TooFewPairs(f"need at least {B} pairs, got {len(pairs)}")
    rng = np.random.default_rng(config.seed)
    flat = _flatten(encoder)
    state = AdamState()
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(pairs) - B + 1, B):
            idx = order[start:start + B]
            batch = TrainBatch([pairs[i][0] for i in idx], [pairs[i][1] for i in idx])
            loss, grads = loss_and_grad(_unflatten(flat, encoder.vocab_hash), batch)
            g = {f"q_{k}": v for k, v in grads["q"].items()}
            g.update({f"p_{k}": v for k, v in grads["p"].items()})
            flat = step(flat, g, config, state)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    if config.epochs == 0:
        return encoder, trace
    return _unflatten(flat, encoder.vocab_hash), trace


def write_loss_trace(trace: Sequence[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(trace, start=1):
            writer.writerow([epoch, repr(float(loss))])

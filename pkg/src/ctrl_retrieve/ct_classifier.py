"""Query -> category classifier that decides which control token to attach.

Multinomial logistic regression over bag-of-token counts, trained by
full-batch gradient descent with L2 regularisation. The confidence used for
thresholding is the maximum softmax probability; below the threshold the
query gets the ``[unk]`` control token instead of a class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyQuestion,
    SingleClassCorpus,
    UnregisteredLabel,
    ValidationError,
    VocabMismatch,
)
from .tokenization import CT_UNKNOWN, TokenSeq, Vocab

CLASSIFIER_VERSION = 1


@dataclass
class ClassifierConfig:
    epochs: int = 1000
    learning_rate: float = 5.0
    l2: float = 1e-4
    holdout: float = 0.2
    seed: int = 42
    tfidf: bool = False


@dataclass(frozen=True)
class ClassifierParams:
    W: np.ndarray  # [vocab_size, C]
    b: np.ndarray  # [C]
    classes: tuple[str, ...]
    vocab_hash: str = ""
    idf: np.ndarray | None = None

    def __post_init__(self):
        if self.W.shape[1] != len(self.classes) or self.b.shape != (len(self.classes),):
            raise ValidationError("classifier shapes do not match the class list")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValidationError("non-finite classifier parameters")

    def check_vocab(self, vocab: Vocab) -> None:
        if self.vocab_hash and self.vocab_hash != vocab.hash:
            raise VocabMismatch("classifier was trained against a different vocabulary")
        if tuple(vocab.ct_classes) != self.classes:
            raise VocabMismatch("classifier classes differ from the vocabulary's control tokens")

    def save(self, path: str | Path) -> None:
        payload = {
            "version": CLASSIFIER_VERSION,
            "classes": list(self.classes),
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "vocab_hash": self.vocab_hash,
        }
        if self.idf is not None:
            payload["idf"] = self.idf.tolist()
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ClassifierParams":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != CLASSIFIER_VERSION:
            raise ValidationError(f"{path}: unsupported classifier version")
        idf = payload.get("idf")
        return cls(
            np.asarray(payload["W"], dtype=np.float64),
            np.asarray(payload["b"], dtype=np.float64),
            tuple(payload["classes"]),
            payload["vocab_hash"],
            None if idf is None else np.asarray(idf, dtype=np.float64),
        )


@dataclass(frozen=True)
class CtDecision:
    predicted_class: str
    max_prob: float
    probs: tuple[float, ...]


def _features(seqs: Sequence[TokenSeq], vocab_size: int, idf: np.ndarray | None) -> np.ndarray:
    X = np.zeros((len(seqs), vocab_size))
    for i, seq in enumerate(seqs):
        np.add.at(X[i], list(seq.ids), 1.0)
    if idf is not None:
        X *= idf
    return X


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def stratified_split(labels: Sequence[str], holdout: float, seed: int) -> tuple[list[int], list[int]]:
    """Seeded per-class split; returns (train_indices, heldout_indices), both sorted."""
    rng = np.random.default_rng(seed)
    train, held = [], []
    for label in sorted(set(labels)):
        idx = np.array([i for i, y in enumerate(labels) if y == label])
        idx = idx[rng.permutation(len(idx))]
        n_held = int(round(holdout * len(idx)))
        if len(idx) > 1:
            n_held = min(max(n_held, 1 if holdout > 0 else 0), len(idx) - 1)
        else:
            n_held = 0
        held.extend(idx[:n_held].tolist())
        train.extend(idx[n_held:].tolist())
    return sorted(train), sorted(held)


def train_classifier(
    examples: Sequence[tuple[TokenSeq, str]],
    vocab: Vocab,
    config: ClassifierConfig | None = None,
) -> tuple[ClassifierParams, float]:
    """Fit on the training part of a stratified split; report held-out accuracy.

    Returns accuracy ``nan`` if the held-out split is empty.
    """
    config = config or ClassifierConfig()
    classes = tuple(vocab.ct_classes)
    labels = [y for _, y in examples]
    for y in labels:
        if y not in classes:
            raise UnregisteredLabel(y)
    if len(set(labels)) < 2:
        raise SingleClassCorpus("classifier needs examples from at least two classes")

    train_idx, held_idx = stratified_split(labels, config.holdout, config.seed)
    V, C = len(vocab), len(classes)
    col = {c: j for j, c in enumerate(classes)}

    idf = None
    if config.tfidf:
        df = np.zeros(V)
        for i in train_idx:
            df[list(set(examples[i][0].ids))] += 1
        idf = np.log((1 + len(train_idx)) / (1 + df)) + 1.0

    X = _features([examples[i][0] for i in train_idx], V, idf)
    Y = np.zeros((len(train_idx), C))
    Y[np.arange(len(train_idx)), [col[labels[i]] for i in train_idx]] = 1.0

    W = np.zeros((V, C))
    b = np.zeros(C)
    n = len(train_idx)
    for _ in range(config.epochs):
        P = _softmax(X @ W + b)
        G = (P - Y) / n
        W -= config.learning_rate * (X.T @ G + config.l2 * W)
        b -= config.learning_rate * G.sum(axis=0)

    params = ClassifierParams(W, b, classes, vocab.hash, idf)
    if not held_idx:
        return params, float("nan")
    correct = sum(
        predict_proba(params, examples[i][0]).predicted_class == labels[i] for i in held_idx
    )
    return params, correct / len(held_idx)


def predict_proba(params: ClassifierParams, question: TokenSeq) -> CtDecision:
    if len(question) == 0:
        raise EmptyQuestion("cannot classify an empty question")
    x = _features([question], params.W.shape[0], params.idf)[0]
    probs = _softmax(x @ params.W + params.b)
    max_prob = float(probs.max())
    predicted = min(c for c, p in zip(params.classes, probs) if p == max_prob)
    return CtDecision(predicted, max_prob, tuple(float(p) for p in probs))


def assign_ct(decision: CtDecision, threshold: float) -> str:
    """The predicted class if its probability reaches ``threshold``, else ``[unk]``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {threshold}")
    return decision.predicted_class if decision.max_prob >= threshold else CT_UNKNOWN

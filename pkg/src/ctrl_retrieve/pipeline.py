"""End-to-end experiment wiring: corpus -> vocab/chunks -> models -> reports.

Base DPR and cDPR share everything (corpus, split, chunking, vocabulary,
initialisation seed, hyperparameters); the only difference is whether
control tokens are composed into the encoder inputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ct_classifier import ClassifierConfig, ClassifierParams, stratified_split, train_classifier
from .data_model import (
    DEFAULT_MAX_CHUNK_TOKENS,
    Chunk,
    MrcRecord,
    chunk_around_answer,
    chunk_for_index,
    unique_documents,
)
from .dual_encoder import DualEncoder, init_dual_encoder
from .errors import ConfigInvalid
from .evaluate import (
    DEFAULT_NS,
    DEFAULT_THRESHOLDS,
    MODE_BASE,
    MODE_CDPR,
    MODE_ORACLE,
    EvalQuery,
    EvalReport,
    top_n_accuracy,
)
from .index_search import (
    CT_CLASSIFIER,
    CT_NONE,
    CT_ORACLE,
    DenseIndex,
    build_index,
    passage_seq,
    retrieve_with_ct,
)
from .synth_corpus import SynthConfig
from .tokenization import CT_UNKNOWN, TokenSeq, Vocab, build_vocab, compose_ct_input, encode_text, register_control_tokens
from .train import TrainConfig, train_retriever

CONFIG_ENV_VAR = "CTRL_RETRIEVE_CONFIG"


@dataclass
class PipelineConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    d_emb: int = 64
    d_out: int = 128
    max_chunk_tokens: int = DEFAULT_MAX_CHUNK_TOKENS
    max_query_tokens: int = 64
    eval_fraction: float = 0.2
    vocab_min_count: int = 2
    query_ct_dropout: float = 0.5
    vocab_max_size: int | None = None
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    top_ns: tuple[int, ...] = DEFAULT_NS

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with every seed (corpus, split, classifier, retriever) set to ``seed``."""
        return dataclasses.replace(
            self,
            synth=dataclasses.replace(self.synth, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
            classifier=dataclasses.replace(self.classifier, seed=seed),
        )

    @property
    def seed(self) -> int:
        return self.train.seed

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        sections = {"synth": SynthConfig, "train": TrainConfig, "classifier": ClassifierConfig}
        kwargs = {}
        try:
            for key, typ in sections.items():
                if key in d:
                    kwargs[key] = typ(**d.pop(key))
            for key in ("thresholds", "top_ns"):
                if key in d:
                    d[key] = tuple(d[key])
            cfg = cls(**kwargs, **d)
        except TypeError as exc:
            raise ConfigInvalid(f"bad config: {exc}") from exc
        cfg.synth.validate()
        return cfg


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Read a JSON or TOML config; falls back to ``$CTRL_RETRIEVE_CONFIG``, then defaults."""
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except ValueError as exc:
        raise ConfigInvalid(f"{path}: cannot parse config ({exc})") from exc
    return PipelineConfig.from_dict(data)


@dataclass
class Corpus:
    """Everything derived from the raw records before any model is trained."""

    vocab: Vocab
    train_records: list[MrcRecord]
    eval_records: list[MrcRecord]
    index_chunks: list[Chunk]
    answer_chunks: dict[str, Chunk]

    @property
    def chunk_store(self) -> dict[str, str]:
        return {c.chunk_id: c.text for c in self.index_chunks}

    def eval_queries(self) -> list[EvalQuery]:
        return [EvalQuery(r.id, r.question, r.answer_text, r.category) for r in self.eval_records]


def split_records(records: Sequence[MrcRecord], eval_fraction: float, seed: int):
    train_idx, eval_idx = stratified_split([r.category for r in records], eval_fraction, seed)
    return [records[i] for i in train_idx], [records[i] for i in eval_idx]


def prepare_corpus(records: Sequence[MrcRecord], cfg: PipelineConfig) -> Corpus:
    records = list(records)
    train_recs, eval_recs = split_records(records, cfg.eval_fraction, cfg.seed)
    docs = unique_documents(records)
    # eval questions stay out of the vocabulary
    texts = [ctx for _, ctx, _ in docs] + [r.question for r in train_recs]
    vocab = build_vocab(texts, cfg.vocab_min_count, cfg.vocab_max_size)
    vocab = register_control_tokens(vocab, sorted({r.category for r in records}))
    index_chunks = []
    for doc_id, ctx, cat in docs:
        index_chunks.extend(chunk_for_index(doc_id, ctx, cat, vocab, cfg.max_chunk_tokens))
    return assemble_corpus(vocab, train_recs, eval_recs, index_chunks, cfg)


def assemble_corpus(
    vocab: Vocab,
    train_records: Sequence[MrcRecord],
    eval_records: Sequence[MrcRecord],
    index_chunks: Sequence[Chunk],
    cfg: PipelineConfig,
) -> Corpus:
    """Rebuild a Corpus from stored pieces; answer chunks are recomputed."""
    answer_chunks = {r.id: chunk_around_answer(r, vocab, cfg.max_chunk_tokens) for r in train_records}
    return Corpus(vocab, list(train_records), list(eval_records), list(index_chunks), answer_chunks)


def question_seq(vocab: Vocab, question: str, cfg: PipelineConfig) -> TokenSeq:
    return encode_text(vocab, question, cfg.max_query_tokens)


def training_pairs(corpus: Corpus, cfg: PipelineConfig, use_ct: bool) -> list[tuple[TokenSeq, TokenSeq]]:
    """(query, positive) pairs.

    With ``use_ct`` passages always get the gold control token; queries get
    it too, except for a seeded ``query_ct_dropout`` fraction that get
    ``[unk]`` instead so the fallback token is trained.
    """
    vocab = corpus.vocab
    rng = np.random.default_rng(cfg.seed)
    drop = rng.random(len(corpus.train_records)) < cfg.query_ct_dropout
    pairs = []
    for r, dropped in zip(corpus.train_records, drop):
        q = question_seq(vocab, r.question, cfg)
        p = passage_seq(vocab, corpus.answer_chunks[r.id], use_ct=False)
        if use_ct:
            q = compose_ct_input(vocab, CT_UNKNOWN if dropped else r.category, q)
            p = compose_ct_input(vocab, r.category, p)
        if len(q) and len(p):
            pairs.append((q, p))
    return pairs


def fit_classifier(corpus: Corpus, cfg: PipelineConfig) -> tuple[ClassifierParams, float]:
    examples = [(question_seq(corpus.vocab, r.question, cfg), r.category) for r in corpus.train_records]
    return train_classifier(examples, corpus.vocab, cfg.classifier)


def fit_retriever(corpus: Corpus, cfg: PipelineConfig, use_ct: bool) -> tuple[DualEncoder, list[float]]:
    # identical init for both modes; only the inputs differ
    enc = init_dual_encoder(len(corpus.vocab), corpus.vocab.hash, cfg.d_emb, cfg.d_out, cfg.seed)
    return train_retriever(enc, training_pairs(corpus, cfg, use_ct), cfg.train)


def evaluate_retrieval(
    corpus: Corpus,
    encoder: DualEncoder,
    index: DenseIndex,
    classifier: ClassifierParams | None,
    cfg: PipelineConfig,
    ct_mode: str,
    threshold: float | None = None,
    mode_name: str | None = None,
) -> tuple[EvalReport, list]:
    k = max(cfg.top_ns)
    results = [
        retrieve_with_ct(
            encoder, classifier, index, corpus.vocab, r.question,
            threshold if threshold is not None else 0.0, k,
            query_id=r.id, ct_mode=ct_mode, gold_ct=r.category,
        )
        for r in corpus.eval_records
    ]
    name = mode_name or {CT_NONE: MODE_BASE, CT_CLASSIFIER: MODE_CDPR, CT_ORACLE: MODE_ORACLE}[ct_mode]
    report = top_n_accuracy(
        results, corpus.eval_queries(), corpus.chunk_store, cfg.top_ns, name,
        threshold if ct_mode == CT_CLASSIFIER else None,
    )
    return report, results


@dataclass
class Experiment:
    """All trained artifacts for one seed."""

    cfg: PipelineConfig
    corpus: Corpus
    classifier: ClassifierParams
    classifier_accuracy: float
    base_encoder: DualEncoder
    cdpr_encoder: DualEncoder
    base_index: DenseIndex
    cdpr_index: DenseIndex
    base_trace: list[float]
    cdpr_trace: list[float]

    def report(self, mode: str, threshold: float | None = None) -> EvalReport:
        if mode == MODE_BASE:
            return evaluate_retrieval(self.corpus, self.base_encoder, self.base_index, None, self.cfg, CT_NONE)[0]
        if mode == MODE_ORACLE:
            return evaluate_retrieval(self.corpus, self.cdpr_encoder, self.cdpr_index, None, self.cfg, CT_ORACLE)[0]
        if mode == MODE_CDPR:
            if threshold is None:
                raise ConfigInvalid("cdpr mode needs a threshold")
            return evaluate_retrieval(
                self.corpus, self.cdpr_encoder, self.cdpr_index, self.classifier, self.cfg,
                CT_CLASSIFIER, threshold,
            )[0]
        raise ConfigInvalid(f"unknown mode {mode!r}")


def run_experiment(records: Sequence[MrcRecord], cfg: PipelineConfig) -> Experiment:
    corpus = prepare_corpus(records, cfg)
    clf, acc = fit_classifier(corpus, cfg)
    base_enc, base_trace = fit_retriever(corpus, cfg, use_ct=False)
    cdpr_enc, cdpr_trace = fit_retriever(corpus, cfg, use_ct=True)
    return Experiment(
        cfg, corpus, clf, acc,
        base_enc, cdpr_enc,
        build_index(base_enc, corpus.index_chunks, corpus.vocab, use_ct=False),
        build_index(cdpr_enc, corpus.index_chunks, corpus.vocab, use_ct=True),
        base_trace, cdpr_trace,
    )


def synthetic_experiment(cfg: PipelineConfig, seed: int | None = None) -> Experiment:
    """Generate the synthetic corpus and train everything for one seed."""
    from .synth_corpus import generate

    if seed is not None:
        cfg = cfg.with_seed(seed)
    records, _ = generate(cfg.synth)
    return run_experiment(records, cfg)

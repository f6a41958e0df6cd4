"""Seeded multi-domain MRC corpus with controllable cross-domain ambiguity.

Every domain owns a private word list and draws from one shared word list
with its own (Dirichlet-skewed) preferences. Each document picks a small
keyword set from both lists and writes its sentences from those keywords. A query
copies words from its target sentence; each query word is taken from the
shared list with probability ``ambiguity_rate``, so at high rates many
queries carry little or no domain-specific signal and surface matching alone
confuses domains. Every sentence carries a unique reference code which
serves as the answer span.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data_model import MrcRecord, validate_record, write_mrc_jsonl
from .errors import ConfigInvalid

CATEGORY_NAMES = (
    "science_technology",
    "public_administration",
    "land_management",
    "finance",
    "health_welfare",
    "education",
    "culture_tourism",
    "environment",
    "transport",
    "industry_energy",
    "agriculture",
)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SynthConfig:
    n_domains: int = 11
    docs_per_domain: int = 50
    sentences_per_doc: int = 8
    queries_per_domain: int = 500
    shared_vocab_size: int = 100
    domain_vocab_size: int = 60
    ambiguity_rate: float = 0.8
    seed: int = 42
    sentence_length: int = 10
    query_length: int = 6
    doc_vocab_size: int = 16
    doc_shared_rate: float = 0.5
    domain_skew: float = 1.0
    cross_domain_overlap: float = 1.0

    def validate(self) -> None:
        counts = (
            "n_domains", "docs_per_domain", "sentences_per_doc", "queries_per_domain",
            "shared_vocab_size", "domain_vocab_size", "sentence_length", "query_length",
            "doc_vocab_size",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")
        for name in ("ambiguity_rate", "doc_shared_rate", "cross_domain_overlap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigInvalid(f"{name} must lie in [0, 1]")
        if self.domain_skew <= 0:
            raise ConfigInvalid("domain_skew must be > 0")


def category_names(n: int) -> list[str]:
    if n <= len(CATEGORY_NAMES):
        return list(CATEGORY_NAMES[:n])
    return list(CATEGORY_NAMES) + [f"domain{i:02d}" for i in range(len(CATEGORY_NAMES), n)]


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        n_syl = int(rng.integers(2, 4))
        w = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syl)
        )
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _draw(rng: np.random.Generator, pool: list[str], k: int) -> list[str]:
    if len(pool) >= k:
        return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]
    return [pool[i] for i in rng.integers(len(pool), size=k)]


def generate(config: SynthConfig) -> tuple[list[MrcRecord], list[str]]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    labels = category_names(config.n_domains)
    taken: set[str] = set()
    shared = _pseudo_words(rng, config.shared_vocab_size, taken)
    private = {lab: _pseudo_words(rng, config.domain_vocab_size, taken) for lab in labels}
    prefs = {
        lab: rng.dirichlet(np.full(len(shared), config.domain_skew)) for lab in labels
    }

    n_sent = config.n_domains * config.docs_per_domain * config.sentences_per_doc
    codes = iter(int(c) for c in rng.choice(900_000, size=n_sent, replace=False) + 100_000)

    # each document draws its words from its own small keyword set:
    # round(doc_shared_rate * doc_vocab_size) shared words, the rest private
    n_doc_sh = int(round(config.doc_shared_rate * config.doc_vocab_size))
    n_doc_pv = config.doc_vocab_size - n_doc_sh
    # document d of every domain copies part of its shared keywords from a
    # common template, so the same shared words recur across domains
    n_tpl = int(round(config.cross_domain_overlap * min(n_doc_sh, len(shared))))
    templates = [
        [int(i) for i in rng.choice(len(shared), size=n_tpl, replace=False)]
        for _ in range(config.docs_per_domain)
    ]
    docs: dict[str, list] = {}
    for lab in labels:
        docs[lab] = []
        for d in range(config.docs_per_domain):
            own = prefs[lab].copy()
            own[templates[d]] = 0.0
            own /= own.sum()
            n_own = min(n_doc_sh, len(shared)) - n_tpl
            kw_sh = [shared[i] for i in templates[d]] + [
                shared[i] for i in rng.choice(len(shared), size=n_own, replace=False, p=own)]
            kw_pv = _draw(rng, private[lab], n_doc_pv)
            parts, sents, pos = [], [], 0
            for _ in range(config.sentences_per_doc):
                is_shared = rng.random(config.sentence_length) < config.doc_shared_rate
                if not kw_sh:
                    is_shared[:] = False
                if not kw_pv:
                    is_shared[:] = True
                n_sh = int(is_shared.sum())
                sh = [kw_sh[i] for i in rng.integers(len(kw_sh), size=n_sh)] if n_sh else []
                n_pv = config.sentence_length - n_sh
                pv = [kw_pv[i] for i in rng.integers(len(kw_pv), size=n_pv)] if n_pv else []
                toks = sh + pv
                toks = [toks[i] for i in rng.permutation(len(toks))]
                code = f"ref{next(codes)}"
                toks.insert(int(rng.integers(1, len(toks) + 1)), code)
                sentence = " ".join(toks).capitalize() + "."
                parts.append(sentence)
                code_at = pos + sentence.index(code)
                sents.append((code_at, code, sorted(set(sh)), sorted(set(pv))))
                pos += len(sentence) + 1
            docs[lab].append((" ".join(parts), sents))

    records = []
    for lab in labels:
        for q in range(config.queries_per_domain):
            d = int(rng.integers(config.docs_per_domain))
            text, sents = docs[lab][d]
            code_at, code, sh, pv = sents[int(rng.integers(len(sents)))]
            is_shared = rng.random(config.query_length) < config.ambiguity_rate
            n_sh = int(is_shared.sum())
            q_sh = _draw(rng, sh, n_sh) if sh else []
            if len(q_sh) < n_sh:
                q_sh += [shared[i] for i in rng.choice(len(shared), size=n_sh - len(q_sh), p=prefs[lab])]
            n_pv = config.query_length - n_sh
            q_pv = _draw(rng, pv, n_pv) if pv else _draw(rng, private[lab], n_pv)
            toks = q_sh + q_pv
            toks = [toks[i] for i in rng.permutation(len(toks))]
            rec = MrcRecord(
                id=f"{lab}-q{q:04d}",
                question=" ".join(toks).capitalize() + "?",
                context=text,
                answer_text=code,
                category=lab,
                answer_char_start=code_at,
                doc_id=f"{lab}-d{d:03d}",
            )
            records.append(validate_record(rec))
    return records, labels


def write_corpus(records: list[MrcRecord], config: SynthConfig, out_dir: str | Path) -> None:
    """Write ``corpus.jsonl`` plus a ``manifest.json`` recording the config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_mrc_jsonl(records, out_dir / "corpus.jsonl")
    manifest = {"generator": "synth_corpus", "config": asdict(config), "n_records": len(records)}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

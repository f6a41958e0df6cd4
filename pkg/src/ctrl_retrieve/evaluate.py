"""Top-N answer-containment accuracy and the DPR vs cDPR report tables."""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy.stats import spearmanr

from .errors import MissingQuery, ValidationError
from .index_search import RetrievalResult

DEFAULT_NS = (1, 5, 10, 15, 20)
DEFAULT_THRESHOLDS = (0.0, 0.5, 0.7, 0.9)
MISS = math.inf

MODE_BASE, MODE_CDPR, MODE_ORACLE = "dpr_base", "cdpr", "cdpr_oracle_ct"

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class EvalQuery:
    query_id: str
    question: str
    answer_text: str
    gold_category: str

    def __post_init__(self):
        if not self.answer_text:
            raise ValidationError(f"query {self.query_id!r}: empty answer_text")


@dataclass
class EvalReport:
    mode: str
    threshold: float | None
    top_n_accuracy: dict[int, float]
    per_query_hits: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "threshold": self.threshold,
            "top_n_accuracy": {str(n): a for n, a in sorted(self.top_n_accuracy.items())},
            # JSON has no infinity; a miss is written as null
            "per_query_hits": {
                q: (None if r == MISS else int(r)) for q, r in sorted(self.per_query_hits.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            d["mode"],
            d["threshold"],
            {int(n): a for n, a in d["top_n_accuracy"].items()},
            {q: (MISS if r is None else r) for q, r in d["per_query_hits"].items()},
        )


def _norm(text: str) -> str:
    return _WS.sub(" ", unicodedata.normalize("NFC", text).lower()).strip()


def contains_answer(chunk_text: str, answer_text: str) -> bool:
    answer = _norm(answer_text)
    if not answer:
        raise ValidationError("answer_text is empty after normalisation")
    return answer in _norm(chunk_text)


def first_hit_rank(result: RetrievalResult, answer_text: str, chunk_store: Mapping[str, str]) -> float:
    for rank, (chunk_id, _) in enumerate(result.ranked, start=1):
        if contains_answer(chunk_store[chunk_id], answer_text):
            return rank
    return MISS


def top_n_accuracy(
    results: Sequence[RetrievalResult],
    queries: Sequence[EvalQuery],
    chunk_store: Mapping[str, str],
    ns: Sequence[int] = DEFAULT_NS,
    mode: str = "cdpr",
    threshold: float | None = None,
) -> EvalReport:
    by_id = {r.query_id: r for r in results}
    hits: dict[str, float] = {}
    for q in queries:
        if q.query_id not in by_id:
            raise MissingQuery(q.query_id)
        hits[q.query_id] = first_hit_rank(by_id[q.query_id], q.answer_text, chunk_store)
    total = len(queries)
    if any(n < 1 for n in ns):
        raise ValidationError("every N must be >= 1")
    acc = {
        n: (sum(1 for r in hits.values() if r <= n) / total if total else 0.0)
        for n in sorted(set(ns))
    }
    return EvalReport(mode, threshold, acc, hits)


def _pct(x: float) -> str:
    return f"{100 * x:.1f}%"


def format_table(columns: Sequence[tuple[str, EvalReport]], ns: Sequence[int] = DEFAULT_NS) -> str:
    """Aligned text table: one row per Top-N, one column per report."""
    header = [""] + [name for name, _ in columns]
    rows = [[f"Top{n}"] + [_pct(rep.top_n_accuracy[n]) for _, rep in columns] for n in ns]
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = []
    for r in [header] + rows:
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def delta_table(base: EvalReport, cdpr: EvalReport, ns: Sequence[int] = DEFAULT_NS) -> str:
    header = ["", "DPR base", "cDPR", "delta (pts)"]
    rows = []
    for n in ns:
        b, c = base.top_n_accuracy[n], cdpr.top_n_accuracy[n]
        rows.append([f"Top{n}", _pct(b), _pct(c), f"{100 * (c - b):+.1f}"])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(4)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def threshold_label(t: float) -> str:
    return f">= {t:g}"


class ReportSource(Protocol):
    """Anything that can evaluate a retrieval mode, e.g. a trained experiment."""

    def report(self, mode: str, threshold: float | None = None) -> EvalReport: ...


def run_comparison(
    source: ReportSource, threshold: float = 0.9, ns: Sequence[int] = DEFAULT_NS
) -> tuple[EvalReport, EvalReport, str]:
    """Base DPR vs cDPR at one classifier threshold, plus the side-by-side delta table."""
    base = source.report(MODE_BASE)
    cdpr = source.report(MODE_CDPR, threshold)
    return base, cdpr, delta_table(base, cdpr, ns)


def threshold_sweep(
    source: ReportSource,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    ns: Sequence[int] = DEFAULT_NS,
) -> tuple[list[EvalReport], str]:
    """cDPR evaluated at each threshold; only the control-token decision changes."""
    reports = [source.report(MODE_CDPR, t) for t in thresholds]
    table = format_table([(threshold_label(t), r) for t, r in zip(thresholds, reports)], ns)
    return reports, table


def mean_accuracy(reports: Sequence[EvalReport]) -> dict[int, float]:
    """Per-N mean over reports (e.g. over seeds)."""
    ns = sorted(reports[0].top_n_accuracy)
    return {n: float(np.mean([r.top_n_accuracy[n] for r in reports])) for n in ns}


def threshold_trend(thresholds: Sequence[float], top1: Sequence[float]) -> float:
    """Spearman rank correlation between threshold and Top-1; 0 when Top-1 is constant."""
    if len(set(top1)) < 2:
        return 0.0
    return float(spearmanr(thresholds, top1).statistic)


def format_seed_table(
    columns: Sequence[tuple[str, Sequence[EvalReport]]], ns: Sequence[int] = DEFAULT_NS
) -> str:
    """Like ``format_table`` but each cell is mean +/- spread (max - min) over seeds."""
    header = [""] + [name for name, _ in columns]
    rows = []
    for n in ns:
        row = [f"Top{n}"]
        for _, reps in columns:
            vals = [100 * r.top_n_accuracy[n] for r in reps]
            row.append(f"{np.mean(vals):.1f} +/- {max(vals) - min(vals):.1f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"

"""Command-line entry point.

Every stage reads and writes fixed file names inside ``--workdir``::

    gen               corpus.jsonl, manifest.json
    ingest            vocab.json, chunks.jsonl, splits.json
    train-classifier  classifier.json, reports/classifier.json
    train-retriever   encoder_{base,cdpr}.npz, loss_{base,cdpr}.csv
    index             index_{base,cdpr}.npz
    classify          prints the classifier decision
    search            prints ranked chunks
    eval              reports/eval_<mode>[_t<T>].{json,txt}
    sweep             reports/sweep.{json,txt}
    compare           reports/dpr_base.json, reports/cdpr.json, reports/delta.txt

Each invocation appends one line to ``runs.jsonl``. Exit codes: 0 ok,
2 configuration error, 3 missing artifact, 4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .ct_classifier import ClassifierParams, assign_ct, predict_proba
from .data_model import load_chunks_jsonl, load_mrc_jsonl, write_chunks_jsonl
from .dual_encoder import DualEncoder
from .errors import ArtifactMissing, CheckpointMissing, ConfigInvalid, CtrlRetrieveError, ValidationError
from .evaluate import (
    MODE_BASE,
    MODE_CDPR,
    MODE_ORACLE,
    EvalReport,
    format_table,
    run_comparison,
    threshold_label,
    threshold_sweep,
)
from .index_search import CT_CLASSIFIER, CT_NONE, CT_ORACLE, DenseIndex, build_index, retrieve_with_ct
from .pipeline import (
    Corpus,
    PipelineConfig,
    assemble_corpus,
    evaluate_retrieval,
    fit_classifier,
    fit_retriever,
    load_config,
    prepare_corpus,
    question_seq,
)
from .synth_corpus import generate, write_corpus
from .tokenization import Vocab
from .train import write_loss_trace

# CLI mode name -> (checkpoint suffix, control-token source, report mode)
MODES = {
    "base": ("base", CT_NONE, MODE_BASE),
    "cdpr": ("cdpr", CT_CLASSIFIER, MODE_CDPR),
    "oracle-ct": ("cdpr", CT_ORACLE, MODE_ORACLE),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigInvalid(f"{self.prog}: {message}")


# ---------------------------------------------------------------- workdir access


class Workdir:
    """Typed access to the artifacts of one pipeline run."""

    def __init__(self, root: str | Path, cfg: PipelineConfig):
        self.root = Path(root)
        self.cfg = cfg
        self._corpus: Corpus | None = None

    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, name: str, hint: str, error=ArtifactMissing) -> Path:
        p = self.path(name)
        if not p.exists():
            raise error(f"{p} not found; run `ctrl-retrieve {hint}` first")
        return p

    def records(self, corpus_path: str | Path | None = None):
        path = Path(corpus_path) if corpus_path else self.require("corpus.jsonl", "gen")
        if not path.exists():
            raise ArtifactMissing(f"{path} not found")
        return load_mrc_jsonl(path)

    def corpus(self) -> Corpus:
        if self._corpus is None:
            vocab = Vocab.load(self.require("vocab.json", "ingest"))
            splits = json.loads(self.require("splits.json", "ingest").read_text())
            by_id = {r.id: r for r in load_mrc_jsonl(self.path(splits["corpus"]))}
            try:
                train = [by_id[i] for i in splits["train"]]
                held = [by_id[i] for i in splits["eval"]]
            except KeyError as exc:
                raise ValidationError(f"splits.json names unknown record {exc}") from exc
            chunks = load_chunks_jsonl(self.require("chunks.jsonl", "ingest"))
            self._corpus = assemble_corpus(vocab, train, held, chunks, self.cfg)
        return self._corpus

    def classifier(self) -> ClassifierParams:
        return ClassifierParams.load(self.require("classifier.json", "train-classifier", CheckpointMissing))

    def encoder(self, suffix: str) -> DualEncoder:
        hint = f"train-retriever --mode {suffix}"
        return DualEncoder.load(self.require(f"encoder_{suffix}.npz", hint, CheckpointMissing))

    def index(self, suffix: str) -> DenseIndex:
        return DenseIndex.load(self.require(f"index_{suffix}.npz", f"index --mode {suffix}"))

    def report(self, mode: str, threshold: float | None = None) -> EvalReport:
        """Evaluate one mode from stored artifacts (satisfies evaluate.ReportSource)."""
        cli_mode = {MODE_BASE: "base", MODE_CDPR: "cdpr", MODE_ORACLE: "oracle-ct"}[mode]
        suffix, ct_mode, _ = MODES[cli_mode]
        clf = self.classifier() if ct_mode == CT_CLASSIFIER else None
        return evaluate_retrieval(
            self.corpus(), self.encoder(suffix), self.index(suffix), clf, self.cfg, ct_mode, threshold,
        )[0]

    def write_report(self, stem: str, report_json: dict | list, text: str) -> None:
        out = self.path("reports")
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(json.dumps(report_json, indent=2, sort_keys=True) + "\n")
        (out / f"{stem}.txt").write_text(text)


# ---------------------------------------------------------------- commands


def cmd_gen(wd: Workdir, args) -> None:
    records, labels = generate(wd.cfg.synth)
    write_corpus(records, wd.cfg.synth, wd.root)
    print(f"wrote {len(records)} records over {len(labels)} domains to {wd.path('corpus.jsonl')}")


def cmd_ingest(wd: Workdir, args) -> None:
    src = Path(args.corpus) if args.corpus else wd.require("corpus.jsonl", "gen")
    records = wd.records(src)
    corpus = prepare_corpus(records, wd.cfg)
    corpus.vocab.save(wd.path("vocab.json"))
    write_chunks_jsonl(corpus.index_chunks, wd.path("chunks.jsonl"))
    stored = src.resolve()
    if stored.parent != wd.root.resolve():
        # keep the workdir self-contained
        (wd.root / "corpus.jsonl").write_bytes(src.read_bytes())
    splits = {
        "corpus": "corpus.jsonl",
        "seed": wd.cfg.seed,
        "train": [r.id for r in corpus.train_records],
        "eval": [r.id for r in corpus.eval_records],
    }
    wd.path("splits.json").write_text(json.dumps(splits, indent=1) + "\n")
    print(
        f"vocab {len(corpus.vocab)} tokens, {len(corpus.index_chunks)} index chunks, "
        f"{len(corpus.train_records)} train / {len(corpus.eval_records)} eval queries"
    )


def cmd_train_classifier(wd: Workdir, args) -> None:
    params, acc = fit_classifier(wd.corpus(), wd.cfg)
    params.save(wd.path("classifier.json"))
    wd.write_report("classifier", {"heldout_accuracy": acc, "classes": list(params.classes)},
                    f"classifier held-out accuracy: {acc:.3f}\n")
    print(f"classifier held-out accuracy {acc:.3f}")


def cmd_train_retriever(wd: Workdir, args) -> None:
    suffix = args.mode
    encoder, trace = fit_retriever(wd.corpus(), wd.cfg, use_ct=(suffix == "cdpr"))
    encoder.save(wd.path(f"encoder_{suffix}.npz"))
    write_loss_trace(trace, wd.path(f"loss_{suffix}.csv"))
    last = f"{trace[-1]:.4f}" if trace else "n/a"
    print(f"trained {suffix} retriever for {len(trace)} epochs, final loss {last}")


def cmd_index(wd: Workdir, args) -> None:
    suffix = args.mode
    corpus = wd.corpus()
    index = build_index(wd.encoder(suffix), corpus.index_chunks, corpus.vocab, use_ct=(suffix == "cdpr"))
    index.save(wd.path(f"index_{suffix}.npz"))
    print(f"indexed {len(index)} chunks into {wd.path(f'index_{suffix}.npz')}")


def cmd_search(wd: Workdir, args) -> None:
    suffix, ct_mode, _ = MODES[args.mode]
    if ct_mode == CT_ORACLE and not args.gold_ct:
        raise ConfigInvalid("--mode oracle-ct needs --gold-ct")
    vocab = Vocab.load(wd.require("vocab.json", "ingest"))
    clf = wd.classifier() if ct_mode == CT_CLASSIFIER else None
    res = retrieve_with_ct(
        wd.encoder(suffix), clf, wd.index(suffix), vocab, args.question, args.threshold, args.k,
        ct_mode=ct_mode, gold_ct=args.gold_ct,
    )
    store = {c.chunk_id: c.text for c in load_chunks_jsonl(wd.require("chunks.jsonl", "ingest"))}
    print(f"assigned CT: {res.assigned_ct if res.assigned_ct is not None else '(none)'}")
    for rank, (cid, score) in enumerate(res.ranked, start=1):
        snippet = store[cid] if len(store[cid]) <= 80 else store[cid][:77] + "..."
        print(f"{rank:>3}  {score:10.4f}  {cid}  {snippet}")


def cmd_classify(wd: Workdir, args) -> None:
    vocab = Vocab.load(wd.require("vocab.json", "ingest"))
    params = wd.classifier()
    decision = predict_proba(params, question_seq(vocab, args.question, wd.cfg))
    ct = assign_ct(decision, args.threshold)
    print(f"predicted {decision.predicted_class}  max_prob {decision.max_prob:.4f}  assigned CT {ct}")
    for label, p in zip(params.classes, decision.probs):
        print(f"  {label:<16} {p:.4f}")


def _report_stem(args) -> str:
    return f"eval_{args.mode}" + (f"_t{args.threshold:g}" if args.mode == "cdpr" else "")


def cmd_eval(wd: Workdir, args) -> None:
    _, _, mode = MODES[args.mode]
    report = wd.report(mode, args.threshold if mode == MODE_CDPR else None)
    label = mode if mode != MODE_CDPR else f"{mode} ({threshold_label(args.threshold)})"
    text = format_table([(label, report)], wd.cfg.top_ns)
    wd.write_report(_report_stem(args), report.to_dict(), text)
    print(text, end="")


def cmd_sweep(wd: Workdir, args) -> None:
    thresholds = tuple(args.thresholds) if args.thresholds else wd.cfg.thresholds
    reports, table = threshold_sweep(wd, thresholds, wd.cfg.top_ns)
    wd.write_report("sweep", [r.to_dict() for r in reports], table)
    print(table, end="")


def cmd_compare(wd: Workdir, args) -> None:
    for suffix in ("base", "cdpr"):
        wd.require(f"encoder_{suffix}.npz", f"train-retriever --mode {suffix}", CheckpointMissing)
    wd.require("classifier.json", "train-classifier", CheckpointMissing)
    base, cdpr, table = run_comparison(wd, args.threshold, wd.cfg.top_ns)
    out = wd.path("reports")
    out.mkdir(parents=True, exist_ok=True)
    (out / "dpr_base.json").write_text(base.to_json() + "\n")
    (out / "cdpr.json").write_text(cdpr.to_json() + "\n")
    (out / "delta.txt").write_text(table)
    print(table, end="")


COMMANDS = {
    "gen": (cmd_gen, "generate the synthetic multi-domain corpus"),
    "ingest": (cmd_ingest, "validate a corpus, build the vocabulary, chunks and splits"),
    "train-classifier": (cmd_train_classifier, "train the query -> category classifier"),
    "train-retriever": (cmd_train_retriever, "train a dual encoder (base or cdpr)"),
    "index": (cmd_index, "encode all chunks into a dense index"),
    "classify": (cmd_classify, "classifier decision and assigned CT for one question"),
    "search": (cmd_search, "retrieve the top-k chunks for one question"),
    "eval": (cmd_eval, "Top-N accuracy of one mode on the held-out queries"),
    "sweep": (cmd_sweep, "cDPR Top-N accuracy at each classifier threshold"),
    "compare": (cmd_compare, "base DPR vs cDPR side by side"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--workdir", default=".", help="directory holding all artifacts (default: .)")
    common.add_argument("--config", help="JSON or TOML config file (default: $CTRL_RETRIEVE_CONFIG, else built-in defaults)")
    common.add_argument("--seed", type=int, help="override every seed in the config")

    parser = _Parser(prog="ctrl-retrieve", description="Dense retrieval with control tokens.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subs = {name: sub.add_parser(name, parents=[common], help=text, description=text)
            for name, (_, text) in COMMANDS.items()}

    subs["ingest"].add_argument("--corpus", help="MRC JSONL to ingest (default: <workdir>/corpus.jsonl)")
    for name in ("train-retriever", "index"):
        subs[name].add_argument("--mode", choices=("base", "cdpr"), required=True,
                                help="base: no control tokens anywhere; cdpr: control tokens on both sides")
    subs["classify"].add_argument("--question", required=True, help="question text")
    subs["classify"].add_argument("--threshold", type=float, default=0.9,
                                  help="classifier confidence needed to attach a class CT (default: 0.9)")
    for name in ("search", "eval"):
        subs[name].add_argument("--mode", choices=tuple(MODES), default="cdpr",
                                help="base DPR, cDPR with classifier CT, or cDPR with gold CT (default: cdpr)")
        subs[name].add_argument("--threshold", type=float, default=0.9,
                                help="classifier confidence needed to attach a class CT (default: 0.9)")
    subs["search"].add_argument("--question", required=True, help="question text")
    subs["search"].add_argument("--k", type=int, default=5, help="number of chunks to return (default: 5)")
    subs["search"].add_argument("--gold-ct", help="category to use as CT in oracle-ct mode")
    subs["sweep"].add_argument("--thresholds", type=float, nargs="+",
                               help="thresholds to evaluate (default: from config)")
    subs["compare"].add_argument("--threshold", type=float, default=0.9,
                                 help="classifier threshold for the cDPR column (default: 0.9)")
    return parser


def _versions() -> dict:
    return {
        "ctrl_retrieve": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _append_run(root: Path, entry: dict) -> None:
    if not root.is_dir():
        return
    with open(root / "runs.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return ConfigInvalid.exit_code
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        root = Path(args.workdir)
        root.mkdir(parents=True, exist_ok=True)
    except CtrlRetrieveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    wd = Workdir(root, cfg)
    code = 0
    try:
        COMMANDS[args.command][0](wd, args)
    except CtrlRetrieveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    _append_run(root, {
        "command": args.command,
        "argv": argv,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "versions": _versions(),
        "exit_code": code,
        "time": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })
    return code


if __name__ == "__main__":
    sys.exit(main())

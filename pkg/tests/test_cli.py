import json

import pytest

from ctrl_retrieve.cli import main

TINY = {
    "synth": {"n_domains": 3, "docs_per_domain": 4, "sentences_per_doc": 3, "queries_per_domain": 20,
              "shared_vocab_size": 30, "domain_vocab_size": 15},
    "train": {"batch_size": 4, "epochs": 2},
    "classifier": {"epochs": 20},
    "d_emb": 8,
    "d_out": 8,
}


@pytest.fixture
def workdir(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    return tmp_path / "work", ["--workdir", str(tmp_path / "work"), "--config", str(cfg)]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def full_pipeline(capsys, common):
    for cmd in (["gen"], ["ingest"], ["train-classifier"],
                ["train-retriever", "--mode", "base"], ["train-retriever", "--mode", "cdpr"],
                ["index", "--mode", "base"], ["index", "--mode", "cdpr"]):
        code, _, err = run(capsys, *cmd, *common)
        assert code == 0, (cmd, err)


def test_end_to_end(workdir, capsys):
    root, common = workdir
    full_pipeline(capsys, common)
    code, out, _ = run(capsys, "compare", *common)
    assert code == 0 and "Top20" in out
    for name in ("dpr_base.json", "cdpr.json", "delta.txt"):
        assert (root / "reports" / name).exists()

    code, out, _ = run(capsys, "search", "--question", "anything at all", "--k", "5", *common)
    lines = out.splitlines()
    assert code == 0 and lines[0].startswith("assigned CT:") and len(lines) == 6

    code, out, _ = run(capsys, "classify", "--question", "anything at all", "--threshold", "0", *common)
    first = out.splitlines()[0]
    assert code == 0 and first.startswith("predicted") and "[unk]" not in first

    code, out, _ = run(capsys, "sweep", *common)
    assert code == 0 and ">= 0.9" in out
    assert len(json.loads((root / "reports" / "sweep.json").read_text())) == 4

    code, _, _ = run(capsys, "eval", "--mode", "oracle-ct", *common)
    assert code == 0 and (root / "reports" / "eval_oracle-ct.json").exists()

    runs = [json.loads(line) for line in (root / "runs.jsonl").read_text().splitlines()]
    assert {"config_hash", "seed", "versions"} <= set(runs[-1])


def test_rerun_is_byte_identical(workdir, capsys):
    root, common = workdir
    full_pipeline(capsys, common)
    run(capsys, "compare", *common)
    names = ["vocab.json", "chunks.jsonl", "classifier.json", "encoder_cdpr.npz", "index_cdpr.npz",
             "loss_base.csv", "reports/cdpr.json", "reports/delta.txt"]
    before = {n: (root / n).read_bytes() for n in names}
    full_pipeline(capsys, common)
    run(capsys, "compare", *common)
    assert {n: (root / n).read_bytes() for n in names} == before


def test_compare_without_checkpoints_exits_3(workdir, capsys):
    _, common = workdir
    run(capsys, "gen", *common)
    run(capsys, "ingest", *common)
    code, _, err = run(capsys, "compare", *common)
    assert code == 3 and "train-retriever" in err


def test_config_errors_exit_2(workdir, capsys):
    _, common = workdir
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "eval", "--no-such-flag", *common)[0] == 2
    assert run(capsys, "gen", "--config", "/nonexistent.toml")[0] == 2
    assert run(capsys)[0] == 2


def test_invalid_corpus_exits_4(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "question": "q", "context": "c.", "answer_text": "zzz", "category": "x"}\n')
    code, _, err = run(capsys, "ingest", "--corpus", str(bad), "--workdir", str(tmp_path / "w"))
    assert code == 4 and "answer_text" in err


def test_help_lists_every_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["search", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--workdir", "--config", "--seed", "--mode", "--threshold", "--question", "--k", "--gold-ct"):
        assert flag in out

import pytest

from ctrl_retrieve.errors import ConfigInvalid
from ctrl_retrieve.evaluate import MODE_BASE, MODE_ORACLE, run_comparison, threshold_sweep, threshold_trend
from ctrl_retrieve.pipeline import (
    CONFIG_ENV_VAR,
    PipelineConfig,
    load_config,
    prepare_corpus,
    run_experiment,
    training_pairs,
)
from ctrl_retrieve.synth_corpus import SynthConfig, generate

SMALL = dict(n_domains=3, docs_per_domain=4, sentences_per_doc=3, queries_per_domain=20,
             shared_vocab_size=30, domain_vocab_size=15)


def small_cfg(**kw):
    return PipelineConfig.from_dict({
        "synth": SMALL, "train": {"batch_size": 4, "epochs": 2}, "classifier": {"epochs": 20},
        "d_emb": 8, "d_out": 8, **kw,
    })


def test_config_from_toml_and_env(tmp_path, monkeypatch):
    path = tmp_path / "c.toml"
    path.write_text("d_emb = 16\n[train]\nepochs = 3\n[synth]\nn_domains = 4\n")
    cfg = load_config(path)
    assert cfg.d_emb == 16 and cfg.train.epochs == 3 and cfg.synth.n_domains == 4
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    assert load_config().hash == cfg.hash
    monkeypatch.delenv(CONFIG_ENV_VAR)
    assert load_config().hash == PipelineConfig().hash


def test_config_errors(tmp_path):
    with pytest.raises(ConfigInvalid):
        PipelineConfig.from_dict({"no_such_key": 1})
    with pytest.raises(ConfigInvalid):
        PipelineConfig.from_dict({"synth": {"ambiguity_rate": 2.0}})
    bad = tmp_path / "c.json"
    bad.write_text("{oops")
    with pytest.raises(ConfigInvalid):
        load_config(bad)


def test_with_seed_sets_every_seed():
    cfg = PipelineConfig().with_seed(7)
    assert cfg.synth.seed == cfg.train.seed == cfg.classifier.seed == 7


def test_training_pairs_ct_layout():
    cfg = small_cfg(query_ct_dropout=0.5)
    records, _ = generate(cfg.synth)
    corpus = prepare_corpus(records, cfg)
    vocab = corpus.vocab
    plain = training_pairs(corpus, cfg, use_ct=False)
    ct = training_pairs(corpus, cfg, use_ct=True)
    reserved = set(vocab.ct_ids.values()) | {vocab.ct_unknown_id}
    assert not any(set(q.ids) & reserved or set(p.ids) & reserved for q, p in plain)
    for (q0, p0), (q1, p1), rec in zip(plain, ct, corpus.train_records):
        assert p1.ids == (vocab.ct_ids[rec.category],) + p0.ids
        assert q1.ids[1:] == q0.ids and q1.ids[0] in (vocab.ct_ids[rec.category], vocab.ct_unknown_id)
    assert any(q.ids[0] == vocab.ct_unknown_id for q, _ in ct)


def test_eval_questions_stay_out_of_vocab():
    cfg = small_cfg(vocab_min_count=1)
    records, _ = generate(cfg.synth)
    corpus = prepare_corpus(records, cfg)
    assert set(corpus.eval_records).isdisjoint(corpus.train_records)
    assert len(corpus.eval_records) == round(0.2 * 20) * 3


def test_small_experiment_is_deterministic():
    cfg = small_cfg()
    records, _ = generate(cfg.synth)
    a, b = run_experiment(records, cfg), run_experiment(records, cfg)
    assert a.report(MODE_BASE).to_json() == b.report(MODE_BASE).to_json()
    base, cdpr, table = run_comparison(a, 0.9)
    assert base.mode == "dpr_base" and cdpr.threshold == 0.9 and "delta" in table
    reports, grid = threshold_sweep(a, (0.0, 0.9))
    assert [r.threshold for r in reports] == [0.0, 0.9] and ">= 0.9" in grid
    assert a.report(MODE_ORACLE).threshold is None
    with pytest.raises(ConfigInvalid):
        a.report("cdpr")


def test_threshold_trend():
    assert threshold_trend([0, 0.5, 0.7, 0.9], [0.1, 0.2, 0.3, 0.4]) == pytest.approx(1.0)
    assert threshold_trend([0, 0.5, 0.7, 0.9], [0.3] * 4) == 0.0

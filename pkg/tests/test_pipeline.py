import numpy as np
import pytest

from jointseg.data import SyntheticConfig, generate_synthetic_corpus, split_records
from jointseg.joint import decode, predict_vector
from jointseg.pipeline import (CHECKPOINT_VERSION, RunConfig, baseline_segment, evaluate_records,
                               fit_joint, fit_proposals, fit_semicrf_baseline, gold_vector_eval,
                               load_checkpoint, load_config, parse_grid, save_checkpoint, segment_words)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert (cfg.m_train, cfg.m_decode, cfg.k, cfg.folds) == (10, 10000, 5, 10)
        assert cfg.train_config().samples == 10 and cfg.proposal_config().insertion_limit == 5

    def test_file_then_overrides(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text("[run]\nkind = LDS\nm-decode = 500\noracle_ur = yes\nsigma2 = 0.25\n", encoding="utf-8")
        cfg = load_config(p, {"m_decode": "20"})
        assert cfg.kind == "LDS" and cfg.oracle_ur is True and cfg.sigma2 == 0.25
        assert cfg.m_decode == 20

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text("[run]\nlearning_rate = 3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="unknown"):
            load_config(p)

    def test_bad_boolean(self):
        with pytest.raises(ValueError):
            load_config(overrides={"use_vectors": "maybe"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.ini")

    def test_parse_grid(self):
        assert parse_grid(RunConfig().l2_grid) == (0.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0)
        assert parse_grid("0.5, 1,") == (0.5, 1.0)


@pytest.fixture(scope="module")
def trained():
    corpus = generate_synthetic_corpus(SyntheticConfig(stems=25, seed=3))
    train, dev, test = split_records(corpus.records, (0.7, 0.15, 0.15), 0)
    cfg = RunConfig(kind="add", epochs=2, proposal_epochs=3, m_dev=40, m_decode=60, seed=1)
    proposals = fit_proposals(train, cfg)
    params = fit_joint(train, dev, corpus.table, proposals, cfg)
    return corpus, train, test, cfg, proposals, params


class TestCheckpoint:
    def test_joint_round_trip(self, trained, tmp_path):
        corpus, _, test, cfg, proposals, params = trained
        save_checkpoint(tmp_path / "m.npz", cfg, proposals, params)
        cfg2, prop2, params2 = load_checkpoint(tmp_path / "m.npz")
        assert cfg2 == cfg
        for r in test[:5]:
            v = corpus.table.lookup(r.surface)
            assert decode(r.surface, v, params2, prop2, 80, 4) == decode(r.surface, v, params, proposals, 80, 4)
            np.testing.assert_allclose(predict_vector(r.surface, params2, prop2, 80, 4),
                                       predict_vector(r.surface, params, proposals, 80, 4), atol=1e-12)
        for w in list(corpus.table)[:5]:
            np.testing.assert_array_equal(params2.morphemes.table.lookup(w), corpus.table.lookup(w))

    def test_proposals_only(self, trained, tmp_path):
        _, _, _, cfg, proposals, _ = trained
        save_checkpoint(tmp_path / "p.npz", cfg, proposals)
        _, prop2, params2 = load_checkpoint(tmp_path / "p.npz")
        assert params2 is None
        np.testing.assert_array_equal(prop2.q1.weights.active, proposals.q1.weights.active)
        assert prop2.q2.labels == proposals.q2.labels

    def test_version_is_checked(self, trained, tmp_path, monkeypatch):
        _, _, _, cfg, proposals, _ = trained
        import jointseg.pipeline as pl
        monkeypatch.setattr(pl, "CHECKPOINT_VERSION", CHECKPOINT_VERSION + 1)
        save_checkpoint(tmp_path / "p.npz", cfg, proposals)
        monkeypatch.undo()
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(tmp_path / "p.npz")


class TestRuns:
    def test_segment_words_is_order_independent(self, trained):
        corpus, _, test, cfg, proposals, params = trained
        words = [r.surface for r in test[:6]]
        fwd = segment_words(words, corpus.table, params, proposals, cfg)
        again = segment_words(words, corpus.table, params, proposals, cfg)
        assert fwd == again

    def test_oracle_mode_keeps_gold_underlying_forms(self, trained):
        corpus, _, test, cfg, proposals, params = trained
        ocfg = RunConfig(**{**cfg.to_dict(), "oracle_ur": True})
        _, preds = evaluate_records(test, corpus.table, params, proposals, ocfg)
        assert [p.u for p in preds] == [r.u for r in test]

    def test_semicrf_baseline_segments_surface(self, trained):
        _, train, test, cfg, _, _ = trained
        q2 = fit_semicrf_baseline(train, cfg)
        preds = baseline_segment([r.surface for r in test], q2)
        assert all(p.u == r.surface for p, r in zip(preds, test))

    def test_gold_vector_eval_reports_affixes(self, trained):
        from jointseg import composition as comp
        corpus, train, _, _, _, _ = trained
        model = comp.CompositionModel("add", corpus.table.dim)
        store = comp.make_morpheme_store(model, corpus.table)
        ve, tags = gold_vector_eval(train, corpus.table, model, store)
        assert len(ve.cosines) == len(tags) == len(train)
        assert set(ve.groups) == set(tags)


def test_running_example_restores_deleted_characters():
    from jointseg.data import CanonicalAnalysis, DatasetRecord, LabeledSegmentation, realize

    corpus = generate_synthetic_corpus(SyntheticConfig(rule="english", stems=200,
                                                       suffixes=("able", "ly", "ing"), seed=0))
    train, dev, _ = split_records(corpus.records, (0.8, 0.1, 0.1), 0)
    for sufs in (["ing"], ["er"], ["able"], ["ness"], ["ful"], ["ly"], ["able", "ness"]):
        segs, labs = ["question"] + sufs, ["stem"] + ["suffix"] * len(sufs)
        train.append(DatasetRecord(realize(segs, labs, "english"),
                                   CanonicalAnalysis.of(LabeledSegmentation(segs, labs))))
    cfg = RunConfig(kind="add", epochs=3, proposal_epochs=5, m_dev=300)
    proposals = fit_proposals(train, cfg)
    params = fit_joint(train, dev, corpus.table, proposals, cfg)
    for seed in range(3):
        got = decode("questionably", None, params, proposals, 3000, seed)
        assert str(got) == "question:stem+able:suffix+ly:suffix"
        assert got.u == "questionablely"

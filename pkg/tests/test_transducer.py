import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jointseg.features import FeatureIndex, WeightVector
from jointseg.transducer import (EditOperation, ProposalConfig, TransducerError, TransducerParams,
                                 enumerate_underlying_forms, q1_log_likelihood_and_gradient,
                                 q1_log_prob, sample_q1, train_proposal_q1,
                                 transduction_expected_features, transduction_log_score)

from oracles import brute_transduction, edit_paths


def random_params(words, seed=0, k=2, scale=0.5, alphabet=("a", "b")):
    rng = np.random.default_rng(seed)
    p = TransducerParams(alphabet, insertion_limit=k)
    for w in words:
        p.compile(w)
    vals = p.weights.sync()
    vals[1:len(p.index)] = rng.normal(0, scale, len(p.index) - 1)
    return p


class TestEditOperation:
    def test_copy_needs_equal_symbols(self):
        with pytest.raises(ValueError):
            EditOperation("copy", "a", "b")

    def test_insert_and_delete_shapes(self):
        with pytest.raises(ValueError):
            EditOperation("insert", "a", "b")
        with pytest.raises(ValueError):
            EditOperation("delete", "a", "b")
        assert EditOperation("substitute", "a", "b").code == "sb:a>b"


class TestLogScore:
    def test_empty_pair(self):
        assert transduction_log_score("", "", TransducerParams(("a",), insertion_limit=1)) == 0.0

    def test_three_paths_with_zero_weights(self):
        p = TransducerParams(("a",), insertion_limit=1)
        assert transduction_log_score("a", "a", p) == pytest.approx(math.log(3), abs=1e-12)
        assert len(edit_paths("a", "a", 1)) == 3

    def test_forced_alignment(self):
        p = TransducerParams(("a", "b"), insertion_limit=2)
        p.compile("ab")
        p.weights.named("K:in", -1e4)
        p.weights.named("K:dl", -1e4)
        c = 0.7
        p.weights.named("K:cp", c)
        assert transduction_log_score("ab", "ab", p) == pytest.approx(2 * c, abs=1e-9)
        feats = transduction_expected_features("ab", "ab", p)
        assert feats[p.index.get("K:cp")] == pytest.approx(2.0)
        assert feats[p.index.get("cp:a")] == pytest.approx(1.0)

    def test_expected_copy_count_one_third(self):
        p = TransducerParams(("a",), insertion_limit=1)
        feats = transduction_expected_features("a", "a", p)
        assert feats[p.index.get("cp:a")] == pytest.approx(1 / 3)

    @settings(max_examples=40, deadline=None)
    @given(st.text("ab", max_size=3), st.text("ab", max_size=5), st.integers(0, 2), st.integers(0, 10**6))
    def test_matches_path_enumeration(self, w, u, k, seed):
        if len(u) > len(w) + k:
            return
        p = random_params([w], seed=seed, k=k)
        brute, expected = brute_transduction(u, w, p)
        assert transduction_log_score(u, w, p) == pytest.approx(brute, abs=1e-9)
        feats = transduction_expected_features(u, w, p)
        for name, value in expected.items():
            assert feats[p.index.get(name)] == pytest.approx(value, abs=1e-9)

    def test_gradient_is_expected_features(self):
        p = random_params(["aba"], seed=4)
        u, w = "abba", "aba"
        feats = transduction_expected_features(u, w, p)
        vals = p.weights.values
        for i in range(1, len(p.index)):
            old = vals[i]
            vals[i] = old + 1e-5
            hi = transduction_log_score(u, w, p)
            vals[i] = old - 1e-5
            lo = transduction_log_score(u, w, p)
            vals[i] = old
            fd = (hi - lo) / 2e-5
            assert fd == pytest.approx(feats[i], rel=1e-6, abs=1e-8)

    def test_monotone_in_firing_weights(self):
        p = random_params(["ab"], seed=1)
        base = transduction_log_score("ab", "ab", p)
        feats = transduction_expected_features("ab", "ab", p)
        i = int(np.argmax(feats))
        p.weights.values[i] += 0.5
        assert transduction_log_score("ab", "ab", p) > base

    def test_errors(self):
        p = TransducerParams(("a",), insertion_limit=1)
        with pytest.raises(TransducerError):
            transduction_log_score("aaa", "a", p)
        with pytest.raises(TransducerError):
            transduction_log_score("a", "z", p)


class TestProposal:
    def _q(self, seed=0, k=2):
        p = random_params(["ab", "a", ""], seed=seed, k=k)
        return p.copy(normalized=True)

    def test_distribution_sums_to_one(self):
        q = self._q()
        for w in ("ab", "a", ""):
            lps = [q1_log_prob(u, w, q) for u in enumerate_underlying_forms(w, "ab", 2)]
            assert np.exp(np.logaddexp.reduce(lps)) == pytest.approx(1.0, abs=1e-9)

    def test_smoothing_gives_full_support(self):
        q = self._q()
        q.weights.named("K:cp", 50.0)
        assert min(q1_log_prob(u, "ab", q) for u in enumerate_underlying_forms("ab", "ab", 2)) > -np.inf

    def test_sampler_matches_enumeration(self):
        q = TransducerParams(("a", "b"), insertion_limit=1, normalized=True)
        draws = sample_q1("a", q, np.random.default_rng(0), size=50000)
        freq = Counter(u for u, _ in draws)
        tv = 0.5 * sum(abs(freq[u] / 50000 - math.exp(q1_log_prob(u, "a", q)))
                       for u in enumerate_underlying_forms("a", "ab", 1))
        assert tv < 0.02

    def test_sampled_log_prob_is_marginal(self):
        q = self._q(seed=2)
        for u, lq in sample_q1("ab", q, np.random.default_rng(5), size=20):
            assert lq == pytest.approx(q1_log_prob(u, "ab", q), abs=1e-9)
            assert len(u) <= 2 + 2

    def test_deterministic_model_copies(self):
        q = TransducerParams(("a", "b"), insertion_limit=2, normalized=True, epsilon=0.0)
        q.compile("ab")
        q.weights.named("K:cp", 40.0)
        q.weights.named("stop", 40.0)
        u, lq = sample_q1("ab", q, np.random.default_rng(0))
        assert u == "ab" and lq == pytest.approx(0.0, abs=1e-9)

    def test_seed_reproducible(self):
        q = self._q()
        a = sample_q1("ab", q, np.random.default_rng(11), size=30)
        b = sample_q1("ab", q, np.random.default_rng(11), size=30)
        assert a == b

    def test_likelihood_gradient_finite_differences(self):
        q = self._q(seed=3)
        ll, g = q1_log_likelihood_and_gradient("aab", "ab", q)
        vals = q.weights.values
        for i in np.flatnonzero(g)[:25]:
            old = vals[i]
            vals[i] = old + 1e-5
            hi = q1_log_likelihood_and_gradient("aab", "ab", q)[0]
            vals[i] = old - 1e-5
            lo = q1_log_likelihood_and_gradient("aab", "ab", q)[0]
            vals[i] = old
            assert (hi - lo) / 2e-5 == pytest.approx(g[i], rel=1e-5, abs=1e-8)

    def test_training_concentrates_on_single_pair(self):
        q = train_proposal_q1([("a", "a")], ProposalConfig(epochs=200, rate=0.5, l2=0.0), alphabet="ab")
        assert math.exp(q1_log_prob("a", "a", q)) >= 0.99

    def test_identity_corpus(self):
        rng = np.random.default_rng(0)
        words = sorted({"".join(rng.choice(list("abc"), rng.integers(2, 6))) for _ in range(200)})
        order = rng.permutation(len(words))
        train = [words[i] for i in order[: len(words) // 2]]
        held = [words[i] for i in order[len(words) // 2:]]
        q = train_proposal_q1([(w, w) for w in train], ProposalConfig(epochs=5, insertion_limit=2))
        hits = 0
        for w in held:
            cands = list(enumerate_underlying_forms(w, q.alphabet, 1))
            best = max(cands, key=lambda u: q1_log_prob(u, w, q))
            hits += best == w
        assert hits / len(held) >= 0.95

    def test_empty_training_set(self):
        with pytest.raises(TransducerError):
            train_proposal_q1([])


def test_feature_index_round_trip(tmp_path):
    p = random_params(["abba"])
    p.index.dump(tmp_path / "f.tsv")
    again = FeatureIndex.load(tmp_path / "f.tsv")
    assert again.names() == p.index.names()
    clone = TransducerParams(p.alphabet, WeightVector(again, p.weights.active), p.insertion_limit)
    assert transduction_log_score("aba", "abba", clone) == pytest.approx(
        transduction_log_score("aba", "abba", p), abs=1e-12)

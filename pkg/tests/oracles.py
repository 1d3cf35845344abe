"""Brute-force reference implementations used by the tests.

Nothing here calls a dynamic program: edit paths and labeled segmentations
are enumerated explicitly and scored feature by feature.
"""

from itertools import product

import numpy as np

from jointseg import composition as comp
from jointseg.data import CanonicalAnalysis
from jointseg.embeddings import LABELS, EmbeddingTable
from jointseg.joint import JointParams, Proposals
from jointseg.segmenter import LabeledSegmentation, SegmenterParams, segmentation_features
from jointseg.transducer import BOS, EditOperation, TransducerParams, arc_features


def edit_paths(u, w, k):
    """Every monotone edit path spelling (u, w) with at most ``k`` inserts, as (op, i, prev) lists."""
    out = []

    def walk(i, j, n, prev, path):
        if i == len(w) and j == len(u):
            out.append(list(path))
            return
        if i < len(w) and j < len(u):
            kind = "copy" if w[i] == u[j] else "substitute"
            path.append((EditOperation(kind, w[i], u[j]), i, prev))
            walk(i + 1, j + 1, n, u[j], path)
            path.pop()
        if i < len(w):
            path.append((EditOperation("delete", w[i], None), i, prev))
            walk(i + 1, j, n, prev, path)
            path.pop()
        if j < len(u) and n < k:
            path.append((EditOperation("insert", None, u[j]), i, prev))
            walk(i, j + 1, n + 1, u[j], path)
            path.pop()

    walk(0, 0, 0, BOS, [])
    return out


def path_feature_names(path, w):
    names = []
    for op, i, prev in path:
        names.extend(arc_features(op, w, i, prev))
    return names


def weight_of(names, params):
    vals = params.weights.sync()
    return sum(vals[params.index.get(n)] for n in names)


def brute_transduction(u, w, params):
    """(log-score, expected feature dict) by explicit path enumeration."""
    paths = edit_paths(u, w, params.insertion_limit)
    feats = [path_feature_names(p, w) for p in paths]
    scores = np.array([weight_of(f, params) for f in feats])
    m = scores.max()
    probs = np.exp(scores - m)
    log_score = m + np.log(probs.sum())
    probs /= probs.sum()
    expected = {}
    for p, f in zip(probs, feats):
        for name in f:
            expected[name] = expected.get(name, 0.0) + p
    return float(log_score), expected


def segmentations(u, labels=LABELS, max_len=None):
    """All labeled segmentations of ``u`` (independent of the package enumerator)."""
    max_len = max_len or len(u)
    results = []

    def cuts(a):
        if a == len(u):
            yield []
            return
        for b in range(a + 1, min(len(u), a + max_len) + 1):
            for rest in cuts(b):
                yield [u[a:b]] + rest

    for segs in cuts(0):
        for labs in product(labels, repeat=len(segs)):
            results.append(LabeledSegmentation(segs, labs))
    return results


def brute_segment_score(seg, u, params):
    return float(weight_of(segmentation_features(seg, u), params))


def strings(alphabet, max_len, min_len=0):
    for n in range(min_len, max_len + 1):
        for t in product(alphabet, repeat=n):
            yield "".join(t)


def all_analyses(w, alphabet, k, labels, max_len):
    for u in strings(alphabet, len(w) + k, 1):
        for seg in segmentations(u, labels, max_len):
            yield CanonicalAnalysis(u, seg)


def tiny_model(w, seed=0, k=2, max_len=3, scale=0.5, alphabet=("a", "b"), dim=3, kind="add"):
    """Random joint parameters and matching proposals over a two-letter alphabet.

    The proposals share the joint weights: q1 is the locally normalized
    reading of the transducer weights and q2 the semi-CRF itself.
    """
    rng = np.random.default_rng(seed)
    trans = TransducerParams(alphabet, insertion_limit=k)
    trans.compile(w)
    seg = SegmenterParams(max_segment_length=max_len)
    for u in strings(alphabet, len(w) + k, 1):
        seg.compile(u)
    tw = trans.weights.sync()
    tw[1:len(trans.index)] = rng.normal(0, scale, len(trans.index) - 1)
    sw = seg.weights.sync()
    sw[1:len(seg.index)] = rng.normal(0, scale, len(seg.index) - 1)
    stems = {s: rng.normal(0, 1, dim) for s in strings(alphabet, 3, 1) if rng.random() < 0.7}
    table = EmbeddingTable(dim, stems)
    model = comp.CompositionModel(kind, dim, seed=seed)
    store = comp.make_morpheme_store(model, table, seed=seed)
    for m in strings(alphabet, max_len, 1):
        for label in store.trainable_labels:
            store.lookup(label, m)
    params = JointParams(trans, seg, model, store, sigma2=1.0)
    proposals = Proposals(trans.copy(normalized=True), seg.copy())
    return params, proposals


class ExactJoint:
    """Enumerated distribution over analyses of one word under joint parameters."""

    def __init__(self, w, params, v=None, labels=LABELS):
        self.w = w
        self.analyses = list(all_analyses(w, params.transducer.alphabet, params.insertion_limit,
                                          labels, params.segmenter.max_segment_length))
        trans = {}
        scores = []
        for a in self.analyses:
            if a.u not in trans:
                trans[a.u] = brute_transduction(a.u, w, params.transducer)
            s = trans[a.u][0] + brute_segment_score(a.seg, a.u, params.segmenter)
            if v is not None:
                c = comp.compose(params.composition, a.seg, params.morphemes)
                s += -float((v - c) @ (v - c)) / (2 * params.sigma2)
            scores.append(s)
        self.trans = trans
        self.scores = np.array(scores)
        m = self.scores.max()
        self.log_z = float(m + np.log(np.exp(self.scores - m).sum()))
        self.probs = np.exp(self.scores - self.log_z)

    def map(self):
        return self.analyses[int(np.argmax(self.scores))]

    def gradient(self, params):
        """Exact E_p[f] over eta ids and E_p[g] over omega ids."""
        g_eta = np.zeros(len(params.segmenter.index))
        g_omega = np.zeros(len(params.transducer.index))
        for a, p in zip(self.analyses, self.probs):
            for name in segmentation_features(a.seg, a.u):
                g_eta[params.segmenter.index.get(name)] += p
            for name, c in self.trans[a.u][1].items():
                g_omega[params.transducer.index.get(name)] += p * c
        g_eta[0] = g_omega[0] = 0.0
        return g_eta, g_omega

    def mean_vector(self, params):
        vecs = np.array([comp.compose(params.composition, a.seg, params.morphemes) for a in self.analyses])
        return self.probs @ vecs


def fit_q1_to_marginal(exact, q1, steps=60, rate=0.3):
    """Move q1 toward the exact UR marginal of ``exact`` (AdaGrad on KL(p || q1))."""
    from jointseg.optim import AdaGrad
    from jointseg.transducer import q1_log_likelihood_and_gradient

    marg = {}
    for a, p in zip(exact.analyses, exact.probs):
        marg[a.u] = marg.get(a.u, 0.0) + p
    opt = AdaGrad(rate)
    for _ in range(steps):
        grad = np.zeros(len(q1.index))
        for u, p in marg.items():
            grad += p * q1_log_likelihood_and_gradient(u, exact.w, q1)[1]
        grad[0] = 0.0
        opt.ascend("omega", q1.weights.active, grad)
    return q1

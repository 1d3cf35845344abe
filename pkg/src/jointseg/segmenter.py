"""First-order semi-Markov scorer over labeled segmentations of an underlying form.

A segmentation splits ``u`` into nonempty segments, each labeled stem,
prefix or suffix. Its score is the sum of per-segment feature weights and
label-transition weights (including transitions out of the word start and
into the word end). The same parameters give the unnormalized segmentation
factor of the joint model and, normalized over all segmentations of ``u``,
the proposal ``q2(l, s | u)``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .embeddings import LABELS
from .features import WeightVector, counts_from_ids
from .logspace import NEG_INF, logsumexp
from .optim import AdaGrad

_logger = logging.getLogger(__name__)

DEFAULT_MAX_SEGMENT_LENGTH = 12
BOS = "^"
EOS = "$"
N_SEGMENT_TEMPLATES = 12


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSegmentation:
    segments: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.segments:
            raise SegmentationError("a segmentation needs at least one segment")
        if len(self.segments) != len(self.labels):
            raise SegmentationError("segments and labels differ in length")
        if any(not s for s in self.segments):
            raise SegmentationError("empty segment")
        for label in self.labels:
            if label not in LABELS:
                raise SegmentationError(f"unknown label {label!r}")

    @property
    def u(self):
        return "".join(self.segments)

    def __len__(self):
        return len(self.segments)

    def __str__(self):
        return "+".join(f"{s}:{l}" for s, l in zip(self.segments, self.labels))

    @classmethod
    def parse(cls, text):
        segments, labels = [], []
        for part in text.split("+"):
            seg, sep, label = part.rpartition(":")
            if not sep:
                raise SegmentationError(f"segment {part!r} has no label")
            segments.append(seg)
            labels.append(label)
        return cls(segments, labels)

    @classmethod
    def single(cls, u, label="stem"):
        return cls((u,), (label,))

    def spans(self):
        a = 0
        for seg, label in zip(self.segments, self.labels):
            yield a, a + len(seg), label
            a += len(seg)


def _length_bucket(d):
    if d <= 4:
        return str(d)
    if d <= 6:
        return "5-6"
    if d <= 9:
        return "7-9"
    return "10+"


def segment_features(u, a, b, label):
    """Feature strings of segment ``u[a:b]`` carrying ``label``."""
    seg = u[a:b]
    l1 = u[a - 1] if a > 0 else BOS
    r1 = u[b] if b < len(u) else EOS
    l2 = (BOS * 2 + u[:a])[-2:]
    r2 = (u[b:] + EOS * 2)[:2]
    y = label
    return [
        f"S|{y}|{seg}",
        f"L1|{y}|{l1}",
        f"R1|{y}|{r1}",
        f"L2|{y}|{l2}",
        f"R2|{y}|{r2}",
        f"N|{y}|{_length_bucket(b - a)}",
        f"F|{y}|{seg[0]}",
        f"E|{y}|{seg[-1]}",
        f"P2|{y}|{seg[:2]}",
        f"X2|{y}|{seg[-2:]}",
        f"SL|{y}|{seg}|{l1}",
        f"SR|{y}|{seg}|{r1}",
    ]


def transition_feature(prev, label):
    return f"T|{prev}|{label}"


def segmentation_features(seg, u=None):
    """All feature strings fired by a labeled segmentation (with repetition)."""
    u = seg.u if u is None else u
    if seg.u != u:
        raise SegmentationError(f"segments {seg} do not concatenate to {u!r}")
    feats = []
    prev = BOS
    for a, b, label in seg.spans():
        feats.extend(segment_features(u, a, b, label))
        feats.append(transition_feature(prev, label))
        prev = label
    feats.append(transition_feature(prev, EOS))
    return feats


class CompiledForm:
    """Feature ids for every (end, length, label) segment of one underlying form."""

    def __init__(self, u, max_len, index, labels=LABELS):
        n = len(u)
        Y = len(labels)
        self.labels = labels
        self.u = u
        self.n = n
        self.L = L = max(1, min(max_len, n))
        self.seg_ids = np.zeros((n + 1, L + 1, Y, N_SEGMENT_TEMPLATES), dtype=np.int64)
        self.valid = np.zeros((n + 1, L + 1), dtype=bool)
        for b in range(1, n + 1):
            for d in range(1, min(L, b) + 1):
                self.valid[b, d] = True
                for y, label in enumerate(labels):
                    self.seg_ids[b, d, y] = [index.add(f) for f in segment_features(u, b - d, b, label)]
        prevs = [BOS] + list(labels)
        self.trans_ids = np.array([[index.add(transition_feature(p, y)) for y in labels] for p in prevs])
        self.end_ids = np.array([index.add(transition_feature(y, EOS)) for y in labels])


class SegmenterParams:
    """Semi-CRF weights ``eta`` with their feature index and segment-length bound."""

    def __init__(self, weights=None, max_segment_length=DEFAULT_MAX_SEGMENT_LENGTH, labels=LABELS):
        if max_segment_length < 1:
            raise SegmentationError("max segment length must be positive")
        unknown = set(labels) - set(LABELS)
        if unknown or not labels:
            raise SegmentationError(f"label set must be a nonempty subset of {LABELS}")
        self.weights = weights if weights is not None else WeightVector()
        self.max_segment_length = int(max_segment_length)
        # keep the stem < prefix < suffix order used for tie-breaking
        self.labels = tuple(y for y in LABELS if y in labels)
        self._compiled = {}

    @property
    def eta(self):
        return self.weights.sync()

    @property
    def index(self):
        return self.weights.index

    def copy(self):
        clone = SegmenterParams(self.weights.copy(), self.max_segment_length, self.labels)
        clone._compiled = dict(self._compiled)
        return clone

    def compile(self, u):
        cf = self._compiled.get(u)
        if cf is None:
            if not u:
                raise SegmentationError("cannot segment the empty string")
            cf = CompiledForm(u, self.max_segment_length, self.weights.index, self.labels)
            self._compiled[u] = cf
            self.weights.sync()
        return cf

    def potentials(self, cf):
        """Segment scores (end, length, label), transition scores (prev, label), end scores."""
        eta = self.eta
        seg = eta[cf.seg_ids].sum(-1)
        seg = np.where(cf.valid[:, :, None], seg, NEG_INF)
        return seg, eta[cf.trans_ids], eta[cf.end_ids]

    def score_features(self, counts):
        return self.weights.dot(counts)


def _check_lengths(seg, params):
    for label in seg.labels:
        if label not in params.labels:
            raise SegmentationError(f"label {label!r} outside the model label set")
    for s in seg.segments:
        if len(s) > params.max_segment_length:
            raise SegmentationError(
                f"segment {s!r} longer than max segment length {params.max_segment_length}")


def segmentation_log_score(seg, u, params):
    """Dot product of the segmentation's feature counts with ``eta``."""
    if seg.u != u:
        raise SegmentationError(f"segments {seg} do not concatenate to {u!r}")
    _check_lengths(seg, params)
    eta = params.eta
    index = params.index
    return float(sum(eta[index.get(f)] for f in segmentation_features(seg, u)))


def segmentation_feature_counts(seg, params):
    """Dense count vector of the segmentation's features (interning new ones)."""
    ids = [params.index.add(f) for f in segmentation_features(seg)]
    params.weights.sync()
    return counts_from_ids(ids, size=len(params.index))


class _Chart:
    """Forward/backward tables for one underlying form."""

    def __init__(self, u, params):
        self.cf = cf = params.compile(u)
        self.seg, self.trans, self.end = params.potentials(cf)
        n, L = cf.n, cf.L
        Y = len(cf.labels)
        alpha = np.full((n + 1, Y), NEG_INF)
        enter = np.full((n + 1, Y), NEG_INF)  # log-mass of starting a labeled segment at a
        enter[0] = self.trans[0]
        for b in range(1, n + 1):
            d = np.arange(1, min(L, b) + 1)
            alpha[b] = logsumexp(self.seg[b, d] + enter[b - d], axis=0)
            enter[b] = logsumexp(alpha[b][:, None] + self.trans[1:], axis=0)
        self.alpha, self.enter = alpha, enter
        self.log_z = logsumexp(alpha[n] + self.end)

    def backward(self):
        cf = self.cf
        n, L = cf.n, cf.L
        Y = len(cf.labels)
        beta = np.full((n + 1, Y), NEG_INF)  # completion mass after a segment labeled y ends at a
        leave = np.full((n + 1, Y), NEG_INF)  # completion mass of a segment labeled y starting at a
        beta[n] = self.end
        for a in range(n - 1, -1, -1):
            d = np.arange(1, min(L, n - a) + 1)
            leave[a] = logsumexp(self.seg[a + d, d] + beta[a + d], axis=0)
            if a > 0:
                beta[a] = logsumexp(self.trans[1:] + leave[a][None, :], axis=1)
        self.beta, self.leave = beta, leave
        return beta

    def expected_counts(self, size):
        cf = self.cf
        n, L = cf.n, cf.L
        z = self.log_z
        b = np.arange(n + 1)[:, None]
        d = np.arange(L + 1)[None, :]
        start = np.clip(b - d, 0, n)
        with np.errstate(invalid="ignore"):
            seg_m = np.exp(self.enter[start] + self.seg + self.beta[b] - z)
        seg_m = np.where(cf.valid[:, :, None], np.nan_to_num(seg_m), 0.0)
        trans_m = np.zeros_like(self.trans)
        trans_m[0] = np.exp(self.trans[0] + self.leave[0] - z)
        with np.errstate(invalid="ignore"):
            inner = np.exp(self.alpha[1:n, :, None] + self.trans[None, 1:] + self.leave[1:n, None, :] - z)
        trans_m[1:] = np.nan_to_num(inner).sum(0)
        end_m = np.exp(self.alpha[n] + self.end - z)
        counts = counts_from_ids(cf.seg_ids, np.broadcast_to(seg_m[..., None], cf.seg_ids.shape), size)
        counts += counts_from_ids(cf.trans_ids, trans_m, size)
        counts += counts_from_ids(cf.end_ids, end_m, size)
        return counts


def semicrf_log_partition(u, params):
    """Log-sum of exponentiated scores over every labeled segmentation of ``u``."""
    if not u:
        raise SegmentationError("cannot segment the empty string")
    return float(_Chart(u, params).log_z)


def semicrf_expected_features(u, params):
    chart = _Chart(u, params)
    chart.backward()
    return chart.expected_counts(len(params.index))


def semicrf_log_likelihood_and_gradient(seg, params):
    """Conditional log-likelihood of a gold segmentation and its gradient wrt ``eta``."""
    _check_lengths(seg, params)
    u = seg.u
    chart = _Chart(u, params)
    chart.backward()
    gold = segmentation_feature_counts(seg, params)
    size = len(params.index)
    expected = chart.expected_counts(size)
    gold = np.pad(gold, (0, size - len(gold)))
    ll = segmentation_log_score(seg, u, params) - chart.log_z
    return float(ll), gold - expected


def _tie_key(score, labels, bounds):
    # larger is better: score, then fewer segments, then smaller label indices, then bounds
    return (score, -len(labels), tuple(-x for x in labels), tuple(-x for x in bounds))


def semicrf_viterbi(u, params):
    """Best labeled segmentation with deterministic tie-breaking.

    Ties prefer fewer segments, then the lexicographically smallest label
    sequence under stem < prefix < suffix.
    """
    if not u:
        raise SegmentationError("cannot segment the empty string")
    cf = params.compile(u)
    seg, trans, end = params.potentials(cf)
    seg, trans, end = seg.tolist(), trans.tolist(), end.tolist()
    n, L = cf.n, cf.L
    Y = len(cf.labels)
    best = [[None] * Y for _ in range(n + 1)]  # (score, labels, bounds)
    for b in range(1, n + 1):
        for y in range(Y):
            cand = None
            for d in range(1, min(L, b) + 1):
                a = b - d
                s = seg[b][d][y]
                if a == 0:
                    options = [(trans[0][y] + s, (y,), (b,))]
                else:
                    options = []
                    for yp in range(Y):
                        prev = best[a][yp]
                        if prev is None:
                            continue
                        options.append((prev[0] + trans[yp + 1][y] + s, prev[1] + (y,), prev[2] + (b,)))
                for opt in options:
                    if cand is None or _tie_key(*opt) > _tie_key(*cand):
                        cand = opt
            best[b][y] = cand
    final = None
    for y in range(Y):
        c = best[n][y]
        if c is None:
            continue
        opt = (c[0] + end[y], c[1], c[2])
        if final is None or _tie_key(*opt) > _tie_key(*final):
            final = opt
    score, labels, bounds = final
    starts = (0,) + bounds[:-1]
    return LabeledSegmentation(tuple(u[a:b] for a, b in zip(starts, bounds)),
                               tuple(cf.labels[y] for y in labels))


class Q2Sampler:
    """Exact sampler for q2(l, s | u) by backward filtering and forward drawing."""

    def __init__(self, u, params):
        self.u = u
        chart = _Chart(u, params)
        chart.backward()
        self.log_z = chart.log_z
        cf = chart.cf
        n, L = cf.n, cf.L
        Y = len(cf.labels)
        self.n, self.L, self.Y = n, L, Y
        self.labels = cf.labels
        # logits over (length, label) for a segment starting at a after prev label
        logits = np.full((n + 1, Y + 1, L, Y), NEG_INF)
        for a in range(n):
            for d in range(1, min(L, n - a) + 1):
                logits[a, :, d - 1, :] = chart.trans + chart.seg[a + d, d][None, :] + chart.beta[a + d][None, :]
        flat = logits.reshape(n + 1, Y + 1, L * Y)
        lse = logsumexp(flat, axis=-1)
        with np.errstate(invalid="ignore"):
            probs = np.exp(flat - np.where(np.isfinite(lse), lse, 0.0)[..., None])
        self.cdf = np.cumsum(np.nan_to_num(probs), axis=-1)
        self.last = L * Y - 1 - np.argmax((np.nan_to_num(probs) > 0)[..., ::-1], axis=-1)
        self.params = params

    def draw(self, rng, size):
        rng = np.random.default_rng(rng)
        n, Y = self.n, self.Y
        a = np.zeros(size, dtype=np.int64)
        prev = np.zeros(size, dtype=np.int64)
        picks = []
        while True:
            act = np.flatnonzero(a < n)
            if not len(act):
                break
            rows = self.cdf[a[act], prev[act]]
            r = rng.random(len(act)) * rows[:, -1]
            choice = np.minimum((rows <= r[:, None]).sum(1), self.last[a[act], prev[act]])
            d = choice // Y + 1
            y = choice % Y
            picks.append((act, a[act].copy(), d, y))
            a[act] += d
            prev[act] = y + 1
        bounds = [[] for _ in range(size)]
        for act, start, d, y in picks:
            for s, st, dd, yy in zip(act.tolist(), start.tolist(), d.tolist(), y.tolist()):
                bounds[s].append((st, st + dd, yy))
        out = []
        cache = {}
        for spans in bounds:
            key = tuple(spans)
            seg = cache.get(key)
            if seg is None:
                seg = cache[key] = LabeledSegmentation(tuple(self.u[x:z] for x, z, _ in spans),
                                                       tuple(self.labels[y] for _, _, y in spans))
            out.append(seg)
        return out

    def log_prob(self, seg):
        return segmentation_log_score(seg, self.u, self.params) - self.log_z


def sample_q2(u, params, rng, size=None):
    """Draw labeled segmentations of ``u`` from q2 with their log-probabilities."""
    sampler = Q2Sampler(u, params)
    segs = sampler.draw(rng, 1 if size is None else size)
    cache = {}
    draws = []
    for seg in segs:
        if seg not in cache:
            cache[seg] = sampler.log_prob(seg)
        draws.append((seg, cache[seg]))
    return draws[0] if size is None else draws


def enumerate_segmentations(u, labels=LABELS, max_segment_length=None):
    """All labeled segmentations of ``u`` (exponential; for tests and tiny oracles)."""
    n = len(u)
    L = n if max_segment_length is None else max_segment_length

    def splits(a):
        if a == n:
            yield ()
            return
        for b in range(a + 1, min(n, a + L) + 1):
            for rest in splits(b):
                yield (u[a:b],) + rest

    from itertools import product

    for segs in splits(0):
        for labs in product(labels, repeat=len(segs)):
            yield LabeledSegmentation(segs, labs)


def train_proposal_q2(pairs, config=None, labels=LABELS):
    """Fit the semi-CRF q2(l, s | u) by conditional maximum likelihood.

    ``pairs`` holds ``(u, gold segmentation)``. Gold segmentations that break
    the segment-length bound are reported and skipped.
    """
    from .transducer import ProposalConfig

    config = config or ProposalConfig()
    params = SegmenterParams(max_segment_length=config.max_segment_length, labels=labels)
    usable = []
    for u, seg in pairs:
        try:
            if seg.u != u:
                raise SegmentationError(f"segments {seg} do not concatenate to {u!r}")
            _check_lengths(seg, params)
            usable.append(seg)
        except SegmentationError as exc:
            _logger.warning("skipping q2 training word %r: %s", u, exc)
    if not usable:
        raise SegmentationError("no usable training segmentations")
    opt = AdaGrad(config.rate)
    rng = np.random.default_rng(config.seed)
    shrink = 2.0 * config.l2 / len(usable)
    for epoch in range(config.epochs):
        total = 0.0
        for idx in rng.permutation(len(usable)):
            ll, grad = semicrf_log_likelihood_and_gradient(usable[idx], params)
            total += ll
            eta = params.weights.active
            grad = grad - shrink * eta
            grad[0] = 0.0
            opt.ascend("eta", eta, grad)
        _logger.info("q2 epoch %d: mean log-likelihood %.4f", epoch + 1, total / len(usable))
    return params

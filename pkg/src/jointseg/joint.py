"""Joint model of transduction, segmentation and composition.

The unnormalized log-score of an analysis ``(u, s, l)`` of a word ``w`` with
vector ``v`` is::

    transduction_log_score(u, w) + segmentation_log_score(s, l, u)
        - ||v - C(s, l)||^2 / (2 sigma2)

The partition function sums over analyses and integrates over ``v``. The
Gaussian integral is the same constant for every analysis, so expectations
under the ``v``-marginal only need the first two terms. Those expectations,
and decoding, are approximated by self-normalized importance sampling with
the proposal ``q1(u | w) q2(l, s | u)``.
"""

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import composition as comp
from .data import CanonicalAnalysis
from .evaluation import morpheme_f1, segmentation_accuracy
from .logspace import normalize_log_weights
from .optim import AdaGrad
from .segmenter import (Q2Sampler, SegmenterParams, segmentation_feature_counts,
                        segmentation_log_score)
from .transducer import (TransducerParams, q1_log_prob, sample_q1, transduction_log_score,
                         transduction_score_and_features)

_logger = logging.getLogger(__name__)

LAMBDA_GRID = (0.0, 10.0, 1e2, 1e3, 1e4, 1e5)
SIGMA2_GRID = (0.25, 0.5, 0.75, 1.0)


class NumericError(ArithmeticError):
    """A non-finite score appeared where a finite one is required."""


@dataclass
class Proposals:
    """Frozen proposal pair; q2 samplers are cached per underlying form."""

    q1: TransducerParams
    q2: SegmenterParams
    _samplers: dict = field(default_factory=dict, repr=False)

    def sampler(self, u):
        s = self._samplers.get(u)
        if s is None:
            s = self._samplers[u] = Q2Sampler(u, self.q2)
        return s


@dataclass
class JointParams:
    transducer: TransducerParams
    segmenter: SegmenterParams
    composition: comp.CompositionModel
    morphemes: object
    sigma2: float = 0.5
    l2: float = 0.0
    use_vectors: bool = True

    @property
    def insertion_limit(self):
        return self.transducer.insertion_limit

    def copy(self):
        return JointParams(self.transducer.copy(), self.segmenter.copy(), self.composition.copy(),
                           self.morphemes.copy(), self.sigma2, self.l2, self.use_vectors)


def init_joint_params(proposals, table, kind="RNN", sigma2=0.5, l2=0.0, use_vectors=True,
                      warm_start=True, seed=0):
    """Joint parameters, optionally starting the factor weights at the proposal weights."""
    if warm_start:
        transducer = proposals.q1.copy(normalized=False)
        segmenter = proposals.q2.copy()
    else:
        transducer = TransducerParams(proposals.q1.alphabet, insertion_limit=proposals.q1.insertion_limit)
        segmenter = SegmenterParams(max_segment_length=proposals.q2.max_segment_length,
                                    labels=proposals.q2.labels)
    model = comp.CompositionModel(kind, table.dim, seed=seed)
    store = comp.make_morpheme_store(model, table, seed=seed)
    return JointParams(transducer, segmenter, model, store, sigma2, l2, use_vectors)


@dataclass(frozen=True)
class WeightedSample:
    analysis: CanonicalAnalysis
    log_q: float
    log_pbar: float
    log_weight: float
    weight: float  # self-normalized over the batch


def _gaussian_term(v, analysis, params):
    if v is None or not params.use_vectors:
        return 0.0
    c = comp.compose(params.composition, analysis.seg, params.morphemes)
    return comp.gaussian_log_factor(v, c, params.sigma2)


def joint_unnormalized_log_score(v, analysis, w, params):
    """Log of the product of the three factors (Gaussian omitted when ``v`` is None)."""
    if len(analysis.u) > len(w) + params.insertion_limit:
        raise ValueError(f"{analysis.u!r} exceeds insertion limit for {w!r}")
    score = transduction_log_score(analysis.u, w, params.transducer)
    score += segmentation_log_score(analysis.seg, analysis.u, params.segmenter)
    score += _gaussian_term(v, analysis, params)
    return score


def _sample_nonempty(w, M, q1, rng):
    """Draws from q1 conditioned on a nonempty underlying form (rejection)."""
    us = sample_q1(w, q1, rng, size=M)
    empty = [i for i, (u, _) in enumerate(us) if not u]
    if not empty:
        return us
    p_empty = np.exp(q1_log_prob("", w, q1))
    if p_empty > 1 - 1e-12:
        raise NumericError(f"q1 puts all its mass on the empty form for {w!r}")
    shift = -np.log1p(-p_empty)
    while empty:
        redraw = sample_q1(w, q1, rng, size=len(empty))
        for i, d in zip(empty, redraw):
            us[i] = d
        empty = [i for i in empty if not us[i][0]]
    return [(u, lq + shift) for u, lq in us]


def _draw(w, M, proposals, rng, oracle_u=None):
    """Sample M analyses; return (ordered list, {analysis: log q})."""
    rng = np.random.default_rng(rng)
    if oracle_u is None:
        us = _sample_nonempty(w, M, proposals.q1, rng)
    else:
        us = [(oracle_u, 0.0)] * M
    groups = {}
    for pos, (u, lq1) in enumerate(us):
        groups.setdefault(u, (lq1, []))[1].append(pos)
    analyses = [None] * M
    log_q = {}
    for u in sorted(groups):
        lq1, positions = groups[u]
        sampler = proposals.sampler(u)
        segs = sampler.draw(rng, len(positions))
        seg_lq = {}
        for pos, seg in zip(positions, segs):
            a = CanonicalAnalysis(u, seg)
            if seg not in seg_lq:
                seg_lq[seg] = sampler.log_prob(seg)
                log_q[a] = lq1 + seg_lq[seg]
            analyses[pos] = a
    return analyses, log_q


def _score_analyses(analyses, w, v, params):
    """Unnormalized log-score per distinct analysis (transducer scores shared per u)."""
    trans = {}
    out = {}
    for a in analyses:
        if a in out:
            continue
        if a.u not in trans:
            trans[a.u] = transduction_log_score(a.u, w, params.transducer)
        s = trans[a.u] + segmentation_log_score(a.seg, a.u, params.segmenter) + _gaussian_term(v, a, params)
        if not np.isfinite(s):
            raise NumericError(f"non-finite score for {a} of {w!r}")
        out[a] = s
    return out


def draw_samples(w, M, v, params, proposals, rng, oracle_u=None):
    """M importance samples with self-normalized weights.

    Weights include the Gaussian factor only when ``v`` is given. In
    oracle-UR mode ``u`` is fixed and only q2 is sampled.
    """
    if M < 1:
        raise ValueError("M must be positive")
    analyses, log_q = _draw(w, M, proposals, rng, oracle_u)
    pbar = _score_analyses(log_q, w, v, params)
    log_w = np.array([pbar[a] - log_q[a] for a in analyses])
    norm = normalize_log_weights(log_w)
    return [WeightedSample(a, log_q[a], pbar[a], lw, float(nw))
            for a, lw, nw in zip(analyses, log_w, norm)]


def _analysis_features(a, w, params, cache):
    """Dense (eta, omega) feature vectors of an analysis: segment counts and expected edit counts."""
    if a.u not in cache:
        cache[a.u] = transduction_score_and_features(a.u, w, params.transducer)[1]
    return segmentation_feature_counts(a.seg, params.segmenter), cache[a.u]


def estimate_logZ_gradient(samples, w, params, cache=None):
    """Self-normalized estimate of the gradient of log Z wrt (eta, omega).

    The composition parameters never appear in log Z, so no gradient is
    returned for them.
    """
    cache = {} if cache is None else cache
    mass = Counter()
    for s in samples:
        mass[s.analysis] += s.weight
    feats = {a: _analysis_features(a, w, params, cache) for a in mass}
    n_eta = len(params.segmenter.index)
    n_omega = len(params.transducer.index)
    g_eta = np.zeros(n_eta)
    g_omega = np.zeros(n_omega)
    for a, m in mass.items():
        f, g = feats[a]
        g_eta[: len(f)] += m * f
        g_omega[: len(g)] += m * g
    return g_eta, g_omega


@dataclass
class TrainConfig:
    samples: int = 10
    epochs: int = 20
    rate: float = 0.1
    l2: float = 10.0
    sigma2: float = 0.5
    use_vectors: bool = True
    kind: str = "RNN"
    oracle_ur: bool = False
    warm_start: bool = True
    dev_samples: int = 1000
    decode_criterion: str = "pbar"
    seed: int = 0


def _pad(vec, n):
    if len(vec) >= n:
        return vec[:n]
    return np.pad(vec, (0, n - len(vec)))


def train_step(record, v, params, proposals, optimizer, rng, n_train, config, cache=None):
    """One stochastic AdaGrad ascent step on a single training example."""
    w = record.surface
    gold = record.analysis
    cache = {} if cache is None else cache
    oracle_u = gold.u if config.oracle_ur else None
    samples = draw_samples(w, config.samples, None, params, proposals, rng, oracle_u)
    f_gold, g_gold = _analysis_features(gold, w, params, cache)
    e_eta, e_omega = estimate_logZ_gradient(samples, w, params, cache)
    l2 = params.l2 / n_train  # per-example share of the penalty

    eta = params.segmenter.weights.active
    grad = _pad(f_gold, len(eta)) - _pad(e_eta, len(eta))
    grad[0] = 0.0
    optimizer.ascend("eta", eta, grad, l2)
    if not config.oracle_ur:
        omega = params.transducer.weights.active
        grad = _pad(g_gold, len(omega)) - _pad(e_omega, len(omega))
        grad[0] = 0.0
        optimizer.ascend("omega", omega, grad, l2)
    if params.use_vectors and v is not None:
        pg, mg = comp.gaussian_gradients(params.composition, gold.seg, params.morphemes, v, params.sigma2)
        comp.apply_gradients(optimizer, params.composition, params.morphemes, pg, mg, l2=l2)


def train(records, dev, table, proposals, config=None, rng=None, evaluate=None):
    """Fit joint parameters by importance-sampled stochastic gradient ascent.

    Each epoch visits ``records`` in a seeded random order; after each epoch
    the dev set is decoded and the parameters of the best dev epoch are
    returned together with a per-epoch history.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed if rng is None else rng)
    params = init_joint_params(proposals, table, config.kind, config.sigma2, config.l2,
                               config.use_vectors, config.warm_start, seed=config.seed)
    records = [r for r in records if _in_support(r, params, proposals)]
    if not records:
        raise ValueError("no usable training records")
    optimizer = AdaGrad(config.rate)
    n = len(records)
    best, best_key, history = params.copy(), None, []
    for epoch in range(config.epochs):
        for idx in rng.permutation(n):
            rec = records[idx]
            v = table.lookup(rec.surface) if rec.surface in table else None
            train_step(rec, v, params, proposals, optimizer, rng, n, config)
        if dev:
            scores = (evaluate or _dev_scores)(dev, table, params, proposals, config, rng)
        else:
            scores = (0.0, 0.0)
        history.append({"epoch": epoch + 1, "accuracy": scores[0], "f1": scores[1],
                        "eta_norm": float(np.linalg.norm(params.segmenter.weights.active)),
                        "omega_norm": float(np.linalg.norm(params.transducer.weights.active))})
        _logger.info("epoch %d: dev accuracy %.4f f1 %.4f", epoch + 1, *scores)
        if best_key is None or scores > best_key:
            best_key, best = scores, params.copy()
    best.history = history
    return best


def _in_support(record, params, proposals):
    """Whether the gold analysis is representable by the model; warn and skip otherwise."""
    w, a = record.surface, record.analysis
    try:
        if len(a.u) > len(w) + params.insertion_limit:
            raise ValueError("underlying form exceeds insertion limit")
        proposals.q1.check_symbols(w + a.u, "training")
        for s in a.segments:
            if len(s) > params.segmenter.max_segment_length:
                raise ValueError(f"segment {s!r} exceeds the max segment length")
        for l in a.labels:
            if l not in params.segmenter.labels:
                raise ValueError(f"label {l!r} outside the model label set")
    except ValueError as exc:
        _logger.warning("skipping %r: %s", w, exc)
        return False
    return True


def _dev_scores(dev, table, params, proposals, config, rng):
    acc = f1 = 0.0
    for rec in dev:
        v = table.lookup(rec.surface) if (params.use_vectors and rec.surface in table) else None
        pred = decode(rec.surface, v, params, proposals, config.dev_samples, rng,
                      oracle_u=rec.u if config.oracle_ur else None, criterion=config.decode_criterion)
        acc += segmentation_accuracy(pred.segments, rec.analysis.segments)
        f1 += morpheme_f1(pred.segments, rec.analysis.segments)
    return acc / len(dev), f1 / len(dev)


def decode(w, v, params, proposals, M=10000, rng=None, oracle_u=None, criterion="pbar"):
    """Pick one sampled analysis.

    ``criterion="pbar"`` returns the sample with the highest unnormalized
    score (approximate MAP); ``criterion="weight"`` returns the sample with
    the highest importance weight. Remaining ties go to the other quantity,
    then to the lexicographically smallest ``u`` and segmentation string.
    """
    if criterion not in ("pbar", "weight"):
        raise ValueError(f"unknown decode criterion {criterion!r}")
    rng = np.random.default_rng(rng)
    _, log_q = _draw(w, M, proposals, rng, oracle_u)
    pbar = _score_analyses(log_q, w, v, params)

    def key(a):
        lw = pbar[a] - log_q[a]
        primary, secondary = (pbar[a], lw) if criterion == "pbar" else (lw, pbar[a])
        return (-primary, -secondary, a.u, str(a.seg))

    return min(pbar, key=key)


def predict_vector(w, params, proposals, M=10000, rng=None, oracle_u=None):
    """Importance-sampled mean of the composed vector under p(s, l, u | w), ``v`` marginalized."""
    rng = np.random.default_rng(rng)
    analyses, log_q = _draw(w, M, proposals, rng, oracle_u)
    pbar = _score_analyses(log_q, w, None, params)
    counts = Counter(analyses)
    keys = list(counts)
    log_w = np.array([np.log(counts[a]) + pbar[a] - log_q[a] for a in keys])
    weights = normalize_log_weights(log_w)
    vecs = np.array([comp.compose(params.composition, a.seg, params.morphemes) for a in keys])
    return weights @ vecs


def exact_analyses(w, params, alphabet=None):
    """Every analysis of ``w`` in the model's support (exponential; tiny oracles only)."""
    from .segmenter import enumerate_segmentations
    from .transducer import enumerate_underlying_forms

    alphabet = alphabet or params.transducer.alphabet
    for u in enumerate_underlying_forms(w, alphabet, params.insertion_limit):
        if not u:
            continue
        for seg in enumerate_segmentations(u, params.segmenter.labels, params.segmenter.max_segment_length):
            yield CanonicalAnalysis(u, seg)


@dataclass
class GridResult:
    l2: float
    sigma2: float
    accuracy: float
    f1: float
    params: object = None


def grid_search(records, dev, table, proposals, config=None, l2_grid=LAMBDA_GRID,
                sigma2_grid=SIGMA2_GRID, scorer=None):
    """Train one model per (lambda, sigma2) cell and keep the best by dev accuracy.

    Ties go to higher morpheme F1, then lower lambda. ``scorer`` replaces
    the train-and-evaluate step: ``scorer(l2, sigma2) -> (accuracy, f1, params)``.
    Returns ``(best_l2, best_sigma2, best_params, table_rows)``.
    """
    config = config or TrainConfig()
    rows = []
    for l2 in l2_grid:
        for s2 in sigma2_grid:
            if scorer is None:
                cell = dataclasses.replace(config, l2=l2, sigma2=s2)
                params = train(records, dev, table, proposals, cell)
                acc, f1 = max((h["accuracy"], h["f1"]) for h in params.history) if params.history else (0, 0)
            else:
                acc, f1, params = scorer(l2, s2)
            rows.append(GridResult(l2, s2, acc, f1, params))
            _logger.info("grid cell lambda=%g sigma2=%g: accuracy %.4f f1 %.4f", l2, s2, acc, f1)
    best = min(rows, key=lambda r: (-r.accuracy, -r.f1, r.l2))
    return best.l2, best.sigma2, best.params, rows

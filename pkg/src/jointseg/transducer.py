"""Contextual weighted edit model over (underlying, surface) string pairs.

The lattice reads the surface word ``w`` left to right and writes the
underlying form ``u``. Four edit kinds exist: consuming one surface symbol
and writing one underlying symbol (copy when equal, substitute otherwise),
deleting a surface symbol, and inserting an underlying symbol. A node is
``(i, j, n)``: surface symbols read, underlying symbols written, inserts used.
At most ``k`` inserts are allowed, so ``len(u) <= len(w) + k``.

The same lattice serves two models:

* the unnormalized transduction factor, whose log-score is the log-sum over
  all edit paths of their summed feature weights;
* the proposal ``q1(u | w)``, a locally normalized conditional edit model in
  which every state carries a distribution over its outgoing edits plus a
  ``stop`` action at the end of the surface word.

Arc features only look at the surface context around the read head and at
the previously written underlying symbol, so both models share one
feature set and sampling from ``q1`` is a left-to-right walk.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .features import WeightVector, counts_from_ids
from .optim import AdaGrad
from .logspace import NEG_INF, log_normalize, logsumexp

_logger = logging.getLogger(__name__)

BOS = "^"
EOS = "$"
DEFAULT_INSERTION_LIMIT = 5
DEFAULT_EPSILON = 1e-4

# kind codes used in sampled traces
CONSUME, DELETE, INSERT, STOP = range(4)


class TransducerError(ValueError):
    pass


@dataclass(frozen=True)
class EditOperation:
    kind: str  # copy | substitute | insert | delete | stop
    input_symbol: str = None
    output_symbol: str = None

    def __post_init__(self):
        if self.kind == "copy" and self.input_symbol != self.output_symbol:
            raise TransducerError("copy requires equal input and output symbols")
        if self.kind == "substitute" and self.input_symbol == self.output_symbol:
            raise TransducerError("substitute requires distinct symbols")
        if self.kind == "insert" and self.input_symbol is not None:
            raise TransducerError("insert has no input symbol")
        if self.kind == "delete" and self.output_symbol is not None:
            raise TransducerError("delete has no output symbol")

    @property
    def code(self):
        if self.kind == "copy":
            return f"cp:{self.input_symbol}"
        if self.kind == "substitute":
            return f"sb:{self.input_symbol}>{self.output_symbol}"
        if self.kind == "delete":
            return f"dl:{self.input_symbol}"
        if self.kind == "insert":
            return f"in:{self.output_symbol}"
        return "stop"

    @property
    def short_kind(self):
        return {"copy": "cp", "substitute": "sb", "delete": "dl", "insert": "in"}.get(self.kind, "stop")


def _pad(s, width, fill, left):
    s = s[-width:] if left else s[:width]
    return (fill * (width - len(s)) + s) if left else (s + fill * (width - len(s)))


def input_features(op, w, i):
    """Templates looking at the surface context of an edit applied at read position ``i``."""
    consumes = op.kind in ("copy", "substitute", "delete")
    after = i + 1 if consumes else i
    l1 = w[i - 1] if i > 0 else BOS
    l2 = _pad(w[:i], 2, BOS, left=True)
    r1 = w[after] if after < len(w) else EOS
    r2 = _pad(w[after:after + 2], 2, EOS, left=False)
    c = op.code
    feats = [
        c,
        f"K:{op.short_kind}",
        f"{c}|l1={l1}",
        f"{c}|r1={r1}",
        f"{c}|l1={l1}|r1={r1}",
        f"{c}|l2={l2}",
        f"{c}|r2={r2}",
        f"{c}|B^" if i == 0 else None,
        f"{c}|B$" if r1 == EOS else None,
    ]
    return feats


N_INPUT_TEMPLATES = 9


def output_feature(op, prev):
    """Template conjoining an edit with the previously written underlying symbol."""
    return f"{op.code}|p1={prev}"


def arc_features(op, w, i, prev):
    """All feature strings of one arc (the null entries dropped)."""
    return [f for f in input_features(op, w, i) if f is not None] + [output_feature(op, prev)]


class CompiledWord:
    """Feature-id tensors for every arc that can leave a read position of ``w``.

    Columns: ``0..S-1`` consume ``w[i]`` writing symbol ``c``; ``S`` delete;
    ``S+1..2S`` insert symbol ``c``; ``2S+1`` stop. Previous-output rows:
    ``0`` is the word start, ``1..S`` the alphabet.
    """

    def __init__(self, w, alphabet, sym_index, index):
        S = len(alphabet)
        n = len(w)
        self.w = w
        self.n = n
        self.S = S
        self.ncols = C = 2 * S + 2
        self.nprev = P = S + 1
        self.in_ids = np.zeros((n + 1, C, N_INPUT_TEMPLATES), dtype=np.int64)
        self.out_ids = np.zeros((n + 1, C, P), dtype=np.int64)
        self.valid = np.zeros((n + 1, C), dtype=bool)
        prevs = [BOS] + list(alphabet)
        for i in range(n + 1):
            for col, op in self._ops(i, alphabet, sym_index):
                self.valid[i, col] = True
                self.in_ids[i, col] = [0 if f is None else index.add(f) for f in input_features(op, w, i)]
                self.out_ids[i, col] = [index.add(output_feature(op, p)) for p in prevs]

    def _ops(self, i, alphabet, sym_index):
        S = len(alphabet)
        w = self.w
        if i < self.n:
            a = w[i]
            for c, b in enumerate(alphabet):
                yield c, EditOperation("copy" if a == b else "substitute", a, b)
            yield S, EditOperation("delete", a, None)
        for c, b in enumerate(alphabet):
            yield S + 1 + c, EditOperation("insert", None, b)
        if i == self.n:
            yield 2 * S + 1, EditOperation("stop")

    def op_at(self, i, col, alphabet):
        S = self.S
        if col < S:
            a, b = self.w[i], alphabet[col]
            return EditOperation("copy" if a == b else "substitute", a, b)
        if col == S:
            return EditOperation("delete", self.w[i], None)
        if col <= 2 * S:
            return EditOperation("insert", None, alphabet[col - S - 1])
        return EditOperation("stop")


@dataclass
class TransducerParams:
    """Weights and structure of an edit model.

    ``normalized`` selects the locally normalized proposal reading; the
    unnormalized factor has no stop action.
    """

    alphabet: tuple
    weights: WeightVector = field(default_factory=WeightVector)
    insertion_limit: int = DEFAULT_INSERTION_LIMIT
    normalized: bool = False
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.alphabet = tuple(sorted(set(self.alphabet)))
        if self.insertion_limit < 0:
            raise TransducerError("insertion limit must be nonnegative")
        self._sym = {c: x for x, c in enumerate(self.alphabet)}
        self._compiled = {}

    @property
    def omega(self):
        return self.weights.sync()

    @property
    def index(self):
        return self.weights.index

    def compile(self, w):
        cw = self._compiled.get(w)
        if cw is None:
            self.check_symbols(w, "surface")
            cw = CompiledWord(w, self.alphabet, self._sym, self.weights.index)
            self._compiled[w] = cw
            self.weights.sync()
        return cw

    def check_symbols(self, s, what):
        for ch in s:
            if ch not in self._sym:
                raise TransducerError(f"{what} symbol {ch!r} outside the model alphabet")

    def encode(self, u):
        self.check_symbols(u, "underlying")
        return [self._sym[c] for c in u]

    def copy(self, normalized=None):
        clone = TransducerParams(self.alphabet, self.weights.copy(), self.insertion_limit,
                                 self.normalized if normalized is None else normalized, self.epsilon)
        # compiled ids stay valid: the copied index preserves every existing id
        clone._compiled = dict(self._compiled)
        return clone

    # ------------------------------------------------------------------ scores

    def arc_scores(self, cw):
        """Arc log-weights shaped (read position, previous output, column)."""
        omega = self.omega
        A = omega[cw.in_ids].sum(-1)
        O = omega[cw.out_ids]
        scores = (A[:, :, None] + O).transpose(0, 2, 1)
        valid = cw.valid[:, None, :]
        if not self.normalized:
            valid = valid.copy()
            valid[..., -1] = False
        return np.where(valid, scores, NEG_INF)

    def local_log_probs(self, cw, smoothed=True):
        """Log-probabilities of each edit given (inserts left?, read position, previous output).

        Index 0 of the first axis is the state where the insertion limit is
        exhausted, index 1 where inserts remain.
        """
        scores = self.arc_scores(cw)
        S = cw.S
        no_ins = scores.copy()
        no_ins[..., S + 1:2 * S + 1] = NEG_INF
        logits = np.stack([no_ins, scores])
        lp = log_normalize(logits)
        if smoothed and self.epsilon > 0:
            finite = np.isfinite(logits)
            nvalid = finite.sum(-1, keepdims=True)
            with np.errstate(divide="ignore"):
                mix = np.logaddexp(np.log1p(-self.epsilon) + lp,
                                   np.log(self.epsilon) - np.log(np.maximum(nvalid, 1)))
            lp = np.where(finite, mix, NEG_INF)
        return lp, logits


def _check_pair(u, w, params):
    if len(u) > len(w) + params.insertion_limit:
        raise TransducerError(
            f"underlying form {u!r} exceeds surface {w!r} by more than {params.insertion_limit} symbols")


class _PairLattice:
    """Arc tensors for one (u, w) pair, shaped (n+1, m+1, k+1)."""

    def __init__(self, u, w, params, local=None):
        _check_pair(u, w, params)
        cw = params.compile(w)
        uu = params.encode(u)
        n, m, k = len(w), len(u), params.insertion_limit
        S = cw.S
        self.cw, self.uu, self.n, self.m, self.k = cw, uu, n, m, k
        prev = np.array([0] + [x + 1 for x in uu], dtype=np.int64)  # prev index at j
        nxt = np.array(uu + [0], dtype=np.int64)  # symbol written at j (dummy at m)
        self.prev, self.nxt = prev, nxt
        if local is None:
            table = params.arc_scores(cw)[None].repeat(2, 0)
        else:
            table = local
        # table: (2, n+1, P, C); pick per (i, j) then expand n by insert availability
        ii = np.arange(n + 1)[:, None]
        pj = prev[None, :]
        cons = table[:, ii, pj, nxt[None, :]]  # (2, n+1, m+1)
        dele = table[:, ii, pj, S]
        ins = table[:, ii, pj, S + 1 + nxt[None, :]]
        stop = table[:, n, prev[m], 2 * S + 1]
        cons[:, :, m] = NEG_INF
        ins[:, :, m] = NEG_INF
        cons[:, n, :] = NEG_INF
        dele[:, n, :] = NEG_INF
        avail = np.ones(k + 1, dtype=np.int64)
        avail[k] = 0
        self.Tc = np.moveaxis(cons[avail], 0, -1)
        self.Td = np.moveaxis(dele[avail], 0, -1)
        Ti = np.moveaxis(ins[avail], 0, -1).copy()
        Ti[..., k] = NEG_INF
        self.Ti = Ti
        self.Tstop = stop[avail] if params.normalized else np.zeros(k + 1)

    def forward(self):
        n, m, k = self.n, self.m, self.k
        alpha = np.full((n + 1, m + 1, k + 1), NEG_INF)
        alpha[0, 0, 0] = 0.0
        Tc, Td, Ti = self.Tc, self.Td, self.Ti
        for i in range(n + 1):
            row = alpha[i]
            if i > 0:
                row[1:] = np.logaddexp(row[1:], alpha[i - 1, :-1] + Tc[i - 1, :-1])
                row[:] = np.logaddexp(row, alpha[i - 1] + Td[i - 1])
            for nn in range(1, k + 1):
                row[1:, nn] = np.logaddexp(row[1:, nn], row[:-1, nn - 1] + Ti[i, :-1, nn - 1])
        self.alpha = alpha
        self.log_z = logsumexp(alpha[n, m] + self.Tstop)
        return self.log_z

    def backward(self):
        n, m, k = self.n, self.m, self.k
        beta = np.full((n + 1, m + 1, k + 1), NEG_INF)
        beta[n, m] = self.Tstop
        Tc, Td, Ti = self.Tc, self.Td, self.Ti
        for i in range(n, -1, -1):
            row = beta[i]
            if i < n:
                row[:-1] = np.logaddexp(row[:-1], beta[i + 1, 1:] + Tc[i, :-1])
                row[:] = np.logaddexp(row, beta[i + 1] + Td[i])
            for nn in range(k - 1, -1, -1):
                row[:-1, nn] = np.logaddexp(row[:-1, nn], row[1:, nn + 1] + Ti[i, :-1, nn])
        self.beta = beta
        return beta

    def arc_posteriors(self):
        """Posterior mass of consume, delete and insert arcs, summed over insert counts."""
        if not np.isfinite(self.log_z):
            raise TransducerError("no edit path connects the pair")
        a, b, z = self.alpha, self.beta, self.log_z
        with np.errstate(invalid="ignore"):
            gc = np.exp(a[:-1, :-1] + self.Tc[:-1, :-1] + b[1:, 1:] - z).sum(-1)
            gd = np.exp(a[:-1] + self.Td[:-1] + b[1:] - z).sum(-1)
            gi = np.exp(a[:, :-1, :-1] + self.Ti[:, :-1, :-1] + b[:, 1:, 1:] - z).sum(-1)
        return np.nan_to_num(gc), np.nan_to_num(gd), np.nan_to_num(gi)

    def node_posteriors(self):
        with np.errstate(invalid="ignore"):
            occ = np.exp(self.alpha + self.beta - self.log_z)
        return np.nan_to_num(occ)

    def arc_weight_tensor(self):
        """Posterior arc mass scattered to (read position, previous output, column)."""
        cw = self.cw
        S = cw.S
        n, m = self.n, self.m
        gc, gd, gi = self.arc_posteriors()
        W = np.zeros((n + 1, cw.nprev, cw.ncols))
        prev, nxt = self.prev, self.nxt
        ii = np.arange(n)[:, None]
        np.add.at(W, (np.broadcast_to(ii, (n, m)), np.broadcast_to(prev[None, :m], (n, m)),
                      np.broadcast_to(nxt[None, :m], (n, m))), gc)
        np.add.at(W, (np.broadcast_to(ii, (n, m + 1)), np.broadcast_to(prev[None, :], (n, m + 1)),
                      S), gd)
        ii2 = np.arange(n + 1)[:, None]
        np.add.at(W, (np.broadcast_to(ii2, (n + 1, m)), np.broadcast_to(prev[None, :m], (n + 1, m)),
                      S + 1 + np.broadcast_to(nxt[None, :m], (n + 1, m))), gi)
        return W


def features_from_arc_weights(cw, W, size):
    """Map per-arc masses shaped (read position, previous output, column) to a feature vector."""
    win = W.sum(1)  # (n+1, C)
    counts = counts_from_ids(cw.in_ids, np.broadcast_to(win[:, :, None], cw.in_ids.shape), size)
    wout = W.transpose(0, 2, 1)  # (n+1, C, P)
    counts += counts_from_ids(cw.out_ids, wout, size)
    return counts


# ---------------------------------------------------------------- public ops


def transduction_log_score(u, w, params):
    """Log of the summed exponentiated path weights of all edit paths from ``w`` to ``u``."""
    if params.normalized:
        raise TransducerError("use q1_log_prob for the locally normalized model")
    return float(_PairLattice(u, w, params).forward())


def transduction_expected_features(u, w, params):
    """Path-posterior expectation of the arc feature counts (dense over the feature index)."""
    lat = _PairLattice(u, w, params)
    lat.forward()
    lat.backward()
    W = lat.arc_weight_tensor()
    return features_from_arc_weights(lat.cw, W, len(params.index))


def transduction_score_and_features(u, w, params):
    lat = _PairLattice(u, w, params)
    z = lat.forward()
    lat.backward()
    W = lat.arc_weight_tensor()
    return float(z), features_from_arc_weights(lat.cw, W, len(params.index))


def q1_log_prob(u, w, params, local=None):
    """Marginal log q1(u | w), summing over all edit paths that write ``u``."""
    if local is None:
        local, _ = params.local_log_probs(params.compile(w))
    return float(_PairLattice(u, w, params, local=local).forward())


def q1_log_likelihood_and_gradient(u, w, params):
    """Unsmoothed conditional log-likelihood of ``u`` and its gradient wrt the weights."""
    cw = params.compile(w)
    lp, logits = params.local_log_probs(cw, smoothed=False)
    lat = _PairLattice(u, w, params, local=lp)
    ll = lat.forward()
    lat.backward()
    W = lat.arc_weight_tensor()
    size = len(params.index)
    # stop arc mass
    occ = lat.node_posteriors()  # (n+1, m+1, k+1)
    k, n, m, S = lat.k, lat.n, lat.m, cw.S
    W[n, lat.prev[m], 2 * S + 1] += occ[n, m].sum()
    gold = features_from_arc_weights(cw, W, size)
    # expected features under each visited state's local distribution
    state = np.zeros((2, n + 1, cw.nprev))
    inserts_left = np.ones(k + 1, dtype=np.int64)
    inserts_left[k] = 0
    for nn in range(k + 1):
        np.add.at(state[inserts_left[nn]], (slice(None), lat.prev), occ[:, :, nn])
    probs = np.exp(lp)
    expected = (state[..., None] * probs).sum(0)  # (n+1, P, C)
    grad = gold - features_from_arc_weights(cw, expected, size)
    return float(ll), grad


def sample_q1(w, params, rng, size=None):
    """Draw underlying forms from q1(. | w).

    Returns ``(u, log q1(u | w))`` for a single draw, or a list of such pairs
    when ``size`` is given. Log-probabilities are marginal over edit paths.
    """
    rng = np.random.default_rng(rng)
    cw = params.compile(w)
    lp, _ = params.local_log_probs(cw)
    n, k, S, C = cw.n, params.insertion_limit, cw.S, cw.ncols
    M = 1 if size is None else int(size)
    cdf = np.cumsum(np.exp(lp), axis=-1)
    last_pos = C - 1 - np.argmax((np.exp(lp) > 0)[..., ::-1], axis=-1)
    i = np.zeros(M, dtype=np.int64)
    nn = np.zeros(M, dtype=np.int64)
    prev = np.zeros(M, dtype=np.int64)
    done = np.zeros(M, dtype=bool)
    steps = n + k + 1
    out = np.full((M, steps), -1, dtype=np.int64)
    for t in range(steps):
        act = np.flatnonzero(~done)
        if not len(act):
            break
        left = (nn[act] < k).astype(np.int64)
        rows = cdf[left, i[act], prev[act]]  # (A, C)
        r = rng.random(len(act)) * rows[:, -1]
        col = np.minimum((rows <= r[:, None]).sum(1), last_pos[left, i[act], prev[act]])
        is_cons = col < S
        is_del = col == S
        is_ins = (col > S) & (col <= 2 * S)
        is_stop = col == 2 * S + 1
        sym = np.where(is_cons, col, col - S - 1)
        writes = is_cons | is_ins
        out[act[writes], t] = sym[writes]
        i[act[is_cons | is_del]] += 1
        nn[act[is_ins]] += 1
        prev[act[writes]] = sym[writes] + 1
        done[act[is_stop]] = True
    if not done.all():
        raise TransducerError("sampler failed to terminate")
    alphabet = params.alphabet
    forms = ["".join(alphabet[x] for x in row if x >= 0) for row in out]
    cache = {}
    draws = []
    for u in forms:
        if u not in cache:
            cache[u] = q1_log_prob(u, w, params, local=lp)
        draws.append((u, cache[u]))
    return draws[0] if size is None else draws


def enumerate_underlying_forms(w, alphabet, insertion_limit):
    """All strings over ``alphabet`` of length at most ``len(w) + insertion_limit`` (tests, tiny inputs)."""
    from itertools import product

    for length in range(len(w) + insertion_limit + 1):
        for t in product(sorted(alphabet), repeat=length):
            yield "".join(t)


@dataclass
class ProposalConfig:
    """Optimization settings for supervised proposal training."""

    epochs: int = 10
    rate: float = 0.1
    l2: float = 0.01
    seed: int = 0
    insertion_limit: int = DEFAULT_INSERTION_LIMIT
    epsilon: float = DEFAULT_EPSILON
    max_segment_length: int = 12


def train_proposal_q1(pairs, config=None, alphabet=None):
    """Fit q1(u | w) by conditional maximum likelihood on ``(w, u)`` pairs.

    The objective is the summed unsmoothed log-likelihood minus
    ``l2 * ||omega||^2``; AdaGrad runs over a seeded shuffle each epoch.
    """
    config = config or ProposalConfig()
    pairs = [(w, u) for w, u in pairs]
    if not pairs:
        raise TransducerError("empty training set")
    if alphabet is None:
        alphabet = {c for w, u in pairs for c in w + u}
    params = TransducerParams(tuple(alphabet), insertion_limit=config.insertion_limit,
                              normalized=True, epsilon=config.epsilon)
    usable = []
    for w, u in pairs:
        try:
            _check_pair(u, w, params)
            params.compile(w)
            usable.append((w, u))
        except TransducerError as exc:
            _logger.warning("skipping q1 training pair (%r, %r): %s", w, u, exc)
    if not usable:
        raise TransducerError("no usable training pairs")
    opt = AdaGrad(config.rate)
    rng = np.random.default_rng(config.seed)
    shrink = 2.0 * config.l2 / len(usable)
    for epoch in range(config.epochs):
        total = 0.0
        for idx in rng.permutation(len(usable)):
            w, u = usable[idx]
            ll, grad = q1_log_likelihood_and_gradient(u, w, params)
            total += ll
            omega = params.weights.active
            grad = grad - shrink * omega
            grad[0] = 0.0
            opt.ascend("omega", omega, grad)
        _logger.info("q1 epoch %d: mean log-likelihood %.4f", epoch + 1, total / len(usable))
    return params

"""Composition functions mapping a labeled morpheme sequence to a word vector.

Supported kinds:

    stem     c = sum of stem vectors
    mult     c = elementwise product of all morpheme vectors
    add      c = sum of morpheme vectors
    wadd     c = sum_i alpha_i m_i           (alpha tied by position)
    fulladd  c = sum_i U_i m_i               (U_i tied by position)
    LDS      h_i = X h_{i-1} + U m_i,        output h_N
    RNN      h_i = tanh(X h_{i-1} + U m_i),  output h_N

``h_0`` is trainable for the two recurrent kinds. Position-tied kinds accept
at most ``MAX_MORPHEMES`` morphemes.
"""

import logging

import numpy as np

from .embeddings import MorphemeEmbeddings, STEM

_logger = logging.getLogger(__name__)

KINDS = ("stem", "mult", "add", "wadd", "fulladd", "LDS", "RNN")
MAX_MORPHEMES = 7


class CompositionError(ValueError):
    pass


class CompositionModel:
    def __init__(self, kind, dim, seed=0, max_morphemes=MAX_MORPHEMES):
        if kind not in KINDS:
            raise CompositionError(f"unknown composition kind {kind!r}; expected one of {KINDS}")
        if dim <= 0:
            raise CompositionError("dimension must be positive")
        self.kind = kind
        self.dim = d = int(dim)
        self.max_morphemes = max_morphemes
        rng = np.random.default_rng(seed)
        self.params = {}
        if kind == "wadd":
            self.params["alpha"] = np.ones(max_morphemes)
        elif kind == "fulladd":
            self.params["U"] = np.stack([np.eye(d)] * max_morphemes)
        elif kind in ("LDS", "RNN"):
            self.params["X"] = 0.9 * np.eye(d) + rng.uniform(-0.01, 0.01, (d, d))
            self.params["U"] = 0.9 * np.eye(d) + rng.uniform(-0.01, 0.01, (d, d))
            self.params["h0"] = np.zeros(d)

    @property
    def position_tied(self):
        return self.kind in ("wadd", "fulladd")

    def copy(self):
        clone = CompositionModel.__new__(CompositionModel)
        clone.kind, clone.dim, clone.max_morphemes = self.kind, self.dim, self.max_morphemes
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def absent_policy(self):
        return "ones" if self.kind == "mult" else "zeros"


def make_morpheme_store(model, table, seed=0):
    """Morpheme store whose absent-vector policy suits ``model``."""
    return MorphemeEmbeddings(table, seed=seed, absent=model.absent_policy())


def _vectors(model, seg, store):
    if model.position_tied and len(seg) > model.max_morphemes:
        raise CompositionError(
            f"{model.kind} composes at most {model.max_morphemes} morphemes, got {len(seg)}")
    return [np.asarray(store.lookup(l, s), dtype=float) for s, l in zip(seg.segments, seg.labels)]


def _recurrent_states(model, ms):
    p = model.params
    hs = [p["h0"]]
    for m in ms:
        a = p["X"] @ hs[-1] + p["U"] @ m
        hs.append(np.tanh(a) if model.kind == "RNN" else a)
    return hs


def compose(model, seg, store):
    """Vector for a labeled segmentation under ``model``."""
    ms = _vectors(model, seg, store)
    kind = model.kind
    p = model.params
    if kind == "stem":
        c = np.zeros(model.dim)
        for m, label in zip(ms, seg.labels):
            if label == STEM:
                c = c + m
        return c
    if kind == "mult":
        c = np.ones(model.dim)
        for m in ms:
            c = c * m
        return c
    if kind == "add":
        return np.sum(ms, axis=0)
    if kind == "wadd":
        return sum(a * m for a, m in zip(p["alpha"], ms))
    if kind == "fulladd":
        return sum(U @ m for U, m in zip(p["U"], ms))
    return _recurrent_states(model, ms)[-1]


def compose_backward(model, seg, store, upstream):
    """Gradients of ``upstream . compose(...)``.

    Returns ``(param_grads, morph_grads)``: a dict keyed like
    ``model.params`` and a dict keyed by trainable ``(label, morpheme)``.
    Stem vectors never receive gradient.
    """
    ms = _vectors(model, seg, store)
    g = np.asarray(upstream, dtype=float)
    kind = model.kind
    p = model.params
    pg = {k: np.zeros_like(v) for k, v in p.items()}
    dms = [None] * len(ms)
    if kind == "stem":
        pass
    elif kind == "add":
        dms = [g] * len(ms)
    elif kind == "mult":
        n = len(ms)
        left = [np.ones(model.dim)]
        for m in ms[:-1]:
            left.append(left[-1] * m)
        right = np.ones(model.dim)
        for i in range(n - 1, -1, -1):
            dms[i] = g * left[i] * right
            right = right * ms[i]
    elif kind == "wadd":
        for i, m in enumerate(ms):
            pg["alpha"][i] = g @ m
            dms[i] = p["alpha"][i] * g
    elif kind == "fulladd":
        for i, m in enumerate(ms):
            pg["U"][i] = np.outer(g, m)
            dms[i] = p["U"][i].T @ g
    else:
        hs = _recurrent_states(model, ms)
        delta = g
        for i in range(len(ms), 0, -1):
            da = delta * (1.0 - hs[i] ** 2) if kind == "RNN" else delta
            pg["X"] += np.outer(da, hs[i - 1])
            pg["U"] += np.outer(da, ms[i - 1])
            dms[i - 1] = p["U"].T @ da
            delta = p["X"].T @ da
        pg["h0"] = delta
    morph = {}
    for (s, label), dm in zip(zip(seg.segments, seg.labels), dms):
        if dm is None or not store.is_trainable(label):
            continue
        key = (label, s)
        morph[key] = morph[key] + dm if key in morph else np.array(dm, dtype=float)
    return pg, morph


def gaussian_log_factor(v, c, sigma2):
    """Unnormalized log-density ``-||v - c||^2 / (2 sigma2)``."""
    v = np.asarray(v, dtype=float)
    c = np.asarray(c, dtype=float)
    if v.shape != c.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {c.shape}")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    r = v - c
    return -float(r @ r) / (2.0 * sigma2)


def gaussian_gradients(model, seg, store, v, sigma2):
    """Ascent gradients of the Gaussian log-factor wrt composition params and trainable morphemes."""
    c = compose(model, seg, store)
    upstream = (np.asarray(v, dtype=float) - c) / sigma2
    return compose_backward(model, seg, store, upstream)


def apply_gradients(optimizer, model, store, param_grads, morph_grads, scale=1.0, l2=0.0):
    """One optimizer step on composition params (L2-penalized when ``l2 > 0``) and morpheme vectors."""
    for name, g in param_grads.items():
        optimizer.ascend(("beta", name), model.params[name], scale * g, l2)
    for key, g in morph_grads.items():
        optimizer.ascend(("morph",) + key, store.vectors[key], scale * g)


def fit_composition(model, store, examples, epochs=30, rate=0.1, sigma2=1.0, l2=0.0, seed=0,
                    optimizer=None):
    """Fit ``model`` and the trainable morpheme vectors to ``(segmentation, vector)`` pairs.

    Maximizes the summed Gaussian log-factor with AdaGrad over shuffled
    examples; returns the per-epoch mean squared residuals.
    """
    from .optim import AdaGrad

    optimizer = optimizer or AdaGrad(rate)
    rng = np.random.default_rng(seed)
    examples = list(examples)
    n = max(len(examples), 1)
    trace = []
    for _ in range(epochs):
        total = 0.0
        for idx in rng.permutation(len(examples)):
            seg, v = examples[idx]
            c = compose(model, seg, store)
            r = v - c
            total += float(r @ r)
            pg, mg = compose_backward(model, seg, store, r / sigma2)
            apply_gradients(optimizer, model, store, pg, mg, l2=l2 / n)
        trace.append(total / n)
    return trace

"""Character-level retrofitting baseline.

A stacked character recurrence reads the spelling of a word and a linear
projection of the final top-layer state regresses the word's embedding.
It never sees segmentations.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .optim import Adam

_logger = logging.getLogger(__name__)

UNKNOWN = "\x00"
ARCHITECTURES = ("simple", "gru")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class CharRetrofitConfig:
    architecture: str = "gru"
    depth: int = 2
    hidden: int = 100
    iterations: int = 100
    rate: float = 0.01
    l2: float = 0.01
    seed: int = 0


class CharRetrofitModel:
    def __init__(self, alphabet, dim, architecture="gru", depth=2, hidden=100, seed=0):
        if architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")
        if depth < 1 or hidden < 1:
            raise ValueError("depth and hidden size must be positive")
        self.chars = (UNKNOWN,) + tuple(sorted(set(alphabet) - {UNKNOWN}))
        self.char_index = {c: i for i, c in enumerate(self.chars)}
        self.dim, self.architecture, self.depth, self.hidden = dim, architecture, depth, hidden
        rng = np.random.default_rng(seed)
        H = hidden
        scale = 1.0 / np.sqrt(H)
        self.params = {}
        for l in range(depth):
            n_in = len(self.chars) if l == 0 else H
            gates = ("",) if architecture == "simple" else ("z", "r", "n")
            for g in gates:
                self.params[f"A{g}{l}"] = rng.uniform(-scale, scale, (H, H))
                self.params[f"B{g}{l}"] = rng.uniform(-scale, scale, (H, n_in))
                self.params[f"b{g}{l}"] = np.zeros(H)
        self.params["W"] = rng.uniform(-scale, scale, (dim, H))
        self.params["c"] = np.zeros(dim)
        self.loss_trace = []

    # ------------------------------------------------------------ encoding

    def encode(self, words):
        """One-hot inputs (T, B, V) and a step mask (T, B, 1)."""
        T = max(len(w) for w in words)
        X = np.zeros((T, len(words), len(self.chars)))
        mask = np.zeros((T, len(words), 1))
        for b, w in enumerate(words):
            if not w:
                raise ValueError("empty word")
            for t, ch in enumerate(w):
                X[t, b, self.char_index.get(ch, 0)] = 1.0
                mask[t, b] = 1.0
        return X, mask

    # ------------------------------------------------------------ forward

    def _layer_forward(self, l, X, mask):
        p = self.params
        T, B = X.shape[:2]
        h = np.zeros((B, self.hidden))
        hs, caches = [h], []
        for t in range(T):
            x, m = X[t], mask[t]
            if self.architecture == "simple":
                hn = np.tanh(h @ p[f"A{l}"].T + x @ p[f"B{l}"].T + p[f"b{l}"])
                cache = (x, h, hn)
            else:
                z = _sigmoid(x @ p[f"Bz{l}"].T + h @ p[f"Az{l}"].T + p[f"bz{l}"])
                r = _sigmoid(x @ p[f"Br{l}"].T + h @ p[f"Ar{l}"].T + p[f"br{l}"])
                n = np.tanh(x @ p[f"Bn{l}"].T + (r * h) @ p[f"An{l}"].T + p[f"bn{l}"])
                hn = (1 - z) * n + z * h
                cache = (x, h, z, r, n)
            h = m * hn + (1 - m) * h
            hs.append(h)
            caches.append(cache)
        return np.stack(hs[1:]), caches

    def _forward(self, words):
        X, mask = self.encode(words)
        layers = []
        inp = X
        for l in range(self.depth):
            H, caches = self._layer_forward(l, inp, mask)
            layers.append(caches)
            inp = H
        top = inp[-1]
        out = top @ self.params["W"].T + self.params["c"]
        return out, top, layers, mask

    def predict(self, word):
        return self.predict_batch([word])[0]

    def predict_batch(self, words):
        return self._forward(list(words))[0]

    # ------------------------------------------------------------ backward

    def _layer_backward(self, l, caches, mask, dH, grads):
        """Backprop through layer ``l``; ``dH`` (T, B, H) is the gradient wrt its outputs."""
        p = self.params
        T = len(caches)
        dX = []
        dh = np.zeros_like(dH[0])
        for t in range(T - 1, -1, -1):
            m = mask[t]
            dh = dh + dH[t]
            dhn = m * dh
            dprev = (1 - m) * dh
            if self.architecture == "simple":
                x, h, hn = caches[t]
                da = dhn * (1 - hn ** 2)
                grads[f"A{l}"] += da.T @ h
                grads[f"B{l}"] += da.T @ x
                grads[f"b{l}"] += da.sum(0)
                dprev = dprev + da @ p[f"A{l}"]
                dx = da @ p[f"B{l}"]
            else:
                x, h, z, r, n = caches[t]
                dn = dhn * (1 - z)
                dz = dhn * (h - n)
                dprev = dprev + dhn * z
                dan = dn * (1 - n ** 2)
                grads[f"Bn{l}"] += dan.T @ x
                grads[f"An{l}"] += dan.T @ (r * h)
                grads[f"bn{l}"] += dan.sum(0)
                drh = dan @ p[f"An{l}"]
                dr = drh * h
                dprev = dprev + drh * r
                dx = dan @ p[f"Bn{l}"]
                for g, dg, s in (("z", dz, z), ("r", dr, r)):
                    da = dg * s * (1 - s)
                    grads[f"B{g}{l}"] += da.T @ x
                    grads[f"A{g}{l}"] += da.T @ h
                    grads[f"b{g}{l}"] += da.sum(0)
                    dprev = dprev + da @ p[f"A{g}{l}"]
                    dx = dx + da @ p[f"B{g}{l}"]
            dh = dprev
            dX.append(dx)
        return np.stack(dX[::-1])

    def loss_and_gradient(self, words, vectors, l2=0.0):
        """Summed ``0.5 ||v - out||^2`` plus ``l2`` times the squared weight-matrix norm."""
        out, top, layers, mask = self._forward(words)
        resid = out - np.asarray(vectors, dtype=float)
        loss = 0.5 * float((resid ** 2).sum())
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["W"] += resid.T @ top
        grads["c"] += resid.sum(0)
        T = mask.shape[0]
        dH = np.zeros((T,) + top.shape)
        dH[-1] = resid @ self.params["W"]
        for l in range(self.depth - 1, -1, -1):
            dH = self._layer_backward(l, layers[l], mask, dH, grads)
        if l2:
            for k, v in self.params.items():
                if v.ndim == 2:
                    loss += l2 * float((v ** 2).sum())
                    grads[k] += 2 * l2 * v
        return loss, grads


def char_retrofit_train(words, vectors, config=None):
    """Full-batch Adam on the squared regression loss; records the loss per iteration."""
    config = config or CharRetrofitConfig()
    words = list(words)
    vectors = np.asarray(vectors, dtype=float)
    if not words:
        raise ValueError("no training words")
    alphabet = {c for w in words for c in w}
    model = CharRetrofitModel(alphabet, vectors.shape[1], config.architecture, config.depth,
                              config.hidden, config.seed)
    opt = Adam(config.rate)
    for it in range(config.iterations):
        loss, grads = model.loss_and_gradient(words, vectors, config.l2)
        model.loss_trace.append(loss)
        opt.step(model.params, grads)
        if (it + 1) % 10 == 0:
            _logger.info("char retrofit iteration %d: loss %.4f", it + 1, loss)
    return model


def char_retrofit_predict(model, word):
    return model.predict(word)

"""Per-coordinate adaptive optimizers over named numpy arrays."""

import numpy as np


class AdaGrad:
    """AdaGrad ascent: each coordinate steps by ``rate * g / (sqrt(sum g^2) + eps)``.

    State is keyed by name so parameter arrays may grow between calls
    (feature vectors gain new coordinates as features are interned).
    """

    def __init__(self, rate=0.1, eps=1e-8):
        self.rate = rate
        self.eps = eps
        self._acc = {}

    def ascend(self, key, param, grad, l2=0.0):
        """Update ``param`` in place along ``grad``. Shapes must match.

        With ``l2 > 0`` the penalty ``-l2 * ||param||^2`` enters the
        accumulator through its gradient, as in plain AdaGrad, but is applied
        by the closed-form proximal step ``param / (1 + 2 * l2 * step)``,
        which never overshoots zero.
        """
        acc = self._acc.get(key)
        if acc is None:
            acc = self._acc[key] = np.zeros(param.shape)
        elif acc.shape != param.shape:
            grown = np.zeros(param.shape)
            grown[tuple(slice(0, s) for s in acc.shape)] = acc
            acc = self._acc[key] = grown
        full = grad - 2.0 * l2 * param if l2 else grad
        acc += full * full
        step = self.rate / (np.sqrt(acc) + self.eps)
        param += step * grad
        if l2:
            param /= 1.0 + 2.0 * l2 * step

    def ascend_sparse(self, key, param, grad, ids):
        """Update only coordinates ``ids`` of a 1-d ``param`` with values ``grad``."""
        acc = self._acc.get(key)
        if acc is None or len(acc) < len(param):
            grown = np.zeros(len(param))
            if acc is not None:
                grown[: len(acc)] = acc
            acc = self._acc[key] = grown
        acc[ids] += grad * grad
        param[ids] += self.rate * grad / (np.sqrt(acc[ids]) + self.eps)


class Adam:
    """Adam descent over a dict of arrays (Kingma and Ba defaults)."""

    def __init__(self, rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.rate, self.beta1, self.beta2, self.eps = rate, beta1, beta2, eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            p = params[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.rate * mhat / (np.sqrt(vhat) + self.eps)

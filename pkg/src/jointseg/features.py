"""Feature interning and growable weight vectors shared by the log-linear factors."""

import logging

import numpy as np

_logger = logging.getLogger(__name__)

NULL = "<null>"


class FeatureIndex:
    """Bidirectional map between feature template strings and integer ids.

    Id 0 is reserved for a null feature that never carries weight; it is
    used to pad fixed-width id arrays.
    """

    def __init__(self, names=None):
        self._ids = {NULL: 0}
        self._names = [NULL]
        self.frozen = False
        for name in names or ():
            self.add(name)

    def __len__(self):
        return len(self._names)

    def __contains__(self, name):
        return name in self._ids

    def add(self, name):
        i = self._ids.get(name)
        if i is None:
            if self.frozen:
                return 0
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def get(self, name):
        return self._ids.get(name, 0)

    def name(self, i):
        return self._names[i]

    def names(self):
        return list(self._names)

    def copy(self):
        clone = FeatureIndex()
        clone._ids = dict(self._ids)
        clone._names = list(self._names)
        clone.frozen = self.frozen
        return clone

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i, name in enumerate(self._names):
                fh.write(f"{i}\t{name}\n")

    @classmethod
    def load(cls, path):
        index = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                i, _, name = line.partition("\t")
                if name == NULL:
                    continue
                if int(i) != len(index._names):
                    raise ValueError(f"{path}:{lineno}: non-contiguous feature id {i}")
                index.add(name)
        return index


class WeightVector:
    """Dense parameter vector that grows with its feature index."""

    def __init__(self, index=None, values=None):
        self.index = index if index is not None else FeatureIndex()
        n = max(len(self.index), 16)
        if values is not None:
            values = np.asarray(values, dtype=float)[: len(self.index)]
        self.values = np.zeros(n)
        if values is not None:
            self.values[: len(values)] = values

    def sync(self):
        """Make room for features interned since the last call."""
        n = len(self.index)
        if n > len(self.values):
            grown = np.zeros(max(n, 2 * len(self.values)))
            grown[: len(self.values)] = self.values
            self.values = grown
        return self.values

    @property
    def active(self):
        return self.values[: len(self.index)]

    def dot(self, counts):
        """Inner product with a {feature id: count} mapping."""
        v = self.sync()
        return float(sum(v[i] * c for i, c in counts.items()))

    def dense(self, counts):
        out = np.zeros(len(self.index))
        for i, c in counts.items():
            out[i] += c
        return out

    def copy(self, share_index=False):
        index = self.index if share_index else self.index.copy()
        return WeightVector(index, self.active.copy())

    def named(self, name, value):
        """Set the weight of a feature by its template string."""
        i = self.index.add(name)
        self.sync()[i] = value


def counts_from_ids(ids, weights=None, size=None):
    """Accumulate feature-id arrays into a dense count vector."""
    ids = np.asarray(ids).ravel()
    if weights is not None:
        weights = np.asarray(weights, dtype=float).ravel()
    out = np.bincount(ids, weights=weights, minlength=size or 0)
    if len(out):
        out[0] = 0.0
    return out

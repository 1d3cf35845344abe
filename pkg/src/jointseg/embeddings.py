"""Word embedding tables and label-dependent morpheme embeddings."""

import logging
import math
import zlib

import numpy as np

_logger = logging.getLogger(__name__)

STEM, PREFIX, SUFFIX = "stem", "prefix", "suffix"
LABELS = (STEM, PREFIX, SUFFIX)


class EmbeddingError(ValueError):
    pass


class EmbeddingTable:
    """Immutable map from word to a dense vector; absent words map to zeros."""

    def __init__(self, dim, entries=None):
        if dim <= 0:
            raise EmbeddingError(f"embedding dimension must be positive, got {dim}")
        self.dim = int(dim)
        self._entries = {}
        self._zero = np.zeros(self.dim)
        self._zero.setflags(write=False)
        for word, vec in (entries or {}).items():
            self._set(word, vec)

    def _set(self, word, vec):
        vec = np.array(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise EmbeddingError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")
        vec.setflags(write=False)
        self._entries[word] = vec

    def __len__(self):
        return len(self._entries)

    def __contains__(self, word):
        return word in self._entries

    def __iter__(self):
        return iter(self._entries)

    def items(self):
        return self._entries.items()

    def lookup(self, word):
        return self._entries.get(word, self._zero)

    __getitem__ = lookup

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self._entries)} {self.dim}\n")
            for word, vec in self._entries.items():
                fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_word_embeddings(path, expected_dim=None, lowercase=False):
    """Read a textual embedding file.

    The first line holds ``<count> <dim>``; each following line holds a
    word and ``dim`` reals separated by single spaces. Duplicate words keep
    the last vector.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path}: malformed header {' '.join(header)!r}")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingError(f"{path}: malformed header {' '.join(header)!r}") from None
        if expected_dim is not None and dim != expected_dim:
            raise EmbeddingError(f"{path}: dimension {dim} does not match expected {expected_dim}")
        table = EmbeddingTable(dim)
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if parts == [""]:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingError(f"{path}:{lineno}: row length {len(values)} != {dim}")
            if lowercase:
                word = word.lower()
            if word in table:
                _logger.warning("%s:%d: duplicate word %r, keeping last vector", path, lineno, word)
            table._set(word, [float(x) for x in values])
    if len(table) != count:
        _logger.warning("%s: header announces %d words, read %d", path, count, len(table))
    return table


def cosine(a, b):
    """Cosine similarity, or None when either vector has zero norm."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


class MorphemeEmbeddings:
    """Label-dependent morpheme vectors.

    Stems resolve through the frozen word table. Prefix and suffix vectors
    are trainable and created lazily on first access.
    """

    trainable_labels = (PREFIX, SUFFIX)

    def __init__(self, table, seed=0, absent="zeros"):
        self.table = table
        self.dim = table.dim
        self.absent = absent
        self.vectors = {}
        self.seed = seed

    def is_trainable(self, label):
        return label in self.trainable_labels

    def _init_vector(self, label, morph):
        # keyed on the morpheme so creation order never changes the draw
        key = [self.seed, zlib.crc32(label.encode("utf-8")), zlib.crc32(morph.encode("utf-8"))]
        scale = 0.1 / math.sqrt(self.dim)
        vec = np.random.default_rng(key).uniform(-scale, scale, self.dim)
        if self.absent == "ones":
            vec += 1.0
        return vec

    def lookup(self, label, morph, create=True):
        if label == STEM:
            if morph in self.table:
                return self.table.lookup(morph)
            return np.ones(self.dim) if self.absent == "ones" else self.table.lookup(morph)
        key = (label, morph)
        vec = self.vectors.get(key)
        if vec is None:
            if not create:
                return np.ones(self.dim) if self.absent == "ones" else np.zeros(self.dim)
            vec = self.vectors[key] = self._init_vector(label, morph)
        return vec

    def copy(self):
        clone = MorphemeEmbeddings(self.table, self.seed, self.absent)
        clone.vectors = {k: v.copy() for k, v in self.vectors.items()}
        return clone

"""Canonical-segmentation datasets and the synthetic corpus generator.

Dataset files are UTF-8, one word per line::

    questionably<TAB>question:stem+able:suffix+ly:suffix

The underlying form is the concatenation of the segments.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .embeddings import LABELS, PREFIX, STEM, SUFFIX, EmbeddingTable
from .segmenter import LabeledSegmentation, SegmentationError

_logger = logging.getLogger(__name__)

VOWELS = "aeiou"


class DataError(ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


@dataclass(frozen=True)
class CanonicalAnalysis:
    """An underlying form together with a labeled segmentation of it."""

    u: str
    seg: LabeledSegmentation

    def __post_init__(self):
        if self.seg.u != self.u:
            raise SegmentationError(f"segments {self.seg} do not concatenate to {self.u!r}")

    @classmethod
    def of(cls, seg):
        return cls(seg.u, seg)

    @property
    def segments(self):
        return self.seg.segments

    @property
    def labels(self):
        return self.seg.labels

    def __str__(self):
        return str(self.seg)


@dataclass(frozen=True)
class DatasetRecord:
    surface: str
    analysis: CanonicalAnalysis

    @property
    def u(self):
        return self.analysis.u

    def to_line(self):
        return f"{self.surface}\t{self.analysis}"


def parse_analysis(text, lineno=None):
    segments, labels = [], []
    for part in text.split("+"):
        if part.count(":") != 1:
            raise DataError(f"segment {part!r} must contain exactly one ':' (no '+' or ':' inside segments)",
                            lineno)
        seg, label = part.split(":")
        if not seg:
            raise DataError("empty segment", lineno)
        if label not in LABELS:
            raise DataError(f"unknown label {label!r}", lineno)
        segments.append(seg)
        labels.append(label)
    return CanonicalAnalysis.of(LabeledSegmentation(segments, labels))


def parse_dataset_line(line, lineno=None, insertion_limit=None):
    """Parse ``surface<TAB>seg:label+...`` into a validated record."""
    line = line.rstrip("\r\n").rstrip()
    surface, sep, rest = line.partition("\t")
    if not sep:
        raise DataError("missing tab", lineno)
    if not surface:
        raise DataError("empty surface form", lineno)
    if "\t" in rest:
        rest = rest.split("\t")[0]
    analysis = parse_analysis(rest, lineno)
    if insertion_limit is not None and len(analysis.u) > len(surface) + insertion_limit:
        raise DataError(f"underlying form {analysis.u!r} exceeds surface by more than {insertion_limit}", lineno)
    return DatasetRecord(surface, analysis)


def read_dataset(path, insertion_limit=None, two_morpheme=False):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            rec = parse_dataset_line(line, lineno, insertion_limit)
            records.append(to_two_morphemes(rec) if two_morpheme else rec)
    return records


def write_dataset(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")


def to_two_morphemes(record):
    """Collapse an analysis to base + outermost affix (prefix takes precedence)."""
    seg = record.analysis.seg
    if len(seg) <= 2:
        return record
    if seg.labels[0] == PREFIX:
        new = LabeledSegmentation((seg.segments[0], "".join(seg.segments[1:])), (PREFIX, STEM))
    elif seg.labels[-1] == SUFFIX:
        new = LabeledSegmentation(("".join(seg.segments[:-1]), seg.segments[-1]), (STEM, SUFFIX))
    else:
        new = LabeledSegmentation(("".join(seg.segments),), (STEM,))
    return DatasetRecord(record.surface, CanonicalAnalysis.of(new))


def relabel_by_stem_lexicon(surface, segments, lexicon):
    """Reconstruct labels for unlabeled gold segments.

    The first segment found in ``lexicon`` is the stem; material before it
    is prefixal and material after it suffixal. Without a lexicon match the
    longest segment is taken as the stem.
    """
    stem_at = next((i for i, s in enumerate(segments) if s in lexicon), None)
    if stem_at is None:
        stem_at = max(range(len(segments)), key=lambda i: len(segments[i]))
    labels = [PREFIX] * stem_at + [STEM] + [SUFFIX] * (len(segments) - stem_at - 1)
    return CanonicalAnalysis.of(LabeledSegmentation(segments, labels))


# ------------------------------------------------------------------ synthetic


def e_deletion(left, right):
    """Stem-final ``e`` drops before a vowel-initial suffix."""
    if left[1] == STEM and right[1] == SUFFIX and left[0].endswith("e") and right[0][:1] in VOWELS \
            and len(left[0]) > 1:
        return left[0][:-1]
    return left[0]


def le_contraction(left, right):
    """Suffix-final ``le`` drops before ``ly`` (able + ly -> ably)."""
    if left[1] == SUFFIX and right[1] == SUFFIX and left[0].endswith("le") and right[0] == "ly":
        return left[0][:-2]
    return left[0]


RULES = {
    "e-deletion": (e_deletion,),
    "english": (e_deletion, le_contraction),
    "none": (),
}


def realize(segments, labels, rule="e-deletion"):
    """Surface string of a canonical analysis under an orthographic rule set."""
    rules = RULES[rule]
    out = []
    for i, (s, l) in enumerate(zip(segments, labels)):
        if i + 1 < len(segments):
            for r in rules:
                s = r((s, l), (segments[i + 1], labels[i + 1]))
        out.append(s)
    return "".join(out)


@dataclass
class SyntheticConfig:
    stems: int = 300
    suffixes: tuple = ("ing", "er", "able", "ness", "ly", "ful")
    prefixes: tuple = ("un", "re")
    rule: str = "e-deletion"
    noise: float = 0.05
    dim: int = 10
    words_per_stem: int = 2
    e_final_rate: float = 0.6
    prefix_rate: float = 0.3
    seed: int = 0


@dataclass
class SyntheticCorpus:
    records: list
    table: EmbeddingTable
    latent: dict = field(default_factory=dict)  # (label, morpheme) -> vector
    config: SyntheticConfig = None

    def rule_rate(self):
        """Fraction of records whose surface differs from their underlying form."""
        if not self.records:
            return 0.0
        return sum(r.surface != r.u for r in self.records) / len(self.records)


_CONS = "bcdfghklmnprstvz"


def _make_stem(rng, e_final_rate):
    patterns = ("CVC", "CVCC", "CVCVC", "VCVC", "CVVC", "CCVC")
    pat = patterns[rng.integers(len(patterns))]
    s = "".join(_CONS[rng.integers(len(_CONS))] if p == "C" else VOWELS[rng.integers(5)] for p in pat)
    if rng.random() < e_final_rate:
        s += "e"
    return s


def generate_synthetic_corpus(config=None):
    """Build a derivational corpus whose vectors compose additively by construction.

    Words are an optional prefix, a stem and zero to two distinct suffixes;
    surfaces come from the orthographic rule. Every morpheme (stem, prefix,
    suffix) gets a latent Gaussian vector with per-coordinate scale
    ``1/sqrt(dim)``; a word's vector is the sum of its morphemes' latents
    plus Gaussian noise of scale ``noise``. Stems are also words.
    """
    cfg = config or SyntheticConfig()
    if cfg.rule not in RULES:
        raise ValueError(f"unknown rule {cfg.rule!r}; expected one of {sorted(RULES)}")
    affixes = list(cfg.prefixes) + list(cfg.suffixes)
    if len(set(affixes)) != len(affixes):
        raise ValueError("prefix and suffix inventories collide")
    rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    scale = 1.0 / np.sqrt(d)
    stems = []
    seen = set(affixes)
    while len(stems) < cfg.stems:
        s = _make_stem(rng, cfg.e_final_rate)
        if s in seen:
            continue
        seen.add(s)
        stems.append(s)
    latent = {}
    for s in stems:
        latent[(STEM, s)] = rng.normal(0, scale, d)
    for p in cfg.prefixes:
        latent[(PREFIX, p)] = rng.normal(0, scale, d)
    for x in cfg.suffixes:
        latent[(SUFFIX, x)] = rng.normal(0, scale, d)

    vectors = {}

    def noisy(v):
        return v + (rng.normal(0, cfg.noise, d) if cfg.noise > 0 else 0.0)

    for s in stems:
        vectors[s] = noisy(latent[(STEM, s)])
    records = []
    surfaces = set(stems)
    for s in stems:
        made = 0
        attempts = 0
        while made < cfg.words_per_stem and attempts < 50:
            attempts += 1
            segs, labs = [], []
            if cfg.prefixes and rng.random() < cfg.prefix_rate:
                segs.append(cfg.prefixes[rng.integers(len(cfg.prefixes))])
                labs.append(PREFIX)
            segs.append(s)
            labs.append(STEM)
            nsuf = int(rng.choice(3, p=(0.1, 0.6, 0.3))) if cfg.suffixes else 0
            for x in rng.permutation(len(cfg.suffixes))[:nsuf]:
                segs.append(cfg.suffixes[x])
                labs.append(SUFFIX)
            if len(segs) == 1:
                continue
            w = realize(segs, labs, cfg.rule)
            if w in surfaces:
                continue
            surfaces.add(w)
            seg = LabeledSegmentation(segs, labs)
            records.append(DatasetRecord(w, CanonicalAnalysis.of(seg)))
            vectors[w] = noisy(sum(latent[(l, m)] for m, l in zip(segs, labs)))
            made += 1
    table = EmbeddingTable(d, vectors)
    return SyntheticCorpus(records, table, latent, cfg)


def split_records(records, fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded shuffle then contiguous split by ``fractions``."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    out = []
    start = 0
    for i, f in enumerate(fractions):
        end = len(records) if i == len(fractions) - 1 else start + int(round(f * len(records)))
        out.append([records[j] for j in order[start:end]])
        start = end
    return out


def kfold_assignments(n, folds=10, seed=0):
    """Fold id per item: a seeded, disjoint and exhaustive partition."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assign = np.empty(n, dtype=np.int64)
    assign[order] = np.arange(n) % folds
    return assign

"""Run configuration, model orchestration and checkpoints."""

import configparser
import dataclasses
import json
import logging
from dataclasses import dataclass, fields

import numpy as np

from . import composition as comp
from .embeddings import EmbeddingTable, MorphemeEmbeddings, LABELS
from .evaluation import evaluate_segmentations, outermost_affix, vector_eval
from .features import FeatureIndex, WeightVector
from .joint import JointParams, Proposals, TrainConfig, decode, predict_vector, train
from .segmenter import SegmenterParams, semicrf_viterbi, train_proposal_q2
from .transducer import ProposalConfig, TransducerParams, train_proposal_q1

_logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class RunConfig:
    seed: int = 0
    m_train: int = 10
    m_decode: int = 10000
    m_dev: int = 1000
    k: int = 5
    l2: float = 10.0
    sigma2: float = 0.5
    kind: str = "RNN"
    embeddings: str = ""
    train: str = ""
    dev: str = ""
    test: str = ""
    oracle_ur: bool = False
    use_vectors: bool = True
    folds: int = 10
    epochs: int = 20
    proposal_epochs: int = 10
    rate: float = 0.1
    proposal_l2: float = 0.01
    max_segment_length: int = 12
    two_morpheme: bool = False
    decode_criterion: str = "pbar"
    lowercase: bool = False
    l2_grid: str = "0,10,100,1000,10000,100000"
    sigma2_grid: str = "0.25,0.5,0.75,1.0"

    def train_config(self):
        return TrainConfig(samples=self.m_train, epochs=self.epochs, rate=self.rate, l2=self.l2,
                           sigma2=self.sigma2, use_vectors=self.use_vectors, kind=self.kind,
                           oracle_ur=self.oracle_ur, dev_samples=self.m_dev,
                           decode_criterion=self.decode_criterion, seed=self.seed)

    def proposal_config(self):
        return ProposalConfig(epochs=self.proposal_epochs, rate=self.rate, l2=self.proposal_l2,
                              seed=self.seed, insertion_limit=self.k,
                              max_segment_length=self.max_segment_length)

    def to_dict(self):
        return dataclasses.asdict(self)


def _coerce(kind, text):
    if kind is bool:
        if isinstance(text, bool):
            return text
        low = str(text).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def config_types():
    return {f.name: type(f.default) for f in fields(RunConfig)}


def load_config(path=None, overrides=None):
    """Defaults, then an INI ``[run]`` section, then explicit overrides."""
    types = config_types()
    values = {}
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        section = parser["run"] if parser.has_section("run") else parser[parser.default_section]
        for key, text in section.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(types[key], text)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = _coerce(types[key], val)
    return RunConfig(**values)


def parse_grid(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


# ------------------------------------------------------------------ models


def fit_proposals(records, cfg):
    """Train q1 on (surface, UR) pairs and q2 on gold segmentations; both are then frozen."""
    pc = cfg.proposal_config()
    labels = sorted({l for r in records for l in r.analysis.labels}, key=LABELS.index)
    q1 = train_proposal_q1([(r.surface, r.u) for r in records], pc)
    q2 = train_proposal_q2([(r.u, r.analysis.seg) for r in records], pc, labels=labels)
    return Proposals(q1, q2)


def fit_joint(records, dev, table, proposals, cfg):
    return train(records, dev, table, proposals, cfg.train_config())


def fit_semicrf_baseline(records, cfg):
    """Semi-CRF over the observed string only: it segments the surface form and never restores characters."""
    labels = sorted({l for r in records for l in r.analysis.labels}, key=LABELS.index)
    return train_proposal_q2([(r.u, r.analysis.seg) for r in records], cfg.proposal_config(), labels)


def _word_rng(seed, i):
    return np.random.default_rng([seed, i])


def segment_words(words, table, params, proposals, cfg, oracle_us=None):
    """Decode each word with a per-word seeded generator (order independent)."""
    out = []
    for i, w in enumerate(words):
        v = table.lookup(w) if (params.use_vectors and table is not None and w in table) else None
        ou = oracle_us[i] if oracle_us is not None else None
        out.append(decode(w, v, params, proposals, cfg.m_decode, _word_rng(cfg.seed, i), ou,
                          cfg.decode_criterion))
    return out


def baseline_segment(words, q2):
    return [semicrf_viterbi(w, q2) for w in words]


def evaluate_records(records, table, params, proposals, cfg):
    words = [r.surface for r in records]
    oracle = [r.u for r in records] if cfg.oracle_ur else None
    preds = segment_words(words, table, params, proposals, cfg, oracle)
    return evaluate_segmentations(words, preds, [r.analysis for r in records]), preds


def predict_vectors(words, params, proposals, cfg):
    return [predict_vector(w, params, proposals, cfg.m_decode, _word_rng(cfg.seed, i))
            for i, w in enumerate(words)]


def gold_vector_eval(records, table, model, store):
    """Cosine between gold-morphology compositions and the table vectors, per outermost affix."""
    preds, golds, tags = [], [], []
    for r in records:
        if r.surface not in table:
            continue
        preds.append(comp.compose(model, r.analysis.seg, store))
        golds.append(table.lookup(r.surface))
        tags.append(outermost_affix(r.analysis))
    return vector_eval(preds, golds, tags), tags


# ------------------------------------------------------------------ checkpoints


def _weights_meta(wv):
    return wv.index.names()


def _weights_from(names, values):
    index = FeatureIndex()
    for n in names[1:]:
        index.add(n)
    return WeightVector(index, values)


def save_checkpoint(path, cfg, proposals, params=None):
    """Bundle proposals, joint parameters, feature indices, table and config into one ``.npz``."""
    arrays = {}
    meta = {"version": CHECKPOINT_VERSION, "config": cfg.to_dict()}
    q1, q2 = proposals.q1, proposals.q2
    meta["q1"] = {"alphabet": list(q1.alphabet), "features": _weights_meta(q1.weights),
                  "insertion_limit": q1.insertion_limit, "epsilon": q1.epsilon}
    arrays["q1"] = q1.weights.active
    meta["q2"] = {"features": _weights_meta(q2.weights), "labels": list(q2.labels),
                  "max_segment_length": q2.max_segment_length}
    arrays["q2"] = q2.weights.active
    if params is not None:
        meta["joint"] = {
            "omega_features": _weights_meta(params.transducer.weights),
            "eta_features": _weights_meta(params.segmenter.weights),
            "kind": params.composition.kind, "dim": params.composition.dim,
            "max_morphemes": params.composition.max_morphemes,
            "sigma2": params.sigma2, "l2": params.l2, "use_vectors": params.use_vectors,
            "morphemes": [list(k) for k in params.morphemes.vectors],
            "absent": params.morphemes.absent, "morph_seed": params.morphemes.seed,
            "words": list(params.morphemes.table),
        }
        arrays["omega"] = params.transducer.weights.active
        arrays["eta"] = params.segmenter.weights.active
        for name, x in params.composition.params.items():
            arrays["comp_" + name] = x
        d = params.composition.dim
        arrays["morph"] = (np.array(list(params.morphemes.vectors.values()))
                           if params.morphemes.vectors else np.zeros((0, d)))
        table = params.morphemes.table
        arrays["table"] = (np.array([table.lookup(w) for w in table]) if len(table) else np.zeros((0, d)))
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: returns ``(cfg, proposals, params or None)``."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = RunConfig(**meta["config"])
        m1, m2 = meta["q1"], meta["q2"]
        q1 = TransducerParams(tuple(m1["alphabet"]), _weights_from(m1["features"], z["q1"]),
                              m1["insertion_limit"], True, m1["epsilon"])
        q2 = SegmenterParams(_weights_from(m2["features"], z["q2"]), m2["max_segment_length"],
                             tuple(m2["labels"]))
        proposals = Proposals(q1, q2)
        params = None
        if "joint" in meta:
            mj = meta["joint"]
            transducer = TransducerParams(q1.alphabet, _weights_from(mj["omega_features"], z["omega"]),
                                          q1.insertion_limit)
            segmenter = SegmenterParams(_weights_from(mj["eta_features"], z["eta"]),
                                        q2.max_segment_length, q2.labels)
            model = comp.CompositionModel(mj["kind"], mj["dim"], max_morphemes=mj["max_morphemes"])
            for name in model.params:
                model.params[name] = z["comp_" + name].copy()
            table = EmbeddingTable(mj["dim"], dict(zip(mj["words"], z["table"])))
            store = MorphemeEmbeddings(table, seed=mj["morph_seed"], absent=mj["absent"])
            for key, vec in zip(mj["morphemes"], z["morph"]):
                store.vectors[tuple(key)] = vec.copy()
            params = JointParams(transducer, segmenter, model, store, mj["sigma2"], mj["l2"],
                                 mj["use_vectors"])
    return cfg, proposals, params

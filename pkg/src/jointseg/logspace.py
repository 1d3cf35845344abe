"""Small log-space helpers."""

import numpy as np

NEG_INF = -np.inf


def logaddexp(a, b):
    """Elementwise log(exp(a) + exp(b)) that tolerates -inf on both sides."""
    return np.logaddexp(a, b)


def logsumexp(x, axis=None):
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def log_normalize(logits, axis=-1):
    """Log-softmax along ``axis``; rows that are entirely -inf stay -inf."""
    lse = logsumexp(logits, axis=axis)
    lse = np.expand_dims(lse, axis)
    with np.errstate(invalid="ignore"):
        out = logits - np.where(np.isfinite(lse), lse, 0.0)
    return np.where(np.isfinite(logits), out, NEG_INF)


def normalize_log_weights(log_w):
    """Self-normalized weights from unnormalized log-weights."""
    log_w = np.asarray(log_w, dtype=float)
    m = np.max(log_w)
    if not np.isfinite(m):
        raise ValueError("log-weights need a finite maximum")
    e = np.exp(log_w - m)
    return e / e.sum()

# Copyright 2026 The leadkd developers

"""Plain numpy numerics shared by the differentiable core, evaluation and data generation."""

import numpy as np
from scipy import special

GELU_C = np.sqrt(2.0 / np.pi)


def log_softmax(x, axis=-1):
    """Log-softmax with max-subtraction, ``x - logsumexp(x)``."""
    x = np.asarray(x, dtype=np.float64)
    return x - special.logsumexp(x, axis=axis, keepdims=True)


def softmax(x, axis=-1):
    return special.softmax(np.asarray(x, dtype=np.float64), axis=axis)


def kl(p, q, axis=-1):
    """KL(p || q) along ``axis`` with 0 log 0 = 0. No validation; see :func:`leadkd.numcore.kl_divergence`."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return np.sum(special.xlogy(p, p) - special.xlogy(p, q), axis=axis)


def gelu(x):
    """GELU, tanh approximation."""
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + 0.044715 * x ** 3)))


def gelu_grad(x):
    inner = GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * GELU_C * (1.0 + 3 * 0.044715 * x ** 2)


def stable_argsort(scores, ids):
    """
    Order positions by descending score, ties by ascending id.

    Parameters
    ----------
    scores : array_like of float
    ids : array_like of str

    Returns
    -------
    np.ndarray[int]
    """
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(ids)
    # lexsort sorts by the last key first
    return np.lexsort((ids, -scores))

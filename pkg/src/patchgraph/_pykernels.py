"""Pure numpy/Python implementations of the hot kernels.

These are the reference behaviour; ``_ckernels.pyx`` mirrors every function
with the same signature and semantics.
"""
import numpy as np

_MASK64 = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


def xoshiro_fill(state, n):
    """Advance a xoshiro256** state ``n`` times, returning the raw outputs.

    ``state`` is a length-4 uint64 array and is updated in place.
    """
    s0, s1, s2, s3 = (int(v) for v in state)
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[:] = np.array([s0, s1, s2, s3], dtype=np.uint64)
    return out


def segment_sum(values, index, n):
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros((n,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, index, values)
    return out


def segment_softmax(values, index, n):
    values = np.asarray(values, dtype=np.float64)
    peak = np.full(n, -np.inf)
    np.maximum.at(peak, index, values)
    ex = np.exp(values - peak[index])
    denom = np.zeros(n)
    np.add.at(denom, index, ex)
    return ex / denom[index]


def segment_softmax_grad(alpha, grad, index, n):
    dot = np.zeros(n)
    np.add.at(dot, index, alpha * grad)
    return alpha * (grad - dot[index])


def confusion_matrix(y_true, y_pred, k):
    flat = np.asarray(y_true, dtype=np.int64) * k + np.asarray(y_pred, dtype=np.int64)
    return np.bincount(flat, minlength=k * k).reshape(k, k)


def auroc_binary(scores, positive):
    """Mann-Whitney AUROC with mid-ranks for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n = scores.shape[0]
    n_pos = int(positive.sum())
    n_neg = n - n_pos
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i + 1
        while j < n and s[j] == s[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)
        i = j
    rank_sum = ranks[positive].sum()
    return (rank_sum - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)

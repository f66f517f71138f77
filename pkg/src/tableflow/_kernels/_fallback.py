"""Pure-numpy kernels, used when the compiled extension is unavailable.

Masked entries are excluded from every reduction (placeholder -inf keeps
them out of the max; exp(-inf) is exactly 0, so they add exact zeros to
the normalizer), which preserves the bit-exactness guarantee of the
compiled path.  numpy's reduction order is fixed, so results are
deterministic, though not bit-identical to the left-to-right compiled
kernels.
"""
import numpy as np


def masked_softmax_fwd(scores, allow):
    allow = allow.astype(bool, copy=False)
    masked = np.where(allow, scores, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    if np.isneginf(m).any():
        row = int(np.nonzero(np.isneginf(m.ravel()))[0][0])
        raise ValueError(f"attention row {row} has no allowed keys")
    e = np.exp(masked - m)
    return e / e.sum(axis=1, keepdims=True)


def masked_softmax_bwd(probs, dprobs, allow):
    allow = allow.astype(bool, copy=False)
    acc = np.where(allow, dprobs * probs, 0.0).sum(axis=1, keepdims=True)
    return np.where(allow, probs * (dprobs - acc), 0.0)


def layer_norm_fwd(x, gamma, beta, eps):
    mean = x.mean(axis=1, keepdims=True)
    var = np.square(x - mean).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    return xhat * gamma + beta, xhat, inv_std[:, 0]


def layer_norm_bwd(dy, xhat, inv_std, gamma):
    h = dy * gamma
    mean_h = h.mean(axis=1, keepdims=True)
    mean_hx = (h * xhat).mean(axis=1, keepdims=True)
    dx = (h - mean_h - xhat * mean_hx) * inv_std[:, None]
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)

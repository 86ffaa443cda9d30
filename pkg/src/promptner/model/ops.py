"""Differentiable primitives: forward passes paired with hand-written
backward passes. Each forward returns (output, cache); the matching backward
consumes the cache and the upstream gradient.

Masked attention uses additive -inf before the softmax, so masked positions
contribute exactly zero — numerically, not approximately — in both
directions.
"""

from __future__ import annotations

import numpy as np


# -- linear ------------------------------------------------------------------


def linear_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None):
    y = x @ w
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def linear_bwd(cache, dy: np.ndarray):
    x, w, has_bias = cache
    dx = dy @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = x2.T @ dy2
    db = dy2.sum(axis=0) if has_bias else None
    return dx, dw, db


# -- layer norm ---------------------------------------------------------------

LN_EPS = 1e-5


def layer_norm_fwd(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=x.dtype))
    xhat = xc * inv_std
    y = g * xhat + b
    return y, (xhat, inv_std, g)


def layer_norm_bwd(cache, dy: np.ndarray):
    xhat, inv_std, g = cache
    d = xhat.shape[-1]
    dxhat = dy * g
    # dx = (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) * inv_std
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv_std
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    return dx, dg, db


# -- pointwise ----------------------------------------------------------------


def relu_fwd(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_bwd(cache, dy: np.ndarray):
    return dy * cache


# tanh-form GELU: smooth everywhere, so finite-difference gradient checks
# stay accurate (ReLU's kink makes eps-sized central differences noisy).
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_fwd(x: np.ndarray):
    c = np.asarray(_GELU_C, dtype=x.dtype)
    a = np.asarray(_GELU_A, dtype=x.dtype)
    t = np.tanh(c * (x + a * (x * x * x)))  # x*x*x: float32 ** 3 is a slow path
    y = 0.5 * x * (1.0 + t)
    return y, (x, t)


def gelu_bwd(cache, dy: np.ndarray):
    x, t = cache
    c = np.asarray(_GELU_C, dtype=x.dtype)
    a = np.asarray(_GELU_A, dtype=x.dtype)
    du = c * (1.0 + np.asarray(3.0, dtype=x.dtype) * a * (x * x))
    dt = (1.0 - t * t) * du
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


def dropout_fwd(x: np.ndarray, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when rate is 0 or no rng is supplied."""
    if rate <= 0.0 or rng is None:
        return x, None
    draw_dtype = np.float32 if x.dtype == np.float32 else np.float64
    keep = (rng.random(x.shape, dtype=draw_dtype) >= rate).astype(x.dtype) / np.asarray(
        1.0 - rate, dtype=x.dtype
    )
    return x * keep, keep


def dropout_bwd(cache, dy: np.ndarray):
    return dy if cache is None else dy * cache


# -- softmax / cross entropy ---------------------------------------------------


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax with boolean keep-mask; masked entries end up exactly 0.

    Every row must keep at least one entry.
    """
    neg_inf = np.asarray(-np.inf, dtype=scores.dtype)
    s = np.where(mask, scores, neg_inf)
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    inner = (dp * p).sum(axis=-1, keepdims=True)
    return p * (dp - inner)


def cross_entropy_fwd(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray):
    """Mean per-token cross entropy over positions where mask is true."""
    n = mask.sum()
    if n == 0:
        raise ValueError("loss mask selects no positions")
    logp = log_softmax(logits)
    b_idx, t_idx = np.nonzero(mask)
    picked = logp[b_idx, t_idx, targets[b_idx, t_idx]]
    loss = -picked.sum() / n
    return float(loss), (logp, targets, mask, int(n))


def cross_entropy_bwd(cache):
    logp, targets, mask, n = cache
    dlogits = np.exp(logp)
    b_idx, t_idx = np.nonzero(mask)
    dlogits[b_idx, t_idx, targets[b_idx, t_idx]] -= 1.0
    dlogits *= np.asarray(mask[..., None], dtype=dlogits.dtype)
    dlogits /= n
    return dlogits


# -- scaled dot-product attention ----------------------------------------------
#
# q4, k4, v4 have shape (batch, heads, time, head_dim); the keep-mask
# broadcasts against (batch, heads, q_time, k_time). Kept as module-level
# functions so tests can patch the backward to verify the gradient checker
# catches a corrupted implementation.


def attn_core_fwd(q4: np.ndarray, k4: np.ndarray, v4: np.ndarray, mask: np.ndarray):
    scale = np.asarray(1.0 / np.sqrt(q4.shape[-1]), dtype=q4.dtype)
    scores = (q4 @ k4.swapaxes(-1, -2)) * scale
    p = masked_softmax(scores, mask)
    ctx = p @ v4
    return ctx, (q4, k4, v4, p, scale)


def attn_core_bwd(cache, dctx: np.ndarray):
    q4, k4, v4, p, scale = cache
    dp = dctx @ v4.swapaxes(-1, -2)
    dv4 = p.swapaxes(-1, -2) @ dctx
    dscores = softmax_bwd(p, dp) * scale
    dq4 = dscores @ k4
    dk4 = dscores.swapaxes(-1, -2) @ q4
    return dq4, dk4, dv4


def split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def merge_heads(x4: np.ndarray) -> np.ndarray:
    b, h, t, dh = x4.shape
    return x4.transpose(0, 2, 1, 3).reshape(b, t, h * dh)

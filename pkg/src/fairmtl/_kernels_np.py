"""Pure-numpy implementations of the hot training kernels.

This is the fallback backend; `fairmtl._ckernels` provides the same
signatures as a compiled extension.  All arrays are C-contiguous float64.
Accumulating kernels (`*_bwd`, `adagrad_step`) mutate their output argument
in place.
"""

import numpy as np

XENT_CLIP = 1e-12


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g, acc):
    # Subgradient at exactly 0 is 0.
    acc += g * (x > 0.0)


def sigmoid_fwd(x):
    out = np.empty_like(x)
    np.negative(x, out=out)
    np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def sigmoid_bwd(s, g, acc):
    acc += g * s * (1.0 - s)


def xent_fwd(p, y):
    """Mean binary cross-entropy with probabilities clipped to [c, 1-c]."""
    pc = np.clip(p, XENT_CLIP, 1.0 - XENT_CLIP)
    return float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))))

def xent_bwd(p, y, gscale, acc):
    # Zero gradient where the clip is active.
    pc = np.clip(p, XENT_CLIP, 1.0 - XENT_CLIP)
    inside = (p >= XENT_CLIP) & (p <= 1.0 - XENT_CLIP)
    n = p.shape[0]
    acc += np.where(inside, (pc - y) / (pc * (1.0 - pc)), 0.0) * (gscale / n)


def gauss_fwd(u, v, gamma):
    """Pairwise Gaussian kernel matrix K[i, j] = exp(-gamma * (u_i - v_j)^2)."""
    d = u - v.T
    return np.exp(-gamma * d * d)


def gauss_bwd(u, v, k, g, gamma, du, dv):
    d = u - v.T
    w = g * k * (-2.0 * gamma) * d
    du += w.sum(axis=1, keepdims=True)
    dv -= w.sum(axis=0, keepdims=True).T


def adagrad_step(param, grad, acc, lr, eps):
    acc += grad * grad
    param -= lr * grad / (np.sqrt(acc) + eps)

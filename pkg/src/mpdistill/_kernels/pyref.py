"""Pure-numpy reference implementation of the hot kernels.

Semantics must match ``_core.pyx`` exactly (same formulas, float64
throughout); the compiled backend is only allowed to differ by rounding.
"""

import numpy as np
from scipy.special import erf

ACT_LINEAR = 0
ACT_TANH = 1
ACT_GELU = 2

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

BACKEND_NAME = "python"


def dense_fwd(W, b, x):
    """y = W @ x + b for a single sample."""
    return W @ x + b


def dense_fwd_batch(W, b, X):
    """Y[i] = W @ X[i] + b for a batch of row vectors."""
    return X @ W.T + b


def dense_bwd(W, x, dy):
    """Gradients of ``dense_fwd``: returns (dx, dW, db)."""
    return W.T @ dy, np.outer(dy, x), dy.copy()


def dense_bwd_batch(W, X, dY):
    """Batched gradients; dW and db are summed over the batch."""
    return dY @ W, dY.T @ X, dY.sum(axis=0)


def act_fwd(kind, z):
    if kind == ACT_LINEAR:
        return z.copy()
    if kind == ACT_TANH:
        return np.tanh(z)
    if kind == ACT_GELU:
        return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))
    raise ValueError(f"unknown activation kind {kind}")


def act_bwd(kind, z, da):
    if kind == ACT_LINEAR:
        return da.copy()
    if kind == ACT_TANH:
        t = np.tanh(z)
        return da * (1.0 - t * t)
    if kind == ACT_GELU:
        cdf = 0.5 * (1.0 + erf(z * _INV_SQRT2))
        pdf = np.exp(-0.5 * z * z) * _INV_SQRT2PI
        return da * (cdf + z * pdf)
    raise ValueError(f"unknown activation kind {kind}")


def decode_combine(pos_basis, vel_basis, y1, y2, y1d, y2d, c1, c2, theta):
    """Combine basis samples with parameters into positions/velocities.

    pos_basis, vel_basis: (H, K+1); y1..y2d: (H,); c1, c2: (dof,);
    theta: (dof, K+1). Returns (P, V), each (H, dof).
    """
    P = pos_basis @ theta.T + np.outer(y1, c1) + np.outer(y2, c2)
    V = vel_basis @ theta.T + np.outer(y1d, c1) + np.outer(y2d, c2)
    return P, V

"""Gated recurrent cell with a hand-written backward pass.

Row-batched: ``x`` is (n, d_in), ``h`` is (n, d).  Gates::

    z = sigmoid(x Wz^T + h Uz^T + bz)
    r = sigmoid(x Wr^T + h Ur^T + br)
    c = tanh(x Wc^T + (r * h) Uc^T + bc)
    h' = (1 - z) * h + z * c
"""

from __future__ import annotations

import numpy as np

GATES = ("z", "r", "c")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def gru_names(prefix: str) -> list[str]:
    return [f"{prefix}W{g}" for g in GATES] + [f"{prefix}U{g}" for g in GATES] + [f"{prefix}b{g}" for g in GATES]


def gru_step(p: dict, prefix: str, x: np.ndarray, h: np.ndarray, xw: np.ndarray | None = None):
    """One cell update.  ``xw`` may carry precomputed input projections (n, 3d) in z, r, c order."""
    d = h.shape[1]
    if xw is None:
        xz = x @ p[prefix + "Wz"].T
        xr = x @ p[prefix + "Wr"].T
        xc = x @ p[prefix + "Wc"].T
    else:
        xz, xr, xc = xw[:, :d], xw[:, d : 2 * d], xw[:, 2 * d :]
    z = sigmoid(xz + h @ p[prefix + "Uz"].T + p[prefix + "bz"])
    r = sigmoid(xr + h @ p[prefix + "Ur"].T + p[prefix + "br"])
    rh = r * h
    c = np.tanh(xc + rh @ p[prefix + "Uc"].T + p[prefix + "bc"])
    h_new = h + z * (c - h)
    return h_new, (x, h, z, r, rh, c)


def gru_step_back(p: dict, prefix: str, dh_new: np.ndarray, cache, grads: dict, want_dx: bool = True, dxw: bool = False):
    """Accumulate parameter gradients into ``grads``; return (dx or dxw, dh).

    With ``dxw`` the input-projection gradient (n, 3d) is returned instead of dx and the
    W gradients are left to the caller (useful when projections were precomputed).
    """
    x, h, z, r, rh, c = cache
    dc = dh_new * z
    dz = dh_new * (c - h)
    dh = dh_new * (1.0 - z)
    dc_pre = dc * (1.0 - c * c)
    drh = dc_pre @ p[prefix + "Uc"]
    grads[prefix + "Uc"] += dc_pre.T @ rh
    grads[prefix + "bc"] += dc_pre.sum(axis=0)
    dr = drh * h
    dh += drh * r
    dr_pre = dr * r * (1.0 - r)
    dz_pre = dz * z * (1.0 - z)
    grads[prefix + "Ur"] += dr_pre.T @ h
    grads[prefix + "Uz"] += dz_pre.T @ h
    grads[prefix + "br"] += dr_pre.sum(axis=0)
    grads[prefix + "bz"] += dz_pre.sum(axis=0)
    dh += dr_pre @ p[prefix + "Ur"] + dz_pre @ p[prefix + "Uz"]
    if dxw:
        return np.concatenate([dz_pre, dr_pre, dc_pre], axis=1), dh
    grads[prefix + "Wz"] += dz_pre.T @ x
    grads[prefix + "Wr"] += dr_pre.T @ x
    grads[prefix + "Wc"] += dc_pre.T @ x
    dx = None
    if want_dx:
        dx = dz_pre @ p[prefix + "Wz"] + dr_pre @ p[prefix + "Wr"] + dc_pre @ p[prefix + "Wc"]
    return dx, dh


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)); stacked matrices use their last two axes."""
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_out, fan_in = shape[-2], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def bce_from_logits(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the logits."""
    n = len(logits)
    loss = float(np.sum(softplus(logits) - labels * logits) / n)
    return loss, (sigmoid(logits) - labels) / n

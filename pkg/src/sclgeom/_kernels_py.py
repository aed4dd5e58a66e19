"""Pure-numpy fallback for the SCL loss/gradient kernel.

Signature is shared with the compiled ``_kernels`` extension.  ``X`` holds
the embeddings row-wise (``n x d``, i.e. ``H.T``).  Batches arrive flattened:
``flat[offsets[b]:offsets[b+1]]`` are the indices of batch ``b``.
"""

import numpy as np


def batch_terms(X, labels, flat, offsets, k, inv_tau, want_grad):
    total = 0.0
    grad = np.zeros_like(X) if want_grad else None
    for b in range(len(offsets) - 1):
        idx = flat[offsets[b]:offsets[b + 1]]
        yb = labels[idx]
        cnt = np.bincount(yb, minlength=k)[yb]
        active = cnt >= 2
        if not active.any():
            continue
        Xb = X[idx]
        S = (Xb @ Xb.T) * inv_tau
        m = idx.size
        off = ~np.eye(m, dtype=bool)
        pos = (yb[:, None] == yb[None, :]) & off

        Sa = np.where(off, S, -np.inf)[active]
        mx = Sa.max(axis=1, keepdims=True)
        E = np.exp(Sa - mx)
        se = E.sum(axis=1, keepdims=True)
        npos = (cnt[active] - 1).astype(np.float64)
        pos_mean = np.where(pos[active], S[active], 0.0).sum(axis=1) / npos
        total += float(np.sum(mx[:, 0] + np.log(se[:, 0]) - pos_mean))

        if want_grad:
            A = np.zeros((m, m))
            A[active] = E / se - pos[active] / npos[:, None]
            W = A + A.T
            grad[idx] += inv_tau * (W @ Xb)
    return total, grad


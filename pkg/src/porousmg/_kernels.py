"""Numba kernels for the patch smoother hot loops.

The multiplicative sweep is strictly sequential over patches: every local
residual is computed from the freshest global state by gathering the rows
of the combined saddle matrix that belong to the patch.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def gather_and_invert(S_data, S_indices, S_indptr, patch_dofs, border, pivot_tol):
    """Build, border, and invert the local matrix of every patch.

    patch_dofs: (N, n) global indices into the combined vector.
    border: (n,) constraint row (cell volumes on pressure mean entries).
    Returns (inv, bad) with inv of shape (N, n+1, n+1); bad is the first
    patch whose pivot ratio fell below pivot_tol, or -1.
    """
    N, n = patch_dofs.shape
    m = n + 1
    out = np.zeros((N, m, m))
    K = np.zeros((m, m))
    E = np.zeros((m, m))
    for p in range(N):
        for a in range(m):
            for b in range(m):
                K[a, b] = 0.0
                E[a, b] = 1.0 if a == b else 0.0
        for a in range(n):
            row = patch_dofs[p, a]
            for t in range(S_indptr[row], S_indptr[row + 1]):
                cidx = S_indices[t]
                for b in range(n):
                    if patch_dofs[p, b] == cidx:
                        K[a, b] = S_data[t]
                        break
            K[a, n] = border[a]
            K[n, a] = border[a]
        maxabs = 0.0
        for a in range(m):
            for b in range(m):
                v = abs(K[a, b])
                if v > maxabs:
                    maxabs = v
        # Gauss-Jordan with partial pivoting.
        for col in range(m):
            piv = col
            best = abs(K[col, col])
            for r in range(col + 1, m):
                if abs(K[r, col]) > best:
                    best = abs(K[r, col])
                    piv = r
            if best < pivot_tol * maxabs:
                return out, p
            if piv != col:
                for b in range(m):
                    K[col, b], K[piv, b] = K[piv, b], K[col, b]
                    E[col, b], E[piv, b] = E[piv, b], E[col, b]
            d = K[col, col]
            for b in range(m):
                K[col, b] /= d
                E[col, b] /= d
            for r in range(m):
                if r == col:
                    continue
                f = K[r, col]
                if f != 0.0:
                    for b in range(m):
                        K[r, b] -= f * K[col, b]
                        E[r, b] -= f * E[col, b]
        for a in range(m):
            for b in range(m):
                out[p, a, b] = E[a, b]
    return out, -1


@njit(cache=True)
def multiplicative_sweep(x, b, S_data, S_indices, S_indptr, patch_dofs, inv, order):
    """One multiplicative pass over the patches in the given order (in place)."""
    N, n = patch_dofs.shape
    m = n + 1
    r = np.empty(m)
    for oi in range(order.shape[0]):
        p = order[oi]
        for a in range(n):
            row = patch_dofs[p, a]
            s = b[row]
            for t in range(S_indptr[row], S_indptr[row + 1]):
                s -= S_data[t] * x[S_indices[t]]
            r[a] = s
        r[n] = 0.0
        for a in range(n):
            acc = 0.0
            for c in range(m):
                acc += inv[p, a, c] * r[c]
            x[patch_dofs[p, a]] += acc

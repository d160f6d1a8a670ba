"""Pure numpy implementations of the dense hot kernels.

This module is the fallback used when the compiled ``_ckernels`` extension
is unavailable (or when ``LOWRANK_PURE_PYTHON=1``).  Every function here has
a twin with the identical signature in ``_ckernels.pyx``.
"""

import math

import numpy as np

MAX_SWEEPS = 100


def jacobi_eigh(a, tol):
    """Cyclic Jacobi eigenvalue iteration on a symmetric matrix.

    Returns ``(w, v)`` with eigenvalues in diagonal order (unsorted) and the
    accumulated rotations as columns of ``v``.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = math.sqrt(float(np.sum(a * a)))
    if n < 2 or scale == 0.0:
        return np.diag(a).copy(), v
    target = tol * scale
    for _ in range(MAX_SWEEPS):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2)) * 2.0)
        if off <= target:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(1.0 + theta * theta))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise RuntimeError("Jacobi eigenvalue iteration did not converge")


def jacobi_svd(a, tol):
    """One-sided (Hestenes) Jacobi SVD of a tall matrix (rows >= cols).

    Returns ``(w, s, v)`` where the columns of ``w`` are the orthogonalised
    (unnormalised) columns, ``s`` their norms, and ``v`` the right rotations.
    """
    u = np.array(a, dtype=np.float64, copy=True)
    n = u.shape[1]
    v = np.eye(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up = u[:, p]
                uq = u[:, q]
                alpha = float(up @ up)
                beta = float(uq @ uq)
                gamma = float(up @ uq)
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = 1.0 / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                up = up.copy()
                uq = uq.copy()
                u[:, p] = c * up - s * uq
                u[:, q] = s * up + c * uq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            return u, np.sqrt(np.sum(u * u, axis=0)), v
    raise RuntimeError("one-sided Jacobi SVD did not converge")


def forward_sub_unit(b, rhs):
    """Solve ``b @ x = rhs`` for unit lower-triangular ``b`` (diagonal ignored)."""
    x = np.array(rhs, dtype=np.float64, copy=True)
    n = b.shape[0]
    for i in range(1, n):
        x[i] -= b[i, :i] @ x[:i]
    return x


def back_sub_unit(b, rhs):
    """Solve ``b @ x = rhs`` for unit upper-triangular ``b`` (diagonal ignored)."""
    x = np.array(rhs, dtype=np.float64, copy=True)
    n = b.shape[0]
    for i in range(n - 2, -1, -1):
        x[i] -= b[i, i + 1:] @ x[i + 1:]
    return x


def first_argmax(values, rtol, atol=0.0):
    """Lowest index whose value is within ``max(rtol * top, atol)`` of the maximum."""
    values = np.asarray(values)
    top = values.max()
    return int(np.flatnonzero(values >= top - max(rtol * top, atol))[0])


def pivot_scan(r, rtol, atol=0.0):
    """Global pivot: first column of maximal sup-norm, then first row within it."""
    absr = np.abs(r)
    j = first_argmax(absr.max(axis=0), rtol, atol)
    i = first_argmax(absr[:, j], rtol, atol)
    return i, j, float(r[i, j])


def rank1_update(r, col, row, pivot):
    """In place ``r -= outer(col, row) / pivot``."""
    r -= np.outer(col, row) / pivot

"""Dense linear-algebra primitives shared by every decomposition.

The inner loops (Jacobi sweeps, triangular substitution, pivot scans and
rank-one remainder updates) live in a compiled extension, ``_ckernels``.
When it cannot be imported, or when the environment variable
``LOWRANK_PURE_PYTHON`` is set to a true value, the numpy fallback in
``_pykernels`` is used instead.  ``BACKEND`` names the active one.

All arithmetic is float64.  Matrices are plain ``numpy.ndarray`` objects.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

JACOBI_TOL = 1e-13
TIE_RTOL = 1e-12
TIE_ATOL = 1e-14
COND_CUTOFF = 1e-14


def _load_backend():
    if os.environ.get("LOWRANK_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load_backend()


class ContractError(ValueError):
    """Input violates a documented precondition."""


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"{name} must be two-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    return a


def _descending(values):
    # stable sort keeps original index order among ties
    return np.argsort(-values, kind="stable")


def sym_eig(c, backend=None):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    c : (n, n) array_like
        Symmetric to ``1e-12`` relative.
    backend : module, optional
        Kernel module override, used by the benchmark and backend tests.

    Returns
    -------
    EigenResult
        Eigenvalues sorted descending, eigenvectors as matching columns.
    """
    c = _as_matrix(c, "C")
    n, m = c.shape
    if n != m:
        raise ContractError(f"sym_eig needs a square matrix, got {c.shape}")
    scale = np.abs(c).max() if c.size else 0.0
    if np.abs(c - c.T).max(initial=0.0) > 1e-12 * scale:
        raise ContractError("sym_eig needs a symmetric matrix")
    impl = backend or _impl
    w, v = impl.jacobi_eigh(0.5 * (c + c.T), JACOBI_TOL)
    order = _descending(w)
    return EigenResult(np.asarray(w)[order], np.asarray(v)[:, order])


def _complete_columns(u, rank):
    """Replace columns ``rank:`` of ``u`` with an orthonormal completion."""
    m, k = u.shape
    basis = [u[:, i] for i in range(rank)]
    e = 0
    for col in range(rank, k):
        while True:
            cand = np.zeros(m)
            cand[e % m] = 1.0
            e += 1
            for b in basis:
                cand -= (b @ cand) * b
            for b in basis:
                cand -= (b @ cand) * b
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                break
        cand /= nrm
        basis.append(cand)
        u[:, col] = cand
    return u


def svd(a, backend=None):
    """Thin singular value decomposition by one-sided Jacobi.

    Returns ``(s, u, v)`` with ``a = u @ diag(s) @ v.T``; ``s`` is
    descending and nonnegative, ``u`` is ``(m, k)`` and ``v`` is ``(n, k)``
    with ``k = min(m, n)``.
    """
    a = _as_matrix(a, "A")
    m, n = a.shape
    impl = backend or _impl
    if m == 0 or n == 0:
        k = min(m, n)
        return np.zeros(k), np.zeros((m, k)), np.zeros((n, k))
    transpose = m < n
    work = a.T if transpose else a
    w, s, v = impl.jacobi_svd(work, JACOBI_TOL)
    order = _descending(s)
    s = np.asarray(s)[order]
    w = np.asarray(w)[:, order]
    v = np.asarray(v)[:, order]
    cutoff = s[0] * max(m, n) * np.finfo(float).eps
    rank = int(np.count_nonzero(s > cutoff))
    u = np.zeros_like(w)
    u[:, :rank] = w[:, :rank] / s[:rank]
    u = _complete_columns(u, rank)
    s[rank:] = 0.0
    if transpose:
        return s, v, u
    return s, u, v


def solve_unit_lower_triangular(b, rhs, backend=None):
    """Forward substitution for ``b @ x = rhs`` with ``b`` unit lower triangular.

    ``rhs`` may be a vector or a matrix of right-hand sides (one per column).
    """
    b = _as_matrix(b, "B")
    rhs = np.asarray(rhs, dtype=np.float64)
    if b.shape[0] != b.shape[1] or rhs.shape[0] != b.shape[0]:
        raise ContractError(f"shape mismatch: B {b.shape}, rhs {rhs.shape}")
    return (backend or _impl).forward_sub_unit(b, rhs)


def solve_unit_upper_triangular(b, rhs, backend=None):
    """Back substitution for ``b @ x = rhs`` with ``b`` unit upper triangular."""
    b = _as_matrix(b, "B")
    rhs = np.asarray(rhs, dtype=np.float64)
    if b.shape[0] != b.shape[1] or rhs.shape[0] != b.shape[0]:
        raise ContractError(f"shape mismatch: B {b.shape}, rhs {rhs.shape}")
    return (backend or _impl).back_sub_unit(b, rhs)


def lu_solve(a, rhs):
    """Solve a small square system by Gaussian elimination with row pivoting.

    Raises ``numpy.linalg.LinAlgError`` when a pivot vanishes exactly.
    """
    a = np.array(_as_matrix(a, "A"), copy=True)
    x = np.array(rhs, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.shape[1] != n or x.shape[0] != n:
        raise ContractError(f"shape mismatch: A {a.shape}, rhs {x.shape}")
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        factors = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(factors, a[k, k:])
        x[k + 1:] -= np.multiply.outer(factors, x[k])
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def cond2(a, backend=None):
    """Spectral condition number ``s_max / s_min``.

    Returns ``inf`` when ``s_min < 1e-14 * s_max``.  A zero matrix raises.
    """
    a = _as_matrix(a, "A")
    s = svd(a, backend=backend)[0]
    if s.size == 0 or s[0] == 0.0:
        raise ContractError("condition number of a zero matrix is undefined")
    if s[-1] < COND_CUTOFF * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


def first_argmax(values, rtol=TIE_RTOL, atol=0.0):
    """Lowest index attaining the maximum, with ties taken to ``rtol`` relative.

    Values within ``max(rtol * top, atol)`` of the maximum ``top`` count as
    ties so that the lowest index wins regardless of last-bit rounding.
    Greedy loops pass ``atol = TIE_ATOL * scale`` with ``scale`` the size of
    the original data: remainders obtained by cancellation carry absolute
    rounding errors of that order, which a purely relative band misses.
    Every greedy selection in the package goes through this rule.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("argmax of an empty sequence")
    return int(_impl.first_argmax(np.ascontiguousarray(values.ravel()), rtol,
                                  float(atol)))


def pivot_scan(r, rtol=TIE_RTOL, atol=0.0):
    """Global pivot of a remainder: ``(i, j, r[i, j])``.

    ``j`` is the first column whose sup-norm attains the maximum, then ``i``
    is the first row attaining the maximum within column ``j``.  Ties follow
    :func:`first_argmax`.
    """
    return _impl.pivot_scan(r, rtol, float(atol))


def rank1_update(r, col, row, pivot):
    """In place ``r -= outer(col, row) / pivot`` (elementwise ``(c*r)/p``)."""
    _impl.rank1_update(r, col, row, float(pivot))

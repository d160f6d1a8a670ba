"""Proper orthogonal decomposition of a snapshot family."""

import numbers
from dataclasses import dataclass

import numpy as np

from .kernels import ContractError, sym_eig

NEG_EIG_TOL = 1e-12


@dataclass(frozen=True)
class PodBasis:
    """POD modes of a snapshot family.

    Attributes
    ----------
    eigenvalues : (N,) ndarray
        Full spectrum of the correlation matrix, descending.
    basis : (M, Q) ndarray
        Modes as columns, orthonormal in the weighted scalar product.
    weight : float
        Weight of the discrete scalar product the modes are normalised in.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray
    weight: float

    @property
    def Q(self):
        return self.basis.shape[1]

    def gram(self):
        return self.weight * (self.basis.T @ self.basis)


def correlation_matrix(snap):
    """``C[i, j] = (f_j, f_i) / N`` in the weighted scalar product."""
    vals = snap.values
    n = vals.shape[1]
    if n < 1:
        raise ContractError("correlation matrix needs at least one snapshot")
    c = (snap.weight / n) * (vals.T @ vals)
    return 0.5 * (c + c.T)


def _clamped_spectrum(eigenvalues):
    lam = np.array(eigenvalues, dtype=np.float64)
    scale = max(lam.max(initial=0.0), 0.0)
    floor = -NEG_EIG_TOL * max(scale, 1.0)
    if np.any(lam < floor):
        raise ContractError(f"correlation matrix has a negative eigenvalue {lam.min()}")
    return np.maximum(lam, 0.0)


def pod_spectrum(snap):
    """Eigenpairs of the correlation matrix, descending.

    The eigenvectors come from :func:`sym_eig`.  Each eigenvalue is then
    recomputed as the Rayleigh quotient ``(weight / N) ||S v_k||^2``, which
    equals ``v_k^T C v_k`` but avoids the rounding incurred when ``C`` is
    formed, so eigenvalues near zero are resolved to about ``eps^2`` times
    the largest instead of ``eps``.
    """
    eig = sym_eig(correlation_matrix(snap))
    _clamped_spectrum(eig.eigenvalues)
    sv = snap.values @ eig.eigenvectors
    lam = (snap.weight / snap.shape[1]) * np.sum(sv * sv, axis=0)
    order = np.argsort(-lam, kind="stable")
    return lam[order], eig.eigenvectors[:, order]


def trailing_error(eigenvalues, q):
    """``sqrt(sum_{k > q} lambda_k)``, the mean-square POD error for ``q`` modes."""
    return float(np.sqrt(np.sum(eigenvalues[q:])))


def pod_basis(snap, rank_or_tol):
    """POD basis with either a fixed number of modes or an error tolerance.

    An integer is the number of modes ``Q``.  A float ``eps`` selects the
    smallest ``Q`` with ``sqrt(sum_{q > Q} lambda_q) <= eps``.

    Each mode is re-orthogonalised against its predecessors.  A mode whose
    remaining norm is at rounding level relative to the leading one cannot
    be normalised; the basis is truncated before the first such mode.  The
    dropped eigenvalues are zero to working precision, so the error identity
    is unaffected up to rounding.
    """
    n = snap.shape[1]
    lam, vecs = pod_spectrum(snap)
    if isinstance(rank_or_tol, numbers.Integral):
        q = int(rank_or_tol)
        if q < 0 or q > n:
            raise ContractError(f"number of modes must be in [0, {n}], got {q}")
    else:
        eps = float(rank_or_tol)
        if not 0.0 < eps < 1.0:
            raise ContractError(f"tolerance must lie in (0, 1), got {eps}")
        q = next(k for k in range(n + 1) if trailing_error(lam, k) <= eps)
    modes = snap.values @ vecs[:, :q]
    norms = np.sqrt(snap.weight * np.sum(modes * modes, axis=0))
    cutoff = 10 * max(snap.shape) * np.finfo(float).eps * (norms[0] if q else 0.0)
    kept = []
    for k in range(q):
        h = modes[:, k]
        # two re-orthogonalisation passes against rounding in S @ v
        for _ in range(2):
            for prev in kept:
                h = h - snap.weight * (prev @ h) * prev
        nrm = np.sqrt(snap.weight * (h @ h))
        if not nrm > cutoff:
            # what is left is rounding noise; this mode cannot be normalised
            break
        kept.append(h / nrm)
    modes = np.column_stack(kept) if kept else np.zeros((snap.shape[0], 0))
    return PodBasis(lam, modes, snap.weight)


def pod_project(basis, f):
    """Orthogonal projection of ``f`` onto the POD span.

    Returns ``(coefficients, reconstruction)`` with
    ``g_q = (f, h_q) / (h_q, h_q)``.
    """
    f = np.asarray(f, dtype=np.float64)
    h = basis.basis
    if f.shape[0] != h.shape[0]:
        raise ContractError(f"vector has length {f.shape[0]}, basis lives on {h.shape[0]} points")
    norms = basis.weight * np.sum(h * h, axis=0)
    coef = (basis.weight * (h.T @ f)) / (norms if f.ndim == 1 else norms[:, None])
    return coef, h @ coef


def projection_error(snap, h):
    """Root-mean-square weighted error of orthogonally projecting every column
    of ``snap`` onto the span of the weighted-orthonormal columns ``h``."""
    vals = snap.values
    resid = vals - h @ (snap.weight * (h.T @ vals))
    return float(np.sqrt(snap.weight * np.sum(resid * resid) / vals.shape[1]))


def pod_error(snap, basis):
    """``sqrt(mean_y ||f_y - P_Q f_y||^2)`` measured in the weighted norm."""
    if basis.basis.shape[0] != snap.shape[0] or basis.eigenvalues.shape[0] != snap.shape[1]:
        raise ContractError("basis was not built from a snapshot matrix of this shape")
    _, recon = pod_project(basis, snap.values)
    resid = snap.values - recon
    return float(np.sqrt(snap.weight * np.sum(resid * resid) / snap.shape[1]))


def scaled_snapshots(snap):
    """``sqrt(weight / N) * values`` so that ``A.T @ A`` is the correlation matrix."""
    return np.sqrt(snap.weight / snap.shape[1]) * snap.values

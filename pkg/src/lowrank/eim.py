"""Empirical interpolation: greedy basis and point selection on snapshots.

The basis functions ``h_q`` are normalised residuals with ``h_q(x_q) = 1``,
so the interpolation matrix ``B[i, j] = h_j(x_i)`` is unit lower triangular
and every interpolation is a forward substitution.

Column selection uses the first maximiser of the residual norms and row
selection the first maximiser of the chosen residual, the same scan order
as global pivoting in :mod:`lowrank.aca`.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import (
    TIE_ATOL,
    ContractError,
    first_argmax,
    solve_unit_lower_triangular,
    solve_unit_upper_triangular,
)
from .sampling import (  # noqa: F401  (Functional is part of this module's API)
    Functional,
    SnapshotMatrix,
    average,
    dirac,
    dirac_dictionary,
    functional_matrix,
)

ZERO_PIVOT = 1e-14
NORMS = ("1", "2", "inf")


def _norm_key(p):
    key = str(p).lower()
    if key in ("1", "1.0"):
        return "1"
    if key in ("2", "2.0"):
        return "2"
    if key in ("inf", "infinity", "max"):
        return "inf"
    raise ContractError(f"norm must be one of 1, 2, inf; got {p!r}")


def column_norms(residual, p, weight):
    """Discrete ``L^p`` norm of every column.

    ``p = 1, 2`` include the grid weight, ``(weight * sum |v|^p)^(1/p)``;
    ``p = inf`` is the plain maximum modulus.
    """
    key = _norm_key(p)
    a = np.abs(residual)
    if key == "inf":
        return a.max(axis=0, initial=0.0)
    if key == "1":
        return weight * a.sum(axis=0)
    return np.sqrt(weight * np.sum(a * a, axis=0))


@dataclass(frozen=True, eq=False)
class EimSystem:
    """Result of an empirical interpolation run.

    Attributes
    ----------
    sample_indices : tuple of int
        Selected snapshot columns ``j_1..j_Q``.
    interp_indices : tuple of int
        Interpolation points ``i_1..i_Q`` on the x grid.
    basis : (M, Q) ndarray
        ``h_q`` as columns.
    B : (Q, Q) ndarray
        Unit lower triangular interpolation matrix ``h_j(x_i)``.
    recovery : (Q, Q) ndarray
        Lower triangular table with ``f_{y_q} = sum_{j<=q} recovery[q, j] h_j``.
    err_history : tuple of float
        ``max_y ||f_y - I_q f_y||_p`` for ``q = 0..Q``.
    p : str
        Norm used by the greedy.
    """

    sample_indices: tuple
    interp_indices: tuple
    basis: np.ndarray
    B: np.ndarray
    recovery: np.ndarray
    err_history: tuple
    p: str
    weight: float
    status: str
    sample_points: np.ndarray = None
    grid_x: object = None

    @property
    def Q(self):
        return len(self.interp_indices)


def _snapshot_values(S):
    if isinstance(S, SnapshotMatrix):
        return np.array(S.values, dtype=np.float64), S.weight
    a = np.array(S, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {a.shape}")
    return a, 1.0 / a.shape[0]


def _limit(shape, max_rank):
    limit = min(shape)
    if max_rank is not None:
        if max_rank < 0:
            raise ContractError(f"max_rank must be nonnegative, got {max_rank}")
        limit = min(limit, int(max_rank))
    return limit


def eim_greedy(S, tol, p="inf", *, max_rank=None):
    """Greedy empirical interpolation on the columns of ``S``.

    At step ``q`` the column ``y_q`` with the largest residual norm is
    chosen, then ``x_q`` as the first maximiser of its residual modulus, and
    ``h_q = residual / residual(x_q)``.

    Parameters
    ----------
    S : SnapshotMatrix or (M, N) array_like
    tol : float
        Stop when ``max_y ||f_y - I_{q} f_y||_p < tol``.
    p : {1, 2, "inf"}
    max_rank : int, optional

    Returns
    -------
    EimSystem
    """
    if not (tol > 0):
        raise ContractError(f"tolerance must be positive, got {tol}")
    key = _norm_key(p)
    vals, weight = _snapshot_values(S)
    m, n = vals.shape
    limit = _limit(vals.shape, max_rank)
    scale = np.abs(vals).max(initial=0.0)
    threshold = ZERO_PIVOT * scale
    cols, pts, hs, errors, srows = [], [], [], [], []
    b = np.zeros((0, 0))
    status = "converged"
    while True:
        if pts:
            h = np.column_stack(hs)
            g = solve_unit_lower_triangular(b, vals[pts, :])
            res = vals - h @ g
        else:
            g = np.zeros((0, n))
            res = vals.copy()
        norms = column_norms(res, key, weight)
        err = float(norms.max(initial=0.0))
        errors.append(err)
        if err < tol:
            break
        if len(pts) >= limit:
            status = "maximum rank reached" if limit < min(m, n) else "numerical rank reached"
            break
        j = first_argmax(norms, atol=TIE_ATOL * errors[0])
        i = first_argmax(np.abs(res[:, j]), atol=TIE_ATOL * scale)
        piv = res[i, j]
        if abs(piv) <= threshold:
            status = "numerical rank reached"
            break
        srows.append(np.append(g[:, j], piv))
        hq = res[:, j] / piv
        cols.append(int(j))
        pts.append(int(i))
        hs.append(hq)
        q = len(pts)
        b = np.tril(np.column_stack(hs)[pts, :], -1) + np.eye(q)
    q = len(pts)
    recovery = np.zeros((q, q))
    for k, row in enumerate(srows):
        recovery[k, :k + 1] = row
    grid_x = S.grid_x if isinstance(S, SnapshotMatrix) else None
    sample_points = S.grid_y.points[cols] if isinstance(S, SnapshotMatrix) else None
    basis = np.column_stack(hs) if hs else np.zeros((m, 0))
    return EimSystem(tuple(cols), tuple(pts), basis, b, recovery, tuple(errors), key,
                     weight, status, sample_points, grid_x)


def eim_interpolate(sys, f):
    """Interpolate ``f`` (length ``M``, or ``(M, K)``) through the system's points.

    Returns ``(g, values)`` with ``B g = f[interp_indices]`` and
    ``values = basis @ g``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != sys.basis.shape[0]:
        raise ContractError(f"vector has length {f.shape[0]}, system lives on "
                            f"{sys.basis.shape[0]} points")
    g = solve_unit_lower_triangular(sys.B, f[list(sys.interp_indices)])
    return g, sys.basis @ g


def eim_continuous_recover(sys, src):
    """Evaluator of the basis functions at arbitrary ``x``.

    Uses ``h_q = (f(., y_q) - sum_{j<q} s_{q,j} h_j) / s_{q,q}`` with the
    stored recovery table.  The evaluator maps an array of ``x`` values to an
    array of shape ``(len(x), Q)``.
    """
    if sys.sample_points is None:
        raise ContractError("system was built without grids; cannot evaluate off-grid")
    ys = np.asarray(sys.sample_points)
    s = sys.recovery

    def evaluate(x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros((x.size, sys.Q))
        for q in range(sys.Q):
            col = src(x, np.full_like(x, ys[q]))
            for j in range(q):
                col = col - s[q, j] * out[:, j]
            out[:, q] = col / s[q, q]
        return out

    return evaluate


def eim_interpolant_at(sys, src, x, y):
    """``I_Q[f(., y)](x)`` at arbitrary points using recovered basis functions."""
    xs = sys.grid_x.points[list(sys.interp_indices)]
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    data = src(xs[:, None], y[None, :])
    g = solve_unit_lower_triangular(sys.B, data)
    return eim_continuous_recover(sys, src)(x) @ g


def lebesgue_constant(sys, up_to_q=None):
    """``Lambda_q = max_x sum_i |L_i(x)|`` for ``q = 1..up_to_q``.

    The Lagrange functions of the first ``q`` points solve
    ``B_q^T L(x) = h(x)`` at every grid point ``x``.
    """
    q_max = sys.Q if up_to_q is None else int(up_to_q)
    if not 0 <= q_max <= sys.Q:
        raise ContractError(f"up_to_q must be in [0, {sys.Q}], got {up_to_q}")
    out = []
    for q in range(1, q_max + 1):
        lag = solve_unit_upper_triangular(sys.B[:q, :q].T, sys.basis[:, :q].T)
        out.append(float(np.abs(lag).sum(axis=0).max()))
    return np.array(out)


def eim_points_for_basis(basis, grid=None):
    """Interpolation points for a given ordered basis (columns of ``basis``).

    Each basis vector in turn is interpolated by the previous ones and the
    first maximiser of the residual becomes the next point.

    Raises
    ------
    ContractError
        Naming the first basis vector that is dependent on its predecessors.
    """
    w = np.asarray(basis, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    m, k = w.shape
    if grid is not None and len(grid) != m:
        raise ContractError(f"basis has {m} grid values, grid has {len(grid)} points")
    pts, hs, srows, errors = [], [], [], []
    b = np.zeros((0, 0))
    for q in range(k):
        col = w[:, q]
        if pts:
            g = solve_unit_lower_triangular(b, col[pts])
            res = col - np.column_stack(hs) @ g
        else:
            g = np.zeros(0)
            res = col.copy()
        i = first_argmax(np.abs(res))
        errors.append(float(abs(res[i])))
        if not abs(res[i]) > ZERO_PIVOT * np.abs(col).max(initial=0.0):
            raise ContractError(f"basis vector {q} is linearly dependent on its predecessors")
        srows.append(np.append(g, res[i]))
        hs.append(res / res[i])
        pts.append(int(i))
        b = np.tril(np.column_stack(hs)[pts, :], -1) + np.eye(len(pts))
    recovery = np.zeros((k, k))
    for q, row in enumerate(srows):
        recovery[q, :q + 1] = row
    h = np.column_stack(hs) if hs else np.zeros((m, 0))
    weight = grid.measure / m if grid is not None else 1.0 / m
    return EimSystem(tuple(range(k)), tuple(pts), h, b, recovery, tuple(errors), "inf",
                     weight, "complete", None, grid)


@dataclass(frozen=True, eq=False)
class GeimSystem:
    """Result of generalized empirical interpolation.

    ``functional_indices`` index the dictionary; ``B[i, j] = sigma_i(h_j)``.
    ``lebesgue_l2[q-1]`` is ``max_y ||J_q f_y|| / ||f_y||`` over the training
    columns, a lower estimate of the operator norm of the interpolant.
    """

    sample_indices: tuple
    functional_indices: tuple
    basis: np.ndarray
    B: np.ndarray
    err_history: tuple
    lebesgue_l2: tuple
    p: str
    status: str
    dictionary: tuple = ()

    @property
    def Q(self):
        return len(self.functional_indices)

    def moments(self, f):
        phi = functional_matrix([self.dictionary[k] for k in self.functional_indices])
        return phi @ np.asarray(f, dtype=np.float64)


def geim_interpolate(sys, f):
    """Generalized interpolant matching the selected moments of ``f``."""
    g = solve_unit_lower_triangular(sys.B, sys.moments(f))
    return g, sys.basis @ g


def geim_greedy(S, dictionary, tol, p="inf", *, max_rank=None):
    """Generalized empirical interpolation over a dictionary of functionals.

    The greedy picks the worst column as in :func:`eim_greedy` and then the
    functional with the largest modulus on its residual; ``h_q`` is the
    residual divided by that moment.  A Dirac dictionary in grid order makes
    the same selections as :func:`eim_greedy`.
    """
    if not (tol > 0):
        raise ContractError(f"tolerance must be positive, got {tol}")
    dictionary = tuple(dictionary)
    if not dictionary:
        raise ContractError("dictionary must not be empty")
    key = _norm_key(p)
    vals, weight = _snapshot_values(S)
    m, n = vals.shape
    phi = functional_matrix(dictionary)
    if phi.shape[1] != m:
        raise ContractError(f"functionals have {phi.shape[1]} weights, grid has {m} points")
    moments_all = phi @ vals
    limit = min(_limit(vals.shape, max_rank), phi.shape[0])
    scale = np.abs(moments_all).max(initial=0.0)
    threshold = ZERO_PIVOT * scale
    cols, sel, hs, errors = [], [], [], []
    b = np.zeros((0, 0))
    status = "converged"
    while True:
        if sel:
            h = np.column_stack(hs)
            g = solve_unit_lower_triangular(b, moments_all[sel, :])
            res = vals - h @ g
        else:
            res = vals.copy()
        norms = column_norms(res, key, weight)
        err = float(norms.max(initial=0.0))
        errors.append(err)
        if err < tol:
            break
        if len(sel) >= limit:
            status = "maximum rank reached"
            break
        j = first_argmax(norms, atol=TIE_ATOL * errors[0])
        mom = phi @ res[:, j]
        a = first_argmax(np.abs(mom), atol=TIE_ATOL * scale)
        den = mom[a]
        if abs(den) <= threshold:
            status = "numerical rank reached"
            break
        cols.append(int(j))
        sel.append(int(a))
        hs.append(res[:, j] / den)
        b = np.tril(phi[sel] @ np.column_stack(hs), -1) + np.eye(len(sel))
    basis = np.column_stack(hs) if hs else np.zeros((m, 0))
    leb = []
    norms_f = np.sqrt(np.sum(vals * vals, axis=0))
    live = norms_f > 0
    for q in range(1, len(sel) + 1):
        g = solve_unit_lower_triangular(b[:q, :q], moments_all[sel[:q], :])
        interp = basis[:, :q] @ g
        ratio = np.sqrt(np.sum(interp * interp, axis=0))[live] / norms_f[live]
        leb.append(float(ratio.max(initial=0.0)))
    return GeimSystem(tuple(cols), tuple(sel), basis, b, tuple(errors), tuple(leb), key,
                      status, dictionary)

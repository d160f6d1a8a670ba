"""Adaptive cross approximation.

Every variant builds ``A ~ sum_q u_q v_q^T / p_q`` from rows and columns of
successive remainders.  ``u_q`` is the remainder column at ``sigma_q``,
``v_q`` the remainder row at ``tau_q`` and ``p_q`` their common entry.

Global pivoting scans column sup-norms first and takes the first column
attaining the maximum, then the first row attaining the maximum inside that
column (see :func:`lowrank.kernels.pivot_scan`).  The EIM greedy uses the
same scan, which makes the two methods agree pivot for pivot.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .kernels import (
    ContractError,
    cond2,
    first_argmax,
    lu_solve,
    TIE_ATOL,
    pivot_scan,
    rank1_update,
    solve_unit_lower_triangular,
)
from .sampling import SnapshotMatrix, functional_matrix, uniform_grid

ZERO_PIVOT = 1e-14
NODE_CAP = 30

CONVERGED = "converged"
RANK = "numerical rank reached"
MAX_RANK = "maximum rank reached"


@dataclass(frozen=True, eq=False)
class CrossApproximation:
    """Result of a cross approximation.

    Attributes
    ----------
    tau, sigma : tuple of int
        Row and column pivot indices in selection order.
    u : (M, Q) ndarray
        Remainder columns ``u_q`` as columns.
    v : (N, Q) ndarray
        Remainder rows ``v_q`` as columns.
    pivots : (Q,) ndarray
        ``p_q = u_q[tau_q] = v_q[sigma_q]``.
    indicator_history : tuple of float
        ``||u||_2 ||v||_2 / |p|`` for every candidate that was computed.  The
        last entry belongs to the rejected candidate when the run converged.
    error_history : tuple of float
        ``max |r_q|`` for ``q = 0..Q``; only filled when the remainder is
        formed explicitly.
    status : str
        Why the iteration stopped.
    entry_count : int
        Number of matrix entries requested from the provider.
    """

    tau: tuple
    sigma: tuple
    u: np.ndarray
    v: np.ndarray
    pivots: np.ndarray
    indicator_history: tuple = ()
    error_history: tuple = ()
    status: str = CONVERGED
    entry_count: int = 0

    @property
    def Q(self):
        return len(self.tau)

    @property
    def shape(self):
        return self.u.shape[0], self.v.shape[0]

    def to_dense(self):
        """``sum_q u_q v_q^T / p_q``."""
        return (self.u / self.pivots) @ self.v.T

    def cross_matrix(self, a):
        """``a[tau][:, sigma]``, the matrix whose inverse the interpolant uses."""
        return np.asarray(a)[np.ix_(self.tau, self.sigma)]


def _values(source):
    if isinstance(source, SnapshotMatrix):
        return np.array(source.values, dtype=np.float64)
    a = np.array(source, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    return a


def _check_tol(tol):
    if not (tol > 0):
        raise ContractError(f"tolerance must be positive, got {tol}")


def _rank_limit(shape, max_rank):
    limit = min(shape)
    if max_rank is not None:
        if max_rank < 0:
            raise ContractError(f"max_rank must be nonnegative, got {max_rank}")
        limit = min(limit, int(max_rank))
    return limit


class _RowRule:
    """Chooses the next pivot row for partial pivoting.

    ``next_row(u_prev)`` returns the next candidate row that has not been
    used or rejected, or ``None`` when every row is exhausted.  ``u_prev`` is
    the most recent remainder column (``None`` before the first step).
    """

    def __init__(self, rule, m, seed=None, grid=None, start_row=0):
        self.m = m
        self.done = np.zeros(m, dtype=bool)
        self.order = None
        self.rng = None
        self.cyclic = False
        self.start = int(start_row)
        if not 0 <= self.start < m:
            raise ContractError(f"start row {start_row} outside [0, {m})")
        if isinstance(rule, str):
            if rule == "cyclic":
                self.cyclic = True
            elif rule == "random":
                if seed is None:
                    raise ContractError("the random row rule needs an explicit seed")
                self.rng = np.random.default_rng(seed)
            elif rule == "node_based":
                grid = grid if grid is not None else uniform_grid(0.0, 1.0, m)
                if len(grid) != m:
                    raise ContractError(f"grid has {len(grid)} points, matrix has {m} rows")
                self.order = leja_order(grid)
            else:
                raise ContractError(f"unknown row rule {rule!r}")
        else:
            self.order = [int(i) for i in rule]
            if any(not 0 <= i < m for i in self.order):
                raise ContractError("row sequence has an index outside the matrix")

    tie = 0.0

    def mark(self, i):
        self.done[i] = True

    def next_row(self, u_prev):
        free = np.flatnonzero(~self.done)
        if free.size == 0:
            return None
        if self.cyclic:
            if u_prev is None:
                return self.start if not self.done[self.start] else int(free[0])
            return int(free[first_argmax(np.abs(u_prev[free]), atol=self.tie)])
        if self.rng is not None:
            return int(self.rng.choice(free))
        for i in self.order:
            if not self.done[i]:
                return i
        # the explicit order is exhausted; continue through the rest in index order
        return int(free[0])


def aca2_bivariate(S, tol, pivot="global", row_rule="cyclic", *, seed=None, max_rank=None,
                   start_row=0):
    """Bivariate cross approximation on the full remainder.

    Parameters
    ----------
    S : SnapshotMatrix or (M, N) array_like
    tol : float
        Stop as soon as ``max |r_{q-1}| < tol``.
    pivot : {"global", "partial"}
        Global pivoting maximises ``|r_{q-1}|`` over the whole grid.  Partial
        pivoting picks the row with ``row_rule`` and the column as the first
        maximiser of ``|r_{q-1}(x_q, .)|``.
    row_rule : {"cyclic", "random", "node_based"} or sequence of int
        Row selection for partial pivoting.
    seed : int, optional
        Seed of the random row rule.
    max_rank : int, optional
        Upper bound on the number of steps.

    Returns
    -------
    CrossApproximation
        With ``error_history[q] = max |r_q|``.
    """
    _check_tol(tol)
    if pivot not in ("global", "partial"):
        raise ContractError(f"pivot must be 'global' or 'partial', got {pivot!r}")
    r = _values(S)
    m, n = r.shape
    limit = _rank_limit(r.shape, max_rank)
    scale = np.abs(r).max(initial=0.0)
    threshold = ZERO_PIVOT * scale
    tie = TIE_ATOL * scale
    rows = None
    if pivot == "partial":
        grid = S.grid_x if isinstance(S, SnapshotMatrix) else None
        rows = _RowRule(row_rule, m, seed=seed, grid=grid, start_row=start_row)
        rows.tie = tie
    tau, sigma, us, vs, piv, indicators, errors = [], [], [], [], [], [], []
    status = CONVERGED
    u_prev = None
    while True:
        err = float(np.abs(r).max(initial=0.0))
        errors.append(err)
        if err < tol:
            status = CONVERGED
            break
        if len(tau) >= limit:
            status = MAX_RANK if limit < min(m, n) else RANK
            break
        if pivot == "global":
            i, j, p = pivot_scan(r, atol=tie)
            if abs(p) <= threshold:
                status = RANK
                break
        else:
            while True:
                i = rows.next_row(u_prev)
                if i is None:
                    break
                j = first_argmax(np.abs(r[i]), atol=tie)
                p = r[i, j]
                if abs(p) > threshold:
                    break
                rows.mark(i)
            if i is None:
                status = RANK
                break
            rows.mark(i)
        u = r[:, j].copy()
        v = r[i, :].copy()
        rank1_update(r, u, v, p)
        tau.append(int(i))
        sigma.append(int(j))
        us.append(u)
        vs.append(v)
        piv.append(float(p))
        indicators.append(float(np.linalg.norm(u) * np.linalg.norm(v) / abs(p)))
        u_prev = u
    return _assemble(tau, sigma, us, vs, piv, m, n, indicators, errors, status, m * n)


def _assemble(tau, sigma, us, vs, piv, m, n, indicators, errors, status, count):
    u = np.column_stack(us) if us else np.zeros((m, 0))
    v = np.column_stack(vs) if vs else np.zeros((n, 0))
    return CrossApproximation(
        tuple(tau), tuple(sigma), u, v, np.array(piv, dtype=np.float64),
        tuple(indicators), tuple(errors), status, count)


class MatrixEntries:
    """Row/column entry provider over a dense matrix that counts accesses."""

    def __init__(self, a):
        self._a = _values(a)
        self.shape = self._a.shape
        self.count = 0

    def row(self, i):
        self.count += self.shape[1]
        return self._a[i, :].copy()

    def col(self, j):
        self.count += self.shape[0]
        return self._a[:, j].copy()


def aca_matrix(source, tol, row_rule="cyclic", *, seed=None, grid=None, max_rank=None,
               start_row=0, pivots=None):
    """Matrix cross approximation with partial pivoting.

    Only single rows and columns of ``A`` are requested.  The remainder is
    never formed: ``v_q = A[i_q, :] - sum_l u_l[i_q] v_l / p_l`` and
    ``u_q = A[:, j_q] - sum_l v_l[j_q] u_l / p_l``.

    Parameters
    ----------
    source : array_like, SnapshotMatrix, or provider
        A provider has ``shape``, ``row(i)`` and ``col(j)``.
    tol : float
        The run stops when a candidate has ``||u||_2 ||v||_2 / |p| < tol``;
        that candidate is not added.
    row_rule : {"cyclic", "random", "node_based"} or sequence of int
        ``cyclic`` starts at ``start_row`` and then takes the unused row
        maximising ``|u_{q-1}|``.
    seed : int, optional
        Seed for ``row_rule="random"``.
    grid : Grid, optional
        Row coordinates for ``row_rule="node_based"``.
    pivots : sequence of (int, int), optional
        Prescribed pivot pairs; overrides ``row_rule`` and the column choice.

    Notes
    -----
    Before the first cross, a row whose residual is zero is skipped and the
    next row is tried.  After it, a zero residual row is a candidate with
    indicator 0 and ends the run.  The zero threshold and the tie band of the
    column choice are ``1e-14`` times the largest entry magnitude requested
    so far, because the global maximum of ``A`` is never seen.
    """
    _check_tol(tol)
    if isinstance(source, SnapshotMatrix) and grid is None:
        grid = source.grid_x
    provider = source if hasattr(source, "row") and hasattr(source, "col") \
        else MatrixEntries(source)
    m, n = provider.shape
    limit = _rank_limit((m, n), max_rank)
    fixed = None
    if pivots is not None:
        fixed = [(int(i), int(j)) for i, j in pivots]
        limit = min(limit, len(fixed))
    rows = _RowRule(row_rule, m, seed=seed, grid=grid, start_row=start_row)
    count = 0
    seen = 0.0
    tau, sigma, us, vs, piv, indicators = [], [], [], [], [], []
    status = RANK
    u_prev = None

    def residual_row(i):
        nonlocal count, seen
        raw = np.asarray(provider.row(i), dtype=np.float64)
        count += n
        seen = max(seen, float(np.abs(raw).max(initial=0.0)))
        for u, v, p in zip(us, vs, piv):
            raw = raw - (u[i] / p) * v
        return raw

    def residual_col(j):
        nonlocal count, seen
        raw = np.asarray(provider.col(j), dtype=np.float64)
        count += m
        seen = max(seen, float(np.abs(raw).max(initial=0.0)))
        for u, v, p in zip(us, vs, piv):
            raw = raw - (v[j] / p) * u
        return raw

    while True:
        if len(tau) >= limit:
            status = MAX_RANK if limit < min(m, n) else RANK
            break
        if fixed is not None:
            i, j = fixed[len(tau)]
            v = residual_row(i)
            if abs(v[j]) <= ZERO_PIVOT * seen:
                status = RANK
                break
        else:
            exhausted = False
            while True:
                i = rows.next_row(u_prev)
                if i is None:
                    break
                v = residual_row(i)
                rows.tie = TIE_ATOL * seen
                j = first_argmax(np.abs(v), atol=rows.tie)
                if abs(v[j]) > ZERO_PIVOT * seen:
                    break
                rows.mark(i)
                if tau:
                    # a vanishing candidate row has indicator zero
                    exhausted = True
                    break
            if exhausted:
                indicators.append(0.0)
                status = CONVERGED
                break
            if i is None:
                status = RANK
                break
        rows.mark(i)
        p = float(v[j])
        u = residual_col(j)
        indicator = float(np.linalg.norm(u) * np.linalg.norm(v) / abs(p))
        indicators.append(indicator)
        if indicator < tol:
            status = CONVERGED
            break
        tau.append(int(i))
        sigma.append(int(j))
        us.append(u)
        vs.append(v)
        piv.append(p)
        u_prev = u
    return _assemble(tau, sigma, us, vs, piv, m, n, indicators, (), status, count)


class CrossInterpolant:
    """Evaluates ``I_Q[f_y](x) = f(x, sigma) M_Q^{-1} f(tau, y)``.

    The inverse is never formed.  With ``a = L^{-1} f(x, y_sigma)`` and
    ``b = K^{-1} f(x_tau, y)`` for the unit lower triangular factors
    ``L[q, l] = v_l[sigma_q] / p_l`` and ``K[q, l] = u_l[tau_q] / p_l``, the
    value is ``sum_q a_q b_q / p_q``.
    """

    def __init__(self, ca, row_at, col_at):
        if ca.Q == 0:
            raise ContractError("cross interpolant needs at least one pivot")
        self.ca = ca
        self.row_at = row_at
        self.col_at = col_at
        sig = list(ca.sigma)
        tau = list(ca.tau)
        self._left = np.tril(ca.v[sig, :] / ca.pivots, -1)
        self._right = np.tril(ca.u[tau, :] / ca.pivots, -1)

    def coefficients(self, x_values, y_values):
        a = solve_unit_lower_triangular(self._left, x_values)
        b = solve_unit_lower_triangular(self._right, y_values)
        return a, b

    def __call__(self, x, y):
        """``x`` and ``y`` are whatever ``row_at``/``col_at`` accept.

        If ``row_at`` returns shape ``(Q, K)`` and ``col_at`` shape
        ``(Q, L)`` the result is the ``(K, L)`` matrix of values.
        """
        fx = np.asarray(self.row_at(x), dtype=np.float64)
        fy = np.asarray(self.col_at(y), dtype=np.float64)
        a, b = self.coefficients(fx.reshape(self.ca.Q, -1), fy.reshape(self.ca.Q, -1))
        out = (a / self.ca.pivots[:, None]).T @ b
        if fx.ndim == 1 and fy.ndim == 1:
            return float(out[0, 0])
        return out


def cross_interpolant(ca, row_at, col_at):
    """Value provider for the cross interpolant.

    ``row_at(x)`` must return ``f(x, y_{sigma_q})`` for ``q = 1..Q`` and
    ``col_at(y)`` must return ``f(x_{tau_q}, y)``.
    """
    return CrossInterpolant(ca, row_at, col_at)


def grid_interpolant(ca, a):
    """The cross interpolant of the matrix ``a`` evaluated on its whole grid."""
    a = _values(a)
    sig = list(ca.sigma)
    tau = list(ca.tau)
    interp = CrossInterpolant(ca, lambda rows: a[rows][:, sig].T, lambda cols: a[tau][:, cols])
    return interp(np.arange(a.shape[0]), np.arange(a.shape[1]))


def source_interpolant(ca, src, grid_x, grid_y):
    """Continuous cross interpolant of a :class:`BivariateSource`.

    The returned callable accepts scalar or 1-D ``x`` and ``y``.
    """
    xs = grid_x.points[list(ca.tau)]
    ys = grid_y.points[list(ca.sigma)]

    def row_at(x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return src(x[None, :], ys[:, None])

    def col_at(y):
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        return src(xs[:, None], y[None, :])

    interp = CrossInterpolant(ca, row_at, col_at)

    def evaluate(x, y):
        out = interp(x, y)
        if np.ndim(x) == 0 and np.ndim(y) == 0:
            return float(out[0, 0])
        return out

    return evaluate


@dataclass(frozen=True, eq=False)
class NodeSystem:
    """Nodes chosen greedily from basis vectors.

    ``ell[:, q]`` holds ``l_q`` on the grid; ``l_q(x_p) = 0`` for ``p < q``.
    """

    nodes: tuple
    ell: np.ndarray
    basis_tag: str = "custom"

    def node_points(self, grid):
        return grid.points[list(self.nodes)]


def build_nodes(basis_w, grid=None, basis_tag="custom"):
    """Greedy nodes for the basis vectors ``basis_w`` (columns, shape ``(M, Q)``).

    ``l_Q`` is ``w_Q`` with the previously built ``l_q`` eliminated at their
    nodes, and ``x_Q`` is the first maximiser of ``|l_Q|``.  With monomials
    this reproduces Leja points on the grid.

    Raises
    ------
    ContractError
        If some ``|l_Q(x_Q)|`` falls below ``1e-14 max |w_Q|``, i.e. the
        basis is linearly dependent on the grid.
    """
    w = np.asarray(basis_w, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    m, k = w.shape
    if grid is not None and len(grid) != m:
        raise ContractError(f"basis has {m} grid values, grid has {len(grid)} points")
    nodes = []
    ell = np.zeros((m, k))
    for q in range(k):
        cur = w[:, q].copy()
        scale = np.abs(cur).max(initial=0.0)
        for p, x in enumerate(nodes):
            cur = cur - (cur[x] / ell[x, p]) * ell[:, p]
        x = first_argmax(np.abs(cur))
        if not abs(cur[x]) > ZERO_PIVOT * scale:
            raise ContractError(f"basis vector {q} is linearly dependent on its predecessors")
        nodes.append(x)
        ell[:, q] = cur
    return NodeSystem(tuple(nodes), ell, basis_tag)


def monomials(points, count):
    """Columns ``t^0 .. t^(count-1)`` with ``t`` the points mapped onto [-1, 1]."""
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts[0], pts[-1]
    t = np.zeros_like(pts) if hi == lo else (2.0 * pts - (lo + hi)) / (hi - lo)
    return np.vander(t, count, increasing=True)


def leja_order(grid, count=None):
    """Rows ordered by monomial node construction, capped at ``NODE_CAP`` nodes."""
    m = len(grid)
    count = min(m, NODE_CAP) if count is None else min(count, m)
    w = monomials(grid.points, count)
    order = []
    for k in range(1, count + 1):
        try:
            order = list(build_nodes(w[:, :k]).nodes)
        except ContractError:
            break
    return order


def _cross_solve(a, tau, sigma):
    a = _values(a)
    tau = [int(i) for i in tau]
    sigma = [int(j) for j in sigma]
    if len(tau) != len(sigma) or not tau:
        raise ContractError("tau and sigma must be nonempty and of equal length")
    mq = a[np.ix_(tau, sigma)]
    if not np.any(mq) or cond2(mq) == float("inf"):
        raise ContractError("cross matrix is singular")
    return a, mq


def sigma2(S, tau, sigma):
    """``max_y || M_Q^{-1} f(x_tau, y) ||_1`` over the grid."""
    a, mq = _cross_solve(S, tau, sigma)
    x = lu_solve(mq, a[list(tau), :])
    return float(np.abs(x).sum(axis=0).max())


def sigma1(S, tau, sigma):
    """``max_x || M_Q^{-T} f(x, y_sigma) ||_1``; the row-side twin of :func:`sigma2`."""
    a, mq = _cross_solve(S, tau, sigma)
    x = lu_solve(mq.T, a[:, list(sigma)].T)
    return float(np.abs(x).sum(axis=0).max())


@dataclass(frozen=True)
class MaxVolumeReport:
    """Outcome of the exhaustive maximum-volume check.

    ``worst_ratio`` is ``max |det M_q(y)| / |det M_Q|`` over all replacements
    of column ``q`` by a grid column ``y``; the condition holds when it does
    not exceed 1.  ``singular`` flags a numerically singular ``M_Q``.
    """

    holds: bool
    worst_ratio: float
    worst_q: int
    worst_column: int
    determinant: float
    singular: bool


def max_volume_check(A, tau, sigma, max_q=6):
    """Check ``|det M_Q| >= |det M_q(y)|`` for every ``q`` and grid column ``y``."""
    a = _values(A)
    tau = [int(i) for i in tau]
    sigma = [int(j) for j in sigma]
    q_count = len(tau)
    if q_count != len(sigma) or q_count == 0:
        raise ContractError("tau and sigma must be nonempty and of equal length")
    if q_count > max_q:
        raise ContractError(f"exhaustive check limited to Q <= {max_q}, got {q_count}")
    mq = a[np.ix_(tau, sigma)]
    det = float(np.linalg.det(mq))
    hadamard = float(np.prod(np.linalg.norm(mq, axis=0)))
    singular = hadamard == 0.0 or abs(det) <= 1e-12 * hadamard
    worst, worst_q, worst_y = 0.0, 0, sigma[0]
    for q in range(q_count):
        trial = mq.copy()
        for y in range(a.shape[1]):
            trial[:, q] = a[tau, y]
            d = abs(float(np.linalg.det(trial)))
            ratio = float("inf") if singular and d > 0 else (
                0.0 if singular else d / abs(det))
            if ratio > worst:
                worst, worst_q, worst_y = ratio, q, y
    holds = not singular and worst <= 1.0 + 1e-12
    return MaxVolumeReport(holds, worst, worst_q, worst_y, det, singular)


def brute_force_max_volume(a, q):
    """Rows and columns of the ``q x q`` submatrix with the largest ``|det|``."""
    a = _values(a)
    best, arg = -1.0, None
    for rows in itertools.combinations(range(a.shape[0]), q):
        for cols in itertools.combinations(range(a.shape[1]), q):
            d = abs(float(np.linalg.det(a[np.ix_(rows, cols)])))
            if d > best:
                best, arg = d, (rows, cols)
    return arg, best


@dataclass(frozen=True, eq=False)
class FunctionalCross:
    """Cross approximation driven by functionals.

    ``phi_indices`` and ``psi_indices`` index the two dictionaries.  ``u`` and
    ``v`` hold ``r_{q-1} psi_q`` and ``phi_q r_{q-1}`` as columns; ``pivots``
    the denominators ``phi_q r_{q-1} psi_q``.
    """

    phi_indices: tuple
    psi_indices: tuple
    u: np.ndarray
    v: np.ndarray
    pivots: np.ndarray
    remainder: np.ndarray
    error_history: tuple
    status: str

    @property
    def Q(self):
        return len(self.phi_indices)

    def to_dense(self):
        return (self.u / self.pivots) @ self.v.T


def aca_functional(S, dictionary_phi, dictionary_psi, tol, pivot="global", *, max_rank=None):
    """Cross approximation with functionals in place of point evaluations.

    ``r_q = r_{q-1} - (r_{q-1} psi_q)(phi_q r_{q-1}) / (phi_q r_{q-1} psi_q)``.
    Global pivoting maximises ``|phi_a r_{q-1} psi_b|`` over all pairs with the
    same column-first scan as :func:`aca2_bivariate`; partial pivoting walks
    the ``phi`` dictionary cyclically by ``|phi_a u_{q-1}|``.  Candidates with
    a zero denominator are skipped.  With Dirac dictionaries in grid order the
    result is bit-identical to :func:`aca2_bivariate`.
    """
    _check_tol(tol)
    if pivot not in ("global", "partial"):
        raise ContractError(f"pivot must be 'global' or 'partial', got {pivot!r}")
    r = _values(S)
    m, n = r.shape
    phi = functional_matrix(dictionary_phi)
    psi = functional_matrix(dictionary_psi).T
    if phi.shape[1] != m or psi.shape[0] != n:
        raise ContractError("dictionary weights do not match the grid sizes")
    limit = _rank_limit((phi.shape[0], psi.shape[1]), max_rank)
    limit = min(limit, m, n)
    scale = np.abs(phi @ r @ psi).max(initial=0.0)
    threshold = ZERO_PIVOT * scale
    tie = TIE_ATOL * scale
    used_phi = np.zeros(phi.shape[0], dtype=bool)
    a_sel, b_sel, us, vs, piv, errors = [], [], [], [], [], []
    status = CONVERGED
    u_prev = None
    while True:
        err = float(np.abs(r).max(initial=0.0))
        errors.append(err)
        if err < tol:
            status = CONVERGED
            break
        if len(a_sel) >= limit:
            status = MAX_RANK
            break
        if pivot == "global":
            w = phi @ r @ psi
            a, b, den = pivot_scan(w, atol=tie)
            if abs(den) <= threshold:
                status = RANK
                break
        else:
            a = None
            while not used_phi.all():
                free = np.flatnonzero(~used_phi)
                if u_prev is None:
                    a = int(free[0])
                else:
                    a = int(free[first_argmax(np.abs(phi[free] @ u_prev), atol=tie)])
                moments = (phi[a] @ r) @ psi
                b = first_argmax(np.abs(moments), atol=tie)
                den = moments[b]
                if abs(den) > threshold:
                    break
                used_phi[a] = True
                a = None
            if a is None:
                status = RANK
                break
        used_phi[a] = True
        u = r @ psi[:, b]
        v = phi[a] @ r
        rank1_update(r, u, v, den)
        a_sel.append(int(a))
        b_sel.append(int(b))
        us.append(u)
        vs.append(v)
        piv.append(float(den))
        u_prev = u
    u = np.column_stack(us) if us else np.zeros((m, 0))
    v = np.column_stack(vs) if vs else np.zeros((n, 0))
    return FunctionalCross(tuple(a_sel), tuple(b_sel), u, v, np.array(piv), r,
                           tuple(errors), status)


@dataclass(frozen=True, eq=False)
class TrivariateCross:
    """Pivot triples and the final remainder of a trivariate cross approximation."""

    pivots: tuple
    pivot_values: tuple
    remainder: np.ndarray
    error_history: tuple
    status: str

    @property
    def Q(self):
        return len(self.pivots)

    def remainder_at(self, i, j, k):
        """Remainder value at grid indices (arrays broadcast)."""
        return self.remainder[i, j, k]

    def approximation(self, tensor):
        return np.asarray(tensor, dtype=np.float64) - self.remainder


def aca_trivariate(T, tol, *, max_rank=None):
    """Trivariate cross approximation on a tensor grid.

    Each step takes the first global maximiser ``(x_q, y_q, z_q)`` of
    ``|r_{q-1}|`` in C order and subtracts

        r(x,y,z_q) r(x,y_q,z) r(x_q,y,z) r(x_q,y_q,z_q)
        / ( r(x,y_q,z_q) r(x_q,y,z_q) r(x_q,y_q,z) ).

    Where the denominator vanishes the correction is taken as zero; those
    points lie on earlier pivot planes where the remainder is already zero.

    Parameters
    ----------
    T : TrivariateSource or (M, N, K) array_like
    tol : float
        Stop when ``max |r_{q-1}| < tol``.
    """
    _check_tol(tol)
    r = np.array(T.tensor() if hasattr(T, "tensor") else T, dtype=np.float64)
    if r.ndim != 3:
        raise ContractError(f"expected a 3-D tensor, got shape {r.shape}")
    limit = min(r.shape) if max_rank is None else int(max_rank)
    scale = np.abs(r).max(initial=0.0)
    threshold = ZERO_PIVOT * scale
    triples, values, errors = [], [], []
    status = CONVERGED
    while True:
        err = float(np.abs(r).max(initial=0.0))
        errors.append(err)
        if err < tol:
            status = CONVERGED
            break
        if len(triples) >= limit:
            status = MAX_RANK
            break
        flat = first_argmax(np.abs(r).ravel(), atol=TIE_ATOL * scale)
        xq, yq, zq = np.unravel_index(flat, r.shape)
        p = r[xq, yq, zq]
        if abs(p) <= threshold:
            status = RANK
            break
        a = r[:, yq, zq].copy()
        b = r[xq, :, zq].copy()
        c = r[xq, yq, :].copy()
        n1 = r[:, :, zq].copy()
        n2 = r[:, yq, :].copy()
        n3 = r[xq, :, :].copy()
        keep_a = np.abs(a) > threshold
        keep_b = np.abs(b) > threshold
        keep_c = np.abs(c) > threshold
        mask = keep_a[:, None, None] & keep_b[None, :, None] & keep_c[None, None, :]
        den = a[:, None, None] * b[None, :, None] * c[None, None, :]
        num = n1[:, :, None] * n2[:, None, :] * n3[None, :, :] * p
        corr = np.zeros_like(r)
        np.divide(num, den, out=corr, where=mask)
        r -= corr
        triples.append((int(xq), int(yq), int(zq)))
        values.append(float(p))
    return TrivariateCross(tuple(triples), tuple(values), r, tuple(errors), status)

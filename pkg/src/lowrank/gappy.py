"""Gappy POD: reconstruction from a few sensor values and sensor placement.

The gappy scalar product uses only the sensor values,
``(v, w)_L = (|Omega| / L) * sum_l v(x_l) w(x_l)``.  The projection solves
the normal equations of that product.  The common factor ``|Omega| / L``
cancels from both sides and is not applied when solving.
"""

from dataclasses import dataclass

import numpy as np

from .eim import column_norms, eim_greedy
from .kernels import ContractError, cond2, first_argmax, lu_solve
from .sampling import SnapshotMatrix, functional_matrix

COND_TIE = 1e-12


class GappyError(ContractError):
    """The gappy normal system is singular."""


@dataclass(frozen=True, eq=False)
class GappySystem:
    """Basis, sensors and Gram matrix of a gappy projection.

    ``gram`` is the ``Q x Q`` matrix ``(h_j, h_i)_L``; ``gram_cond`` its
    spectral condition number (``inf`` when singular).  ``kappa_history``
    lists the condition numbers met along a greedy placement, if any.
    """

    basis: np.ndarray
    sensors: tuple
    gram: np.ndarray
    gram_cond: float
    measure: float
    mode: str = "nodal"
    gen_gram: np.ndarray = None
    kappa_history: tuple = ()

    @property
    def L(self):
        return len(self.sensors)

    @property
    def Q(self):
        return self.basis.shape[1]


def _basis(basis):
    h = getattr(basis, "basis", basis)
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.ndim != 2:
        raise ContractError(f"basis must be a matrix of columns, got shape {h.shape}")
    return h


def _check_sensors(sensors, m):
    sensors = [int(s) for s in sensors]
    if not sensors:
        raise ContractError("need at least one sensor")
    if len(set(sensors)) != len(sensors):
        raise ContractError("sensors must be distinct")
    if any(not 0 <= s < m for s in sensors):
        raise ContractError(f"sensor outside the grid of {m} points")
    return sensors


def _safe_cond(a):
    try:
        return cond2(a)
    except ContractError:
        # a zero Gram matrix has no finite condition number
        return float("inf")


def gappy_gram(basis, sensors, measure=1.0):
    """``G[i, j] = (|Omega| / L) sum_l h_j(x_l) h_i(x_l)``."""
    h = _basis(basis)
    sensors = _check_sensors(sensors, h.shape[0])
    hs = h[sensors, :]
    return (measure / len(sensors)) * (hs.T @ hs)


def gappy_system(basis, sensors, measure=1.0):
    h = _basis(basis)
    gram = gappy_gram(h, sensors, measure)
    return GappySystem(h, tuple(int(s) for s in sensors), gram, _safe_cond(gram),
                       float(measure))


def _normal_solve(hs, data):
    """Least-squares coefficients from the unscaled normal equations."""
    a = hs.T @ hs
    if _safe_cond(a) == float("inf"):
        raise GappyError("insufficient sensors for basis")
    return lu_solve(a, hs.T @ data)


def gappy_project(sys, f_at_sensors):
    """Gappy projection from sensor values.

    Returns ``(coefficients, reconstruction)``.  ``f_at_sensors`` has one
    entry per sensor, or one row per sensor for several right-hand sides.
    """
    data = np.asarray(f_at_sensors, dtype=np.float64)
    if data.shape[0] != sys.L:
        raise ContractError(f"got {data.shape[0]} sensor values for {sys.L} sensors")
    if sys.gram_cond == float("inf"):
        raise GappyError("insufficient sensors for basis")
    coef = _normal_solve(sys.basis[list(sys.sensors), :], data)
    return coef, sys.basis @ coef


def gappy_generalized_project(basis, functionals, G, dofs_of_f):
    """Generalized gappy projection from degrees of freedom ``sigma_l(f)``.

    Minimises ``(d - Phi h g)^T G (d - Phi h g)`` over the coefficients ``g``,
    where ``Phi`` stacks the functionals and ``G[l, k] = (phi_l, phi_k)``.
    When ``G`` is a positive multiple of the identity the factor cancels and
    the nodal normal equations are solved directly, so Dirac functionals give
    exactly the result of :func:`gappy_project`.
    """
    h = _basis(basis)
    phi = functional_matrix(functionals)
    if phi.shape[1] != h.shape[0]:
        raise ContractError("functional weights do not match the basis grid")
    n_f = phi.shape[0]
    G = np.asarray(G, dtype=np.float64)
    if G.shape != (n_f, n_f):
        raise ContractError(f"G must be {n_f}x{n_f}, got {G.shape}")
    if np.abs(G - G.T).max(initial=0.0) > 1e-12 * np.abs(G).max(initial=0.0):
        raise ContractError("G must be symmetric")
    dofs = np.asarray(dofs_of_f, dtype=np.float64)
    if dofs.shape[0] != n_f:
        raise ContractError(f"got {dofs.shape[0]} degrees of freedom for {n_f} functionals")
    hs = phi @ h
    if G[0, 0] > 0 and np.array_equal(G, G[0, 0] * np.eye(n_f)):
        return _normal_solve(hs, dofs)
    a = hs.T @ G @ hs
    if _safe_cond(a) == float("inf"):
        raise GappyError("generalized normal system is singular")
    return lu_solve(a, hs.T @ (G @ dofs))


@dataclass(frozen=True)
class SensorPlacement:
    sensors: tuple
    history: tuple
    criterion: str


def _first_min(values):
    """Lowest index within ``COND_TIE`` (relative) of the minimum; ``inf`` allowed."""
    values = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(values)
    if not finite.any():
        return 0
    low = values[finite].min()
    return int(np.flatnonzero(finite & (values <= low + COND_TIE * low))[0])


def place_sensors_cond(basis, L, measure=1.0, *, initial=()):
    """Greedy sensors minimising the condition number of the gappy Gram.

    Step ``l`` scans every unused grid point ``x`` and evaluates the
    condition number of the Gram matrix of the first ``min(Q, l)`` basis
    vectors on the sensors chosen so far plus ``x``; the first minimiser
    wins.  At ``l = 1`` every nonzero point gives condition number 1 and
    the tie is broken by the largest ``|h_1(x)|``, then the lowest index.

    ``initial`` seeds the placement with fixed sensors (continuation).
    """
    h = _basis(basis)
    m, q_all = h.shape
    if L < 1:
        raise ContractError(f"need L >= 1, got {L}")
    if L > m:
        raise ContractError(f"cannot place {L} sensors on {m} grid points")
    sensors = list(initial)
    if sensors:
        _check_sensors(sensors, m)
    if len(sensors) > L:
        raise ContractError("more initial sensors than requested")
    history = []
    if sensors:
        history.append(_safe_cond(gappy_gram(h[:, :min(q_all, len(sensors))], sensors, measure)))
    used = np.zeros(m, dtype=bool)
    used[sensors] = True
    while len(sensors) < L:
        l = len(sensors) + 1
        k = min(q_all, l)
        free = np.flatnonzero(~used)
        if l == 1:
            mags = np.abs(h[free, 0])
            x = int(free[first_argmax(mags)])
            kappa = 1.0 if mags.max() > 0 else float("inf")
        else:
            hk = h[:, :k]
            base = hk[sensors].T @ hk[sensors]
            kappas = np.empty(free.size)
            for c, x in enumerate(free):
                gram = (measure / l) * (base + np.outer(hk[x], hk[x]))
                kappas[c] = _safe_cond(gram)
            best = _first_min(kappas)
            x = int(free[best])
            kappa = float(kappas[best])
        sensors.append(x)
        used[x] = True
        history.append(kappa)
    return SensorPlacement(tuple(sensors), tuple(history), "cond")


def place_sensors_error(basis, S, L, p="inf", measure=None):
    """Greedy sensors placed where the gappy reconstruction is worst.

    Step ``l`` projects every training column with the first
    ``min(Q, l - 1)`` basis vectors on the current ``l - 1`` sensors, takes
    the column with the largest residual norm and adds the unused point
    where that residual is largest in modulus.  Points that would leave the
    next Gram matrix singular are skipped.

    ``history[l]`` is the worst-column residual norm with ``l`` sensors, for
    ``l = 0..L``.
    """
    h = _basis(basis)
    m, q_all = h.shape
    vals = np.asarray(S.values if isinstance(S, SnapshotMatrix) else S, dtype=np.float64)
    if vals.shape[0] != m:
        raise ContractError("snapshots and basis live on different grids")
    weight = S.weight if isinstance(S, SnapshotMatrix) else 1.0 / m
    if measure is None:
        measure = S.grid_x.measure if isinstance(S, SnapshotMatrix) else 1.0
    if L < 1:
        raise ContractError(f"need L >= 1, got {L}")
    if L > m:
        raise ContractError(f"cannot place {L} sensors on {m} grid points")
    sensors = []
    used = np.zeros(m, dtype=bool)
    history = []

    def residual(sens):
        k = min(q_all, len(sens))
        if k == 0:
            return vals.copy()
        coef = _normal_solve(h[sens, :k], vals[sens, :])
        return vals - h[:, :k] @ coef

    while True:
        res = residual(sensors)
        norms = column_norms(res, p, weight)
        history.append(float(norms.max(initial=0.0)))
        if len(sensors) == L:
            break
        y = first_argmax(norms)
        k_next = min(q_all, len(sensors) + 1)
        order = np.argsort(-np.abs(res[:, y]), kind="stable")
        chosen = None
        for x in order:
            if used[x]:
                continue
            trial = sensors + [int(x)]
            hs = h[trial, :k_next]
            if _safe_cond(hs.T @ hs) < float("inf"):
                chosen = int(x)
                break
        if chosen is None:
            raise GappyError(f"no admissible sensor left at step {len(sensors) + 1}")
        sensors.append(chosen)
        used[chosen] = True
    return SensorPlacement(tuple(sensors), tuple(history), "error")


def orthonormalize(h, weight):
    """Gram-Schmidt (two passes) in the weighted product, keeping column order.

    Every leading span ``span(h_1..h_k)`` is preserved.
    """
    out = np.array(_basis(h), dtype=np.float64, copy=True)
    for k in range(out.shape[1]):
        for _ in range(2):
            for p in range(k):
                out[:, k] -= weight * (out[:, p] @ out[:, k]) * out[:, p]
        nrm = np.sqrt(weight * (out[:, k] @ out[:, k]))
        if nrm == 0.0:
            raise ContractError(f"basis vector {k} is dependent on its predecessors")
        out[:, k] /= nrm
    return out


def eim_then_stabilize(S, tol, extra, p="inf", *, max_rank=None):
    """EIM basis and points, then ``extra`` sensors by condition-number greedy.

    The EIM basis is orthonormalised in the weighted scalar product, in
    order, before sensors are added.  This keeps every leading span, so the
    projection is unchanged, while the condition number of the gappy Gram
    becomes a measure of stability relative to the full grid (it tends to 1
    as the sensors fill the grid).  With ``extra = 0`` the gappy projection
    interpolates at the EIM points and reproduces the EIM interpolant.
    """
    if extra < 0:
        raise ContractError(f"extra must be nonnegative, got {extra}")
    sys = eim_greedy(S, tol, p, max_rank=max_rank)
    if sys.Q == 0:
        raise GappyError("EIM produced an empty basis")
    measure = S.grid_x.measure if isinstance(S, SnapshotMatrix) else 1.0
    basis = orthonormalize(sys.basis, sys.weight)
    placement = place_sensors_cond(basis, sys.Q + int(extra), measure,
                                   initial=sys.interp_indices)
    out = gappy_system(basis, placement.sensors, measure)
    return GappySystem(out.basis, out.sensors, out.gram, out.gram_cond, measure,
                       kappa_history=placement.history)

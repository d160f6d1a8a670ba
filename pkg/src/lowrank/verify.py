"""Cross-method checks: ACA/EIM equivalence, n-width floor and decay tables."""

from dataclasses import dataclass, field

import numpy as np

from .aca import aca2_bivariate
from .eim import eim_greedy
from .kernels import ContractError, solve_unit_lower_triangular, svd
from .pod import pod_basis, projection_error, scaled_snapshots
from .sampling import SnapshotMatrix

METHODS = ("pod", "aca_global", "aca_partial", "eim_inf", "eim_2")
TINY_TOL = np.finfo(float).tiny


@dataclass
class EquivalenceReport:
    """Side-by-side comparison of global-pivot ACA and EIM in the max norm.

    ``coefficient_deviation`` is ``max |g_q(y) - r_{q-1}(x_q, y)|`` and
    ``interpolant_deviation`` the largest gap between the two interpolants on
    the grid; both are absolute, to be compared with ``rtol * scale``.
    """

    holds: bool
    steps: int
    aca_pivots: list
    eim_pivots: list
    indices_match: bool
    coefficient_deviation: float
    interpolant_deviation: float
    scale: float
    rtol: float
    divergence: list = field(default_factory=list)

    def summary(self):
        state = "holds" if self.holds else "FAILS"
        return (f"equivalence {state}: {self.steps} steps, indices match={self.indices_match}, "
                f"coefficient dev={self.coefficient_deviation:.3g}, "
                f"interpolant dev={self.interpolant_deviation:.3g} (scale {self.scale:.3g})")

    def as_record(self):
        return {
            "holds": self.holds,
            "steps": self.steps,
            "aca_pivots": [list(p) for p in self.aca_pivots],
            "eim_pivots": [list(p) for p in self.eim_pivots],
            "indices_match": self.indices_match,
            "coefficient_deviation": self.coefficient_deviation,
            "interpolant_deviation": self.interpolant_deviation,
            "scale": self.scale,
            "rtol": self.rtol,
            "divergence": self.divergence,
        }


def check_equivalence_aca_eim(S, q_max, rtol=1e-10):
    """Run ACA with global pivoting and EIM with ``p = inf`` and compare them.

    Checks that the pivot sequences agree exactly, that the EIM coefficients
    of every training column equal the ACA remainder rows at the pivots, and
    that the two interpolants agree on the whole grid.
    """
    vals = S.values if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=np.float64)
    scale = float(np.abs(vals).max(initial=0.0))
    ca = aca2_bivariate(vals, TINY_TOL, "global", max_rank=q_max)
    es = eim_greedy(vals, TINY_TOL, "inf", max_rank=q_max)
    aca_piv = list(zip(ca.tau, ca.sigma))
    eim_piv = list(zip(es.interp_indices, es.sample_indices))
    divergence = []
    match = aca_piv == eim_piv
    if not match:
        for q in range(max(len(aca_piv), len(eim_piv))):
            a = aca_piv[q] if q < len(aca_piv) else None
            e = eim_piv[q] if q < len(eim_piv) else None
            if a != e:
                divergence.append({
                    "step": q + 1,
                    "aca": list(a) if a else None,
                    "eim": list(e) if e else None,
                    "aca_pivot_value": float(ca.pivots[q]) if a else None,
                    "eim_error": es.err_history[q],
                })
                break
    steps = min(ca.Q, es.Q)
    coef_dev = interp_dev = float("inf")
    if match:
        if steps:
            g = solve_unit_lower_triangular(es.B, vals[list(es.interp_indices), :])
            coef = np.abs(g - ca.v.T)
            coef_dev = float(coef.max())
            interp = np.abs(es.basis @ g - ca.to_dense())
            interp_dev = float(interp.max())
            bound = rtol * scale
            if coef_dev > bound:
                q, y = np.unravel_index(int(np.argmax(coef)), coef.shape)
                divergence.append({"step": int(q) + 1, "column": int(y),
                                   "eim_coefficient": float(g[q, y]),
                                   "aca_remainder": float(ca.v[y, q])})
            if interp_dev > bound:
                x, y = np.unravel_index(int(np.argmax(interp)), interp.shape)
                divergence.append({"row": int(x), "column": int(y),
                                   "deviation": interp_dev})
        else:
            coef_dev = interp_dev = 0.0
    holds = match and not divergence
    return EquivalenceReport(holds, steps, aca_piv, eim_piv, match, coef_dev, interp_dev,
                             scale, rtol, divergence)


def nwidth_oracle(S, Q, scale="rms"):
    """Discrete n-width proxy: ``sigma_{Q+1}`` of the snapshot matrix.

    With ``scale="rms"`` the matrix is ``sqrt(weight / N) * values``, so the
    value is comparable with root-mean-square projection errors.  With
    ``scale="none"`` the raw matrix is used.  Returns 0 when ``Q`` reaches
    the smaller dimension.
    """
    if isinstance(S, SnapshotMatrix):
        a = scaled_snapshots(S) if scale == "rms" else np.asarray(S.values)
    else:
        a = np.asarray(S, dtype=np.float64)
        if scale == "rms":
            a = np.sqrt(1.0 / (a.shape[0] * a.shape[1])) * a
    if scale not in ("rms", "none"):
        raise ContractError(f"scale must be 'rms' or 'none', got {scale!r}")
    if Q < 0 or Q >= a.shape[1]:
        raise ContractError(f"need 0 <= Q < N = {a.shape[1]}, got {Q}")
    s = svd(a)[0]
    return float(s[Q]) if Q < s.size else 0.0


def _history_at(history, q):
    return float(history[q]) if q < len(history) else float(history[-1])


def decay_report(S, methods=METHODS, q_max=10):
    """Error of each method for ``Q = 0..q_max`` next to the n-width floor.

    ``pod`` is the root-mean-square projection error in the weighted norm,
    ``aca_*`` the maximal remainder entry, and ``eim_*`` the largest
    residual norm over the training columns in the norm of the greedy.
    """
    methods = list(methods)
    if not methods:
        raise ContractError("need at least one method")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ContractError(f"unknown methods: {', '.join(unknown)}")
    if not isinstance(S, SnapshotMatrix):
        S = SnapshotMatrix.from_array(S)
    n = S.shape[1]
    q_max = int(q_max)
    if q_max < 0:
        raise ContractError("q_max must be nonnegative")
    columns = {}
    if "pod" in methods:
        basis = pod_basis(S, min(q_max, n))
        columns["pod"] = [projection_error(S, basis.basis[:, :min(q, basis.Q)])
                          for q in range(q_max + 1)]
    if "aca_global" in methods:
        h = aca2_bivariate(S, TINY_TOL, "global", max_rank=q_max).error_history
        columns["aca_global"] = [_history_at(h, q) for q in range(q_max + 1)]
    if "aca_partial" in methods:
        h = aca2_bivariate(S, TINY_TOL, "partial", max_rank=q_max).error_history
        columns["aca_partial"] = [_history_at(h, q) for q in range(q_max + 1)]
    for name, p in (("eim_inf", "inf"), ("eim_2", "2")):
        if name in methods:
            h = eim_greedy(S, TINY_TOL, p, max_rank=q_max).err_history
            columns[name] = [_history_at(h, q) for q in range(q_max + 1)]
    s = svd(scaled_snapshots(S))[0]
    rows = []
    for q in range(q_max + 1):
        row = {"Q": q, "nwidth": float(s[q]) if q < s.size else 0.0}
        for name in methods:
            row[name] = columns[name][q]
        rows.append(row)
    return rows


@dataclass(frozen=True, eq=False)
class CorpusInstance:
    index: int
    seed: tuple
    rank: int
    snapshots: SnapshotMatrix
    clean: np.ndarray


def random_corpus(count=100, seed=0, max_shape=(20, 15), max_rank=6, noise=1e-3,
                  min_shape=(4, 3)):
    """Seeded random low-rank matrices plus Gaussian noise.

    Instance ``k`` draws from ``numpy.random.default_rng([seed, k])``: a shape
    up to ``max_shape``, a rank in ``1..max_rank`` (at most the smaller
    dimension), standard normal factors, and ``noise`` times standard normal
    perturbations.  ``clean`` holds the exact low-rank part.
    """
    out = []
    for k in range(count):
        rng = np.random.default_rng([seed, k])
        m = int(rng.integers(min_shape[0], max_shape[0] + 1))
        n = int(rng.integers(min_shape[1], max_shape[1] + 1))
        r = int(rng.integers(1, min(max_rank, m, n) + 1))
        clean = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        vals = clean + noise * rng.standard_normal((m, n))
        out.append(CorpusInstance(k, (seed, k), r, SnapshotMatrix.from_array(vals), clean))
    return out

"""Grids, function sources, snapshot matrices and CSV persistence."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np


class SamplingError(ValueError):
    pass


class CsvFormatError(SamplingError):
    """Malformed CSV input; ``row`` and ``col`` are 1-based positions."""

    def __init__(self, message, row=None, col=None):
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {col})" if col is not None else ")")
        super().__init__(message + where)
        self.row = row
        self.col = col


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    measure: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).ravel()
        if pts.size < 1:
            raise SamplingError("a grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise SamplingError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise SamplingError("grid points must be strictly increasing")
        if not (np.isfinite(self.measure) and self.measure > 0):
            raise SamplingError(f"grid measure must be positive, got {self.measure}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "measure", float(self.measure))

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.measure == other.measure
            and np.array_equal(self.points, other.points)
        )

    def describe(self):
        return {"points": [float(p) for p in self.points], "measure": self.measure}


def uniform_grid(a, b, m):
    """``m`` equispaced points on ``[a, b]`` including both endpoints.

    A single point sits at the midpoint.  Points are formed as
    ``(a*(m-1-i) + b*i) / (m-1)`` so symmetric intervals give grids that are
    symmetric bit for bit.
    """
    if not a < b:
        raise SamplingError(f"need a < b, got a={a}, b={b}")
    if m < 1:
        raise SamplingError(f"need at least one point, got {m}")
    if m == 1:
        pts = np.array([0.5 * (a + b)])
    else:
        i = np.arange(m, dtype=np.float64)
        pts = (a * (m - 1 - i) + b * i) / (m - 1)
    return Grid(pts, b - a)


@dataclass(frozen=True)
class BivariateSource:
    """A deterministic function ``f(x, y)``.

    ``func`` is called with broadcastable numpy arrays; scalar-only callables
    are vectorised automatically.  ``tag`` and ``params`` describe built-in
    families so that they can be recorded and rebuilt.
    """

    func: object
    tag: str = "custom"
    params: dict = field(default_factory=dict)
    domain_check: object = None

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        shape = np.broadcast_shapes(x.shape, y.shape)
        try:
            out = np.asarray(self.func(x, y), dtype=np.float64)
        except TypeError:
            # scalar-only callable such as math.hypot
            out = None
        if out is None or (out.shape != shape and out.ndim != 0):
            return np.vectorize(lambda a, b: float(self.func(a, b)), otypes=[np.float64])(x, y)
        if out.shape != shape:
            out = np.broadcast_to(out, shape)
        return out


@dataclass(frozen=True)
class TrivariateSource:
    func: object
    grid_x: Grid
    grid_y: Grid
    grid_z: Grid
    tag: str = "custom"

    def tensor(self):
        """Values on the full tensor grid, shape ``(len(x), len(y), len(z))``."""
        X, Y, Z = np.meshgrid(
            self.grid_x.points, self.grid_y.points, self.grid_z.points, indexing="ij")
        out = np.asarray(self.func(X, Y, Z), dtype=np.float64)
        if out.shape != X.shape:
            out = np.broadcast_to(out, X.shape).copy()
        if not np.all(np.isfinite(out)):
            i, j, k = np.argwhere(~np.isfinite(out))[0]
            raise SamplingError(
                f"non-finite value at (x, y, z) = ({X[i, j, k]}, {Y[i, j, k]}, {Z[i, j, k]})")
        return out


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """``values[i, j] = f(x_i, y_j)`` with the discrete scalar-product weight.

    ``weight`` defaults to ``grid_x.measure / M`` so that
    ``(v, w) = weight * sum(v * w)`` approximates the continuous product.
    """

    values: np.ndarray
    grid_x: Grid
    grid_y: Grid
    weight: float = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise SamplingError(f"snapshot values must be 2-D, got shape {vals.shape}")
        if vals.shape != (len(self.grid_x), len(self.grid_y)):
            raise SamplingError(
                f"values shape {vals.shape} does not match grids "
                f"({len(self.grid_x)}, {len(self.grid_y)})")
        if not np.all(np.isfinite(vals)):
            raise SamplingError("snapshot values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        w = self.grid_x.measure / vals.shape[0] if self.weight is None else float(self.weight)
        if not w > 0:
            raise SamplingError(f"weight must be positive, got {w}")
        object.__setattr__(self, "weight", w)

    @property
    def shape(self):
        return self.values.shape

    def inner(self, v, w):
        """Weighted discrete scalar product over the x grid."""
        return self.weight * float(np.dot(v, w))

    def with_weight(self, weight):
        return SnapshotMatrix(self.values, self.grid_x, self.grid_y, weight)

    @classmethod
    def from_array(cls, values, weight=None):
        """Wrap a bare matrix on default unit grids."""
        values = np.asarray(values, dtype=np.float64)
        m, n = values.shape
        return cls(values, uniform_grid(0.0, 1.0, m), uniform_grid(0.0, 1.0, n), weight)


def materialize(src, gx, gy):
    """Sample ``src`` on ``gx x gy`` into a :class:`SnapshotMatrix`."""
    if src.domain_check is not None:
        src.domain_check(gx, gy)
    X, Y = np.meshgrid(gx.points, gy.points, indexing="ij")
    vals = src(X, Y)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise SamplingError(
            f"source returned {vals[i, j]} at (x, y) = ({gx.points[i]}, {gy.points[j]})")
    return SnapshotMatrix(vals, gx, gy)


def _polynomial(table):
    if callable(table):
        return table
    coef = np.asarray(table, dtype=np.float64)
    return lambda t: np.polynomial.polynomial.polyval(t, coef)


def builtin_family(name, **params):
    """Built-in test families with small n-width.

    ``product``   g(x) h(y); ``g``/``h`` are callables (default identity)
    ``rank_k``    sum_k g_k(x) h_k(y); ``factors_x``/``factors_y`` are
                  callables or polynomial coefficient tables
    ``cauchy``    1 / (x + y + c)
    ``analytic``  1 / (1 + x y)
    ``exp_abs``   exp(-|x - y|)
    ``constant``  the value ``value`` (default 1)
    """
    if name == "product":
        g = params.get("g", lambda t: t)
        h = params.get("h", lambda t: t)
        return BivariateSource(lambda x, y: g(x) * h(y), "product", params)
    if name == "rank_k":
        fx = [_polynomial(t) for t in params["factors_x"]]
        fy = [_polynomial(t) for t in params["factors_y"]]
        if len(fx) != len(fy) or not fx:
            raise SamplingError("rank_k needs equally many (>= 1) x and y factors")

        def rank_k(x, y):
            out = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
            for g, h in zip(fx, fy):
                out = out + g(x) * h(y)
            return out

        return BivariateSource(rank_k, "rank_k", params)
    if name == "cauchy":
        c = float(params.get("c", 1.0))

        def check(gx, gy):
            lo = gx.points[0] + gy.points[0] + c
            hi = gx.points[-1] + gy.points[-1] + c
            if c <= 0 and lo <= 0 <= hi:
                raise SamplingError(f"cauchy family with c={c} is singular on this domain")

        return BivariateSource(lambda x, y: 1.0 / (x + y + c), "cauchy", {"c": c}, check)
    if name == "analytic":
        return BivariateSource(lambda x, y: 1.0 / (1.0 + x * y), "analytic", {})
    if name == "exp_abs":
        return BivariateSource(lambda x, y: np.exp(-np.abs(x - y)), "exp_abs", {})
    if name == "constant":
        value = float(params.get("value", 1.0))
        return BivariateSource(lambda x, y: np.full(np.broadcast_shapes(
            np.shape(x), np.shape(y)), value), "constant", {"value": value})
    raise SamplingError(f"unknown family {name!r}")


def write_matrix_csv(snap, path):
    """Write values with grid headers; floats use the shortest round-trip form."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_matrix_csv(snap))


def format_matrix_csv(snap):
    buf = io.StringIO()
    buf.write(f"#measure:{snap.grid_x.measure!r},{snap.grid_y.measure!r}\n")
    buf.write("#y:" + ",".join(repr(float(y)) for y in snap.grid_y.points) + "\n")
    for x, row in zip(snap.grid_x.points, snap.values):
        buf.write(f"#x:{float(x)!r}," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def _number(text, row, col):
    try:
        value = float(text)
    except ValueError:
        raise CsvFormatError(f"non-numeric cell {text!r}", row, col) from None
    if not np.isfinite(value):
        raise CsvFormatError(f"non-finite cell {text!r}", row, col)
    return value


def read_matrix_csv(path):
    """Read a snapshot matrix written by :func:`write_matrix_csv` or a bare CSV.

    Recognised header conventions: an optional ``#measure:mx,my`` line, an
    optional ``#y:`` row of y coordinates, and an optional ``#x:`` prefix
    cell on every data row holding its x coordinate.  Without headers the
    grids default to uniform grids on [0, 1].
    """
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_matrix_csv(fh.read())


def parse_matrix_csv(text):
    measures = None
    ys = None
    xs = []
    rows = []
    for lineno, cells in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        head = cells[0].strip()
        if head.startswith("#measure:"):
            cells = [head[len("#measure:"):]] + cells[1:]
            if len(cells) != 2:
                raise CsvFormatError("#measure needs two values", lineno)
            measures = [_number(c, lineno, k + 1) for k, c in enumerate(cells)]
            continue
        if head.startswith("#y:"):
            cells = [head[3:]] + cells[1:]
            ys = [_number(c, lineno, k + 1) for k, c in enumerate(cells)]
            continue
        if head.startswith("#x:"):
            xs.append(_number(head[3:], lineno, 1))
            rows.append([_number(c, lineno, k + 2) for k, c in enumerate(cells[1:])])
        else:
            rows.append([_number(c, lineno, k + 1) for k, c in enumerate(cells)])
        if len(rows[-1]) != len(rows[0]):
            raise CsvFormatError(
                f"ragged row: {len(rows[-1])} values, expected {len(rows[0])}", lineno)
    if not rows or not rows[0]:
        raise CsvFormatError("no data rows")
    if xs and len(xs) != len(rows):
        raise CsvFormatError("#x: prefix must be on every data row or none")
    values = np.array(rows)
    m, n = values.shape
    if ys is not None and len(ys) != n:
        raise CsvFormatError(f"#y header has {len(ys)} entries for {n} columns", 1)

    def grid(points, count, measure):
        if points is None:
            g = uniform_grid(0.0, 1.0, count)
            return g if measure is None else Grid(g.points, measure)
        if measure is None:
            measure = points[-1] - points[0] if len(points) > 1 else 1.0
        return Grid(np.array(points), measure)

    gx = grid(xs or None, m, measures[0] if measures else None)
    gy = grid(ys, n, measures[1] if measures else None)
    return SnapshotMatrix(values, gx, gy)


@dataclass(frozen=True, eq=False)
class Functional:
    """A linear functional on grid vectors, ``sigma(v) = weights @ v``."""

    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)):
            raise SamplingError("functional weights must be finite")
        if not np.any(w):
            raise SamplingError("functional weights must not all vanish")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __call__(self, v):
        return self.weights @ np.asarray(v, dtype=np.float64)


def dirac(size, index):
    w = np.zeros(size)
    w[index] = 1.0
    return Functional(w, f"delta[{index}]")


def dirac_dictionary(size):
    return [dirac(size, i) for i in range(size)]


def average(size):
    return Functional(np.full(size, 1.0 / size), "mean")


def functional_matrix(dictionary):
    """Stack a dictionary into a ``(K, M)`` weight matrix."""
    return np.vstack([f.weights for f in dictionary])

"""Time grids, map families on them, and trapezoidal convolutions.

Two products are provided:

* ``(a * b)_t = int_0^t a_{t-u} b_u du`` for one-parameter families, and
* ``(A ⊛ B)_{t,s} = int_s^t A_{t,u} B_{u,s} du`` for two-parameter families,

both by the composite trapezoid rule over the shared nodes.  Kernels with a
``delta(t - s)`` part carry it structurally (``delta`` arrays) and the
convolution composes it locally, so the semigroup limit is exact.

A delta sitting at the end of an integration interval is counted with full
weight: ``int_s^t delta(t - u) A_u X_u du = A_t X_t``.  This is the convention
under which ``K_t = delta(t) L`` reproduces ``dL/dt = L Lambda``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as _k
from .errors import GridMismatch, IncompleteFamily, InvalidGrid


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = t0 + j h``, ``j = 0..n``."""

    t0: float
    h: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.h) or self.h <= 0:
            raise InvalidGrid(f"step must be positive, got {self.h}")
        if int(self.n) != self.n or self.n < 0:
            raise InvalidGrid(f"number of steps must be a non-negative integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def span(cls, t0: float, T: float, steps: int) -> "TimeGrid":
        if steps < 1 or T <= t0:
            raise InvalidGrid(f"need T > t0 and steps >= 1 (t0={t0}, T={T}, steps={steps})")
        return cls(t0, (T - t0) / steps, steps)

    @property
    def N(self) -> int:
        return self.n + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.N)

    @property
    def T(self) -> float:
        return self.t0 + self.n * self.h

    def index(self, t: float) -> int:
        """Node index of time ``t`` (must lie on the grid)."""
        j = int(round((t - self.t0) / self.h))
        if j < 0 or j > self.n or abs(self.t0 + j * self.h - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidGrid(f"t={t} is not a grid node")
        return j


def _check_same(*grids: TimeGrid):
    g0 = grids[0]
    for g in grids[1:]:
        if g != g0:
            raise GridMismatch(f"{g} != {g0}")


def spectral_max(arr: np.ndarray, chunk: int = 1 << 16) -> float:
    """Largest spectral norm in a stack of matrices (chunked to bound memory)."""
    flat = arr.reshape((-1,) + arr.shape[-2:])
    best = 0.0
    for a in range(0, flat.shape[0], chunk):
        part = flat[a:a + chunk]
        if part.size:
            best = max(best, float(np.max(np.linalg.norm(part, ord=2, axis=(-2, -1)))))
    return best


# column subsets cannot borrow the corner trick in derivative(); their residuals
# skip columns whose t-stencil would drop below second order
RESIDUAL_MIN_POINTS = 3


def node_derivative(y: np.ndarray, h: float, order: int = 2) -> np.ndarray:
    """d/dt along axis 0: centered inside, third-order one-sided at the ends.

    ``order=4`` switches to five-point stencils (fourth order everywhere)
    when at least 5 samples are available.  Short samples degrade gracefully
    (2nd order for 3 points, 1st for 2, zero for a single point).
    """
    y = np.asarray(y)
    m = y.shape[0]
    if order == 4 and m >= 5:
        return _derivative4(y, h)
    d = np.zeros_like(y)
    if m == 1:
        return d
    if m == 2:
        d[0] = d[1] = (y[1] - y[0]) / h
        return d
    d[1:-1] = (y[2:] - y[:-2]) / (2 * h)
    if m == 3:
        d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h)
        d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * h)
    else:
        d[0] = (-11 * y[0] + 18 * y[1] - 9 * y[2] + 2 * y[3]) / (6 * h)
        d[-1] = (11 * y[-1] - 18 * y[-2] + 9 * y[-3] - 2 * y[-4]) / (6 * h)
    return d


def _derivative4(y, h):
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def triangle_derivatives(V: np.ndarray, h: float, order: int = 2):
    """``(d/dt, d/ds)`` of a full lower-triangular array ``V[i, j] ~ F(t_i, t_j)``.

    Columns are differentiated in ``t`` and rows in ``s`` with
    :func:`node_derivative`.  Within three nodes of the ends (the last
    columns, the first rows) those samples are too short, so the identity
    ``d/dtau = d/dt + d/ds`` along the diagonal ``t - s = const`` is used
    instead, since the diagonals there are long.
    """
    N = V.shape[0]
    dt = np.zeros_like(V)
    ds = np.zeros_like(V)
    for j in range(N):
        dt[j:, j] = node_derivative(V[j:, j], h, order)
    for i in range(N):
        ds[i, :i + 1] = node_derivative(V[i, :i + 1], h, order)
    k = 3 if order == 2 else 4
    if N < k + 1:
        return dt, ds

    def along_diag(i, j):
        p = i - j
        m = np.arange(N - p)
        return node_derivative(V[m + p, m], h, order)[j]

    for j in range(N - k, N):
        for i in range(j, N):
            dt[i, j] = along_diag(i, j) - ds[i, j]
    for i in range(k):
        for j in range(i + 1):
            ds[i, j] = along_diag(i, j) - dt[i, j]
    return dt, ds


class OneParamFamily:
    """Maps ``F_j ~ F_{t_j}`` on a grid starting at 0."""

    def __init__(self, grid: TimeGrid, values):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 3 or values.shape[0] != grid.N:
            raise IncompleteFamily(f"need {grid.N} nodes, got array of shape {values.shape}")
        self.grid = grid
        self.values = values

    @property
    def D(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def constant(cls, grid: TimeGrid, S) -> "OneParamFamily":
        return cls(grid, np.broadcast_to(np.asarray(S, dtype=complex), (grid.N,) + np.shape(S)).copy())

    @classmethod
    def from_function(cls, grid: TimeGrid, f) -> "OneParamFamily":
        return cls(grid, np.array([f(t) for t in grid.nodes], dtype=complex))

    def _like(self, other):
        _check_same(self.grid, other.grid)

    def __add__(self, other):
        self._like(other)
        return OneParamFamily(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._like(other)
        return OneParamFamily(self.grid, self.values - other.values)

    def __mul__(self, c):
        return OneParamFamily(self.grid, self.values * c)

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return spectral_max(self.values)

    def derivative(self) -> "OneParamFamily":
        return OneParamFamily(self.grid, node_derivative(self.values, self.grid.h))

    def lift(self, columns=None) -> "TwoParamFamily":
        return lift(self, columns)


class TwoParamFamily:
    """Triangular family ``S_{i,j} ~ S_{t_i,t_j}``, ``i >= j``.

    ``values[i, c]`` holds ``S_{i, cols[c]}``; a full family has
    ``cols = 0..n``.  Entries above the diagonal are zero and ignored.
    """

    def __init__(self, grid: TimeGrid, values, cols=None):
        values = np.asarray(values, dtype=complex)
        if cols is None:
            cols = np.arange(grid.N)
        cols = np.asarray(cols, dtype=np.int64)
        if values.ndim != 4 or values.shape[0] != grid.N or values.shape[1] != cols.shape[0]:
            raise IncompleteFamily(
                f"values of shape {values.shape} do not match {grid.N} rows and {cols.shape[0]} columns")
        if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] > grid.n):
            raise IncompleteFamily("columns must be strictly increasing grid indices")
        self.grid = grid
        self.values = values
        self.cols = cols

    @property
    def D(self) -> int:
        return self.values.shape[-1]

    @property
    def full(self) -> bool:
        return self.cols.shape[0] == self.grid.N

    def slot(self, j: int) -> int:
        if self.full:
            return j
        c = int(np.searchsorted(self.cols, j))
        if c >= self.cols.shape[0] or self.cols[c] != j:
            raise IncompleteFamily(f"column {j} is not stored")
        return c

    def __getitem__(self, ij) -> np.ndarray:
        i, j = ij
        if i < j:
            raise IndexError(f"({i}, {j}) lies above the diagonal")
        return self.values[i, self.slot(j)]

    def column(self, j: int) -> np.ndarray:
        """``S_{i,j}`` for ``i = j..n`` as an ``(n - j + 1, D, D)`` array."""
        return self.values[j:, self.slot(j)]

    @classmethod
    def zeros(cls, grid: TimeGrid, D: int, cols=None) -> "TwoParamFamily":
        M = grid.N if cols is None else len(cols)
        return cls(grid, np.zeros((grid.N, M, D, D), dtype=complex), cols)

    @classmethod
    def from_function(cls, grid: TimeGrid, f, cols=None) -> "TwoParamFamily":
        t = grid.nodes
        cols = np.arange(grid.N) if cols is None else np.asarray(cols)
        first = np.asarray(f(t[0], t[0]), dtype=complex)
        out = np.zeros((grid.N, len(cols)) + first.shape, dtype=complex)
        for c, j in enumerate(cols):
            for i in range(j, grid.N):
                out[i, c] = f(t[i], t[j])
        return cls(grid, out, cols)

    @classmethod
    def constant(cls, grid: TimeGrid, S, cols=None) -> "TwoParamFamily":
        S = np.asarray(S, dtype=complex)
        return cls.from_function(grid, lambda t, s: S, cols)

    def restrict(self, cols) -> "TwoParamFamily":
        cols = np.asarray(cols, dtype=np.int64)
        idx = [self.slot(int(j)) for j in cols]
        return TwoParamFamily(self.grid, self.values[:, idx], cols)

    def _like(self, other):
        _check_same(self.grid, other.grid)
        if not np.array_equal(self.cols, other.cols):
            raise GridMismatch("families hold different columns")

    def __add__(self, other):
        self._like(other)
        return TwoParamFamily(self.grid, self.values + other.values, self.cols)

    def __sub__(self, other):
        self._like(other)
        return TwoParamFamily(self.grid, self.values - other.values, self.cols)

    def __mul__(self, c):
        return TwoParamFamily(self.grid, self.values * c, self.cols)

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return spectral_max(self.values)

    def derivative(self) -> "TwoParamFamily":
        """``d/dt S_{t,s}`` on rows ``i >= j`` (see :func:`triangle_derivatives`)."""
        if self.full:
            return TwoParamFamily(self.grid, triangle_derivatives(self.values, self.grid.h)[0], self.cols)
        out = np.zeros_like(self.values)
        for c, j in enumerate(self.cols):
            out[j:, c] = node_derivative(self.values[j:, c], self.grid.h)
        return TwoParamFamily(self.grid, out, self.cols)

    def s_derivative(self) -> "TwoParamFamily":
        """``d/ds S_{t,s}`` on columns ``j <= i`` (full families only)."""
        if not self.full:
            raise IncompleteFamily("s-derivative needs every column")
        return TwoParamFamily(self.grid, triangle_derivatives(self.values, self.grid.h)[1], self.cols)

    def mask(self, min_points: int = 1) -> np.ndarray:
        """Boolean ``(N, M)`` mask of stored entries ``i >= j`` whose column holds
        at least ``min_points`` rows (``min_points=3`` keeps entries where the
        t-derivative stencil is second order or better)."""
        i = np.arange(self.grid.N)[:, None]
        j = self.cols[None, :]
        return (i >= j) & (self.grid.N - j >= min_points)

    def entries(self, min_points: int = 1) -> np.ndarray:
        """Stored lower-triangle entries as an ``(K, D, D)`` stack."""
        return self.values[self.mask(min_points)]

    def residual_mask(self) -> np.ndarray:
        """Entries where ``derivative()`` is at least second order."""
        return self.mask(1 if self.full else RESIDUAL_MIN_POINTS)

    def diagonal(self) -> np.ndarray:
        """``S_{j,j}`` for every stored column."""
        return self.values[self.cols, np.arange(self.cols.shape[0])]


class OneParamKernel:
    """Homogeneous kernel ``K_t = delta(t) A + R_t``; either part may be absent."""

    def __init__(self, grid: TimeGrid, delta=None, regular: Optional[OneParamFamily] = None, D: int | None = None):
        if regular is not None:
            _check_same(grid, regular.grid)
            D = regular.D
        if delta is not None:
            delta = np.asarray(delta, dtype=complex)
            D = delta.shape[-1]
        if D is None:
            raise IncompleteFamily("cannot infer the superoperator size of an empty kernel")
        self.grid = grid
        self.delta = delta
        self.regular = regular
        self.D = D

    def lift(self, columns=None) -> "KernelFamily":
        delta = None if self.delta is None else np.broadcast_to(self.delta, (self.grid.N, self.D, self.D)).copy()
        reg = None if self.regular is None else lift(self.regular)
        return KernelFamily(self.grid, delta, reg, D=self.D)

    def __sub__(self, other: "OneParamKernel") -> "OneParamKernel":
        _check_same(self.grid, other.grid)
        return OneParamKernel(self.grid, _sub_opt(self.delta, other.delta),
                              _sub_fam(self.regular, other.regular), D=self.D)

    def regular_or_zero(self) -> OneParamFamily:
        if self.regular is None:
            return OneParamFamily(self.grid, np.zeros((self.grid.N, self.D, self.D), dtype=complex))
        return self.regular


class KernelFamily:
    """Two-parameter kernel ``K_{t,s} = delta(t - s) A_t + R_{t,s}``."""

    def __init__(self, grid: TimeGrid, delta=None, regular: Optional[TwoParamFamily] = None, D: int | None = None):
        if regular is not None:
            _check_same(grid, regular.grid)
            if not regular.full:
                raise IncompleteFamily("a kernel's regular part must hold every column")
            D = regular.D
        if delta is not None:
            delta = np.asarray(delta, dtype=complex)
            if delta.shape[0] != grid.N:
                raise IncompleteFamily(f"delta part needs {grid.N} nodes, got {delta.shape[0]}")
            D = delta.shape[-1]
        if D is None:
            raise IncompleteFamily("cannot infer the superoperator size of an empty kernel")
        self.grid = grid
        self.delta = delta
        self.regular = regular
        self.D = D

    def __sub__(self, other: "KernelFamily") -> "KernelFamily":
        _check_same(self.grid, other.grid)
        return KernelFamily(self.grid, _sub_opt(self.delta, other.delta),
                            _sub_fam(self.regular, other.regular), D=self.D)

    def delta_or_zero(self) -> np.ndarray:
        if self.delta is None:
            return np.zeros((self.grid.N, self.D, self.D), dtype=complex)
        return self.delta

    def regular_or_zero(self) -> TwoParamFamily:
        if self.regular is None:
            return TwoParamFamily.zeros(self.grid, self.D)
        return self.regular


def _sub_opt(a, b):
    if a is None and b is None:
        return None
    if a is None:
        return -b
    if b is None:
        return a
    return a - b


def _sub_fam(a, b):
    if a is None and b is None:
        return None
    if a is None:
        return b * -1.0
    if b is None:
        return a
    return a - b


def lift(f: OneParamFamily, columns=None) -> TwoParamFamily:
    """``F_{i,j} := F_{i-j}`` on a grid of the same step."""
    N = f.grid.N
    cols = np.arange(N) if columns is None else np.asarray(columns, dtype=np.int64)
    out = np.zeros((N, len(cols), f.D, f.D), dtype=complex)
    for c, j in enumerate(cols):
        out[j:, c] = f.values[:N - j]
    return TwoParamFamily(f.grid, out, cols)


def convolve_hom(a: OneParamFamily, b: OneParamFamily) -> OneParamFamily:
    _check_same(a.grid, b.grid)
    return OneParamFamily(a.grid, _k.conv_hom(a.values, b.values, a.grid.h))


def convolve_inhom(A: TwoParamFamily, B: TwoParamFamily) -> TwoParamFamily:
    """``A ⊛ B`` on the columns held by ``B`` (``A`` must be full)."""
    _check_same(A.grid, B.grid)
    if not A.full:
        raise IncompleteFamily("the left factor of ⊛ must hold every column")
    return TwoParamFamily(A.grid, _k.conv_cols(A.values, B.values, B.cols, A.grid.h), B.cols)


def convolve_kernel(K: KernelFamily, B: TwoParamFamily) -> TwoParamFamily:
    """``K ⊛ B``: ``A_i B_{i,j} + (R ⊛ B)_{i,j}``."""
    _check_same(K.grid, B.grid)
    out = np.zeros_like(B.values)
    if K.delta is not None:
        out = _k.left_nodes(K.delta, B.values, B.cols)
    if K.regular is not None:
        out = out + _k.conv_cols(K.regular.values, B.values, B.cols, B.grid.h)
    return TwoParamFamily(B.grid, out, B.cols)


def convolve_right_kernel(B: TwoParamFamily, K: KernelFamily) -> TwoParamFamily:
    """``B ⊛ K``: ``B_{i,j} A_j + (B ⊛ R)_{i,j}`` (full families only)."""
    _check_same(K.grid, B.grid)
    if not B.full:
        raise IncompleteFamily("the left factor of ⊛ must hold every column")
    out = np.zeros_like(B.values)
    if K.delta is not None:
        out = _k.right_nodes(B.values, K.delta, B.cols)
    if K.regular is not None:
        out = out + _k.conv_cols(B.values, K.regular.values, B.cols, B.grid.h)
    return TwoParamFamily(B.grid, out, B.cols)


def convolve_kernel_hom(k: OneParamKernel, b: OneParamFamily) -> OneParamFamily:
    """``k * b``: ``A b_t + (R * b)_t``."""
    _check_same(k.grid, b.grid)
    out = np.zeros_like(b.values)
    if k.delta is not None:
        out = _k.left_const(k.delta, b.values)
    if k.regular is not None:
        out = out + _k.conv_hom(k.regular.values, b.values, b.grid.h)
    return OneParamFamily(b.grid, out)


def convolve_right_kernel_hom(b: OneParamFamily, k: OneParamKernel) -> OneParamFamily:
    """``b * k``: ``b_t A + (b * R)_t``."""
    _check_same(k.grid, b.grid)
    out = np.zeros_like(b.values)
    if k.delta is not None:
        out = _k.right_const(b.values, k.delta)
    if k.regular is not None:
        out = out + _k.conv_hom(b.values, k.regular.values, b.grid.h)
    return OneParamFamily(b.grid, out)


def compose_left(A_nodes, B: TwoParamFamily) -> TwoParamFamily:
    """Node-wise ``A_{t} ∘ B_{t,s}``."""
    A_nodes = np.asarray(A_nodes, dtype=complex)
    if A_nodes.ndim == 2:
        A_nodes = np.broadcast_to(A_nodes, (B.grid.N,) + A_nodes.shape).copy()
    return TwoParamFamily(B.grid, _k.left_nodes(A_nodes, B.values, B.cols), B.cols)


def associativity_defect(A: TwoParamFamily, B: TwoParamFamily, C: TwoParamFamily) -> float:
    """``max ||((A ⊛ B) ⊛ C - A ⊛ (B ⊛ C))_{i,j}||_2`` over the grid."""
    left = convolve_inhom(convolve_inhom(A, B), C)
    right = convolve_inhom(A, convolve_inhom(B, C))
    return spectral_max(left.values - right.values)


def homogeneity_defect(F: TwoParamFamily) -> float:
    """``max ||F_{i,j} - F_{i-j,0}||_2`` over stored columns (needs column 0)."""
    if F.grid.n == 0:
        return 0.0
    base = F.column(0)
    worst = 0.0
    for c, j in enumerate(F.cols):
        if j == 0:
            continue
        diff = F.values[j:, c] - base[:F.grid.N - j]
        worst = max(worst, spectral_max(diff))
    return worst

"""Uniform space-time grids, finite-difference jets, and discrete norms.

The computational domain is the box (0, t_end) x (x_lo, x_hi)^d sampled on
a uniform lattice.  Spatial and temporal derivatives are realized as dense
stencil matrices: second-order central differences in the interior and
second-order one-sided stencils at the boundary, so that first derivatives
are exact on linears and second derivatives exact on quadratics, and every
adjoint is a plain matrix transpose.

Norms over space-time fields are nested trapezoidal quadrature: an
L^{q_space} norm over each spatial slice inside an L^{q_time} norm over
time.  The supremum norm is a separate evaluator; infinite exponents are
rejected by the quadrature norm on purpose.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np


def jet_dimension(d: int, kappa: int) -> int:
    """Number of derivative components per state up to order kappa.

    Order k contributes C(d+k-1, k) distinct multi-indices, so the total is
    sum_{k=0..kappa} C(d+k-1, k).  The time coordinate is not counted.
    """
    if d < 1:
        raise ValueError(f"spatial dimension must be >= 1, got {d}")
    if kappa < 0:
        raise ValueError(f"jet order must be >= 0, got {kappa}")
    total = 0
    for k in range(kappa + 1):
        total += math.comb(d + k - 1, k)
        if total > 2**40:
            raise ValueError(f"jet dimension overflow for d={d}, kappa={kappa}")
    return total


def multi_indices(d: int, k: int) -> list[tuple[int, ...]]:
    """All multi-indices beta in N_0^d with |beta| = k, lexicographic."""
    if d == 1:
        return [(k,)]
    out = []
    for first in range(k + 1):
        for rest in multi_indices(d - 1, k - first):
            out.append((first,) + rest)
    return sorted(out)


@lru_cache(maxsize=None)
def first_difference_matrix(n: int, h: float) -> np.ndarray:
    """Dense d/dx stencil: central interior, one-sided second order at ends."""
    if n < 3:
        raise ValueError(f"first-derivative stencil needs n >= 3, got {n}")
    m = np.zeros((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5 / h
        m[i, i + 1] = 0.5 / h
    m[0, 0], m[0, 1], m[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    m[-1, -1], m[-1, -2], m[-1, -3] = 1.5 / h, -2.0 / h, 0.5 / h
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def second_difference_matrix(n: int, h: float) -> np.ndarray:
    """Dense d^2/dx^2 stencil: central interior, 4-point one-sided at ends."""
    if n < 4:
        raise ValueError(f"second-derivative stencil needs n >= 4, got {n}")
    m = np.zeros((n, n))
    h2 = h * h
    for i in range(1, n - 1):
        m[i, i - 1] = 1.0 / h2
        m[i, i] = -2.0 / h2
        m[i, i + 1] = 1.0 / h2
    m[0, :4] = np.array([2.0, -5.0, 4.0, -1.0]) / h2
    m[-1, -4:] = np.array([-1.0, 4.0, -5.0, 2.0]) / h2
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over (0, t_end) x (x_lo, x_hi)^d.

    nx points per spatial axis, nt time levels, both endpoint-inclusive.
    """

    d: int
    nx: int
    nt: int
    x_lo: float
    x_hi: float
    t_end: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.nx < 5:
            raise ValueError(f"nx must be >= 5, got {self.nx}")
        if self.nt < 3:
            raise ValueError(f"nt must be >= 3, got {self.nt}")
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.t_end / (self.nt - 1)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.d

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.nt)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx)

    def time_weights(self) -> np.ndarray:
        return trapezoid_weights(self.nt, self.dt)

    def space_weights_1d(self) -> np.ndarray:
        return trapezoid_weights(self.nx, self.dx)

    def space_weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights over the spatial lattice."""
        w1 = self.space_weights_1d()
        return reduce(np.multiply.outer, [w1] * self.d)

    def time_derivative_matrix(self) -> np.ndarray:
        return first_difference_matrix(self.nt, self.dt)

    def space_derivative_matrix(self, order: int) -> np.ndarray:
        if order == 1:
            return first_difference_matrix(self.nx, self.dx)
        if order == 2:
            return second_difference_matrix(self.nx, self.dx)
        raise ValueError(f"unsupported spatial derivative order {order}")


@dataclass
class Field:
    """One scalar channel sampled on a grid, indexed (t, x_1, ..., x_d)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.nt,) + self.grid.spatial_shape
        if self.values.shape != expected:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


@dataclass
class JetField:
    """A field together with its spatial derivatives up to a given order.

    Components are ordered by derivative order, lexicographic in the
    multi-index within each order; component 0 is the field itself.
    """

    order: int
    components: list = field(default_factory=list)
    p_k: list = field(default_factory=list)

    def __post_init__(self):
        d = self.components[0].grid.d if self.components else 1
        expected = sum(math.comb(d + k - 1, k) for k in range(self.order + 1))
        if len(self.components) != expected:
            raise ValueError(
                f"jet has {len(self.components)} components, expected {expected}"
            )


def _derivative_array(grid: Grid, values: np.ndarray, beta: tuple[int, ...]) -> np.ndarray:
    """Apply D^beta along the spatial axes of a (nt, nx, ..., nx) array."""
    out = values
    for axis_d, order in enumerate(beta):
        if order == 0:
            continue
        axis = 1 + axis_d
        if order == 2:
            mats = [grid.space_derivative_matrix(2)]
        elif order == 1:
            mats = [grid.space_derivative_matrix(1)]
        else:
            raise ValueError(f"unsupported derivative order {order} on one axis")
        for m in mats:
            out = np.moveaxis(np.tensordot(m, out, axes=([1], [axis])), 0, axis)
    if out is values:
        out = values.copy()
    return out


def spatial_derivative(f: Field, beta: tuple[int, ...]) -> Field:
    """D^beta f with |beta| <= 2; exact on polynomials up to stencil order."""
    beta = tuple(int(b) for b in beta)
    if len(beta) != f.grid.d:
        raise ValueError(f"multi-index length {len(beta)} != d={f.grid.d}")
    if sum(beta) > 2:
        raise ValueError(f"derivative order |beta|={sum(beta)} > 2 unsupported")
    if any(b < 0 for b in beta):
        raise ValueError("multi-index entries must be nonnegative")
    if max(beta, default=0) == 2 and sum(beta) == 2:
        # pure second derivative along one axis: dedicated stencil
        return Field(f.grid, _derivative_array(f.grid, f.values, beta))
    if sum(beta) == 2:
        # mixed: compose the two first-derivative stencils
        out = f.values
        for axis_d, order in enumerate(beta):
            if order == 1:
                out = _derivative_array(f.grid, out, tuple(1 if i == axis_d else 0
                                                           for i in range(f.grid.d)))
        return Field(f.grid, out)
    return Field(f.grid, _derivative_array(f.grid, f.values, beta))


def time_derivative(f: Field) -> Field:
    """d/dt via central differences, one-sided second order at t=0 and t=T."""
    m = f.grid.time_derivative_matrix()
    out = np.tensordot(m, f.values, axes=([1], [0]))
    return Field(f.grid, out)


def jet(f: Field, kappa: int) -> JetField:
    """Collect (f, D^1 f, ..., D^kappa f) in canonical component order."""
    comps = []
    p_k = []
    for k in range(kappa + 1):
        betas = multi_indices(f.grid.d, k)
        p_k.append(len(betas))
        for beta in betas:
            comps.append(spatial_derivative(f, beta) if k > 0 else f.copy())
    return JetField(order=kappa, components=comps, p_k=p_k)


def bochner_norm(f: Field, q_time: float, q_space: float) -> float:
    """( int_0^T ( int_Omega |f|^q_space )^{q_time/q_space} dt )^{1/q_time}.

    Both integrals are trapezoidal; infinite exponents are rejected
    (sup_norm is the designated L^inf evaluator).
    """
    for q in (q_time, q_space):
        if not np.isfinite(q) or q < 1:
            raise ValueError(f"exponents must be finite and >= 1, got {q}")
    wt = f.grid.time_weights()
    ws = f.grid.space_weights()
    axes = tuple(range(1, 1 + f.grid.d))
    slice_int = np.sum(np.abs(f.values) ** q_space * ws, axis=axes)
    return float(np.sum(wt * slice_int ** (q_time / q_space)) ** (1.0 / q_time))


def sup_norm(f: Field) -> float:
    """Maximum absolute value over all grid nodes."""
    return float(np.max(np.abs(f.values)))


def write_field_csv(f: Field, path) -> None:
    """Serialize as `t,x1..xd,value` rows, time-major, 17 significant digits."""
    g = f.grid
    header = ["t"] + [f"x{i+1}" for i in range(g.d)] + ["value"]
    axes = [g.x] * g.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        flat = f.values.reshape(g.nt, -1)
        coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.d)
        for it, tval in enumerate(g.t):
            for ix in range(coords.shape[0]):
                row = [f"{tval:.17g}"]
                row += [f"{c:.17g}" for c in coords[ix]]
                row.append(f"{flat[it, ix]:.17g}")
                w.writerow(row)


def read_field_csv(path) -> Field:
    """Inverse of write_field_csv; the grid is reconstructed from coordinates."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 2
        rows = [[float(v) for v in row] for row in r]
    data = np.asarray(rows)
    ts = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    grid = Grid(d=d, nx=len(xs), nt=len(ts), x_lo=float(xs[0]),
                x_hi=float(xs[-1]), t_end=float(ts[-1]))
    values = data[:, -1].reshape((grid.nt,) + grid.spatial_shape)
    return Field(grid, values)

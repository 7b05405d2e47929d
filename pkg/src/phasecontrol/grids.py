"""Uniform tensor meshes and grid functions.

Space is discretized with vertex-centered nodes x_i = i*h on each axis.
Two node layouts coexist:

* ``dirichlet`` fields store interior nodes only; the boundary value is
  identically zero and enters the 3-point stencil implicitly.
* ``neumann`` fields store every node including the boundary; zero-flux
  is imposed by mirroring the first interior node across the boundary,
  which keeps the stencil second order.

All quadrature in the package is the rectangle rule: cell-volume weights
in space (dual cells, halved at ``neumann`` boundary nodes) and right-end
point sums over the time levels 1..N.  Using one quadrature everywhere is
what makes the discrete adjoint the exact transpose of the forward map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ShapeError

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

_DEFAULT_NODE_BUDGET = 50_000_000


@dataclass(frozen=True)
class Grid:
    """Uniform tensor mesh of a 1D interval or 2D rectangle plus a time grid."""

    lengths: tuple[float, ...]
    n_cells: tuple[int, ...]
    n_time_steps: int
    t_final: float
    max_space_time_nodes: int = _DEFAULT_NODE_BUDGET

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.n_cells))

    @property
    def dt(self) -> float:
        return self.t_final / self.n_time_steps

    @property
    def cell_volume(self) -> float:
        out = 1.0
        for hi in self.h:
            out *= hi
        return out

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_time_steps + 1)

    def axis_nodes(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, self.lengths[axis], self.n_cells[axis] + 1)

    # -- layout sizes -------------------------------------------------

    def n_nodes(self, kind: str) -> int:
        if kind == DIRICHLET:
            out = 1
            for n in self.n_cells:
                out *= n - 1
            return out
        if kind == NEUMANN:
            out = 1
            for n in self.n_cells:
                out *= n + 1
            return out
        raise ShapeError(f"unknown bc kind {kind!r}")

    def coords(self, kind: str) -> tuple[np.ndarray, ...]:
        """Flat coordinate arrays (x,) or (x, y) matching the node ordering."""
        axes = []
        for ax in range(self.dim):
            nodes = self.axis_nodes(ax)
            axes.append(nodes[1:-1] if kind == DIRICHLET else nodes)
        if self.dim == 1:
            return (axes[0],)
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return X.ravel(), Y.ravel()

    # -- operators (cached per grid) ----------------------------------

    @cached_property
    def _lap_1d(self) -> dict[tuple[int, str], sp.csr_matrix]:
        out = {}
        for ax in range(self.dim):
            h = self.h[ax]
            n = self.n_cells[ax]
            a = 1.0 / (h * h)
            # interior-only tridiagonal; zero Dirichlet data needs nothing extra
            out[(ax, DIRICHLET)] = sp.diags(
                [a * np.ones(n - 2), -2.0 * a * np.ones(n - 1), a * np.ones(n - 2)],
                offsets=[-1, 0, 1],
                format="csr",
            )
            lap = sp.diags(
                [a * np.ones(n), -2.0 * a * np.ones(n + 1), a * np.ones(n)],
                offsets=[-1, 0, 1],
                format="lil",
            )
            # mirrored ghost: zero flux, second order at the boundary
            lap[0, 1] = 2.0 * a
            lap[n, n - 1] = 2.0 * a
            out[(ax, NEUMANN)] = lap.tocsr()
        return out

    def laplacian(self, kind: str) -> sp.csr_matrix:
        if self.dim == 1:
            return self._lap_1d[(0, kind)]
        lx = self._lap_1d[(0, kind)]
        ly = self._lap_1d[(1, kind)]
        ix = sp.identity(lx.shape[0], format="csr")
        iy = sp.identity(ly.shape[0], format="csr")
        return (sp.kron(lx, iy) + sp.kron(ix, ly)).tocsr()

    @cached_property
    def _weights(self) -> dict[str, np.ndarray]:
        out = {}
        for kind in (DIRICHLET, NEUMANN):
            per_axis = []
            for ax in range(self.dim):
                h = self.h[ax]
                if kind == DIRICHLET:
                    w = np.full(self.n_cells[ax] - 1, h)
                else:
                    w = np.full(self.n_cells[ax] + 1, h)
                    w[0] = w[-1] = 0.5 * h
                per_axis.append(w)
            w = per_axis[0]
            for extra in per_axis[1:]:
                w = np.kron(w, extra)
            out[kind] = w
        return out

    def weights(self, kind: str) -> np.ndarray:
        return self._weights[kind]

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Flat neumann-layout indices of the interior (dirichlet) nodes."""
        if self.dim == 1:
            return np.arange(1, self.n_cells[0])
        nx, ny = self.n_cells
        i = np.arange(1, nx)[:, None]
        j = np.arange(1, ny)[None, :]
        return (i * (ny + 1) + j).ravel()

    def restrict(self, neumann_values: np.ndarray) -> np.ndarray:
        """Take interior-node values of a neumann-layout vector."""
        return neumann_values[self.interior_index]

    def extend(self, dirichlet_values: np.ndarray) -> np.ndarray:
        """Zero-pad a dirichlet-layout vector onto the full node set."""
        out = np.zeros(self.n_nodes(NEUMANN))
        out[self.interior_index] = dirichlet_values
        return out

    @cached_property
    def restriction_matrix(self) -> sp.csr_matrix:
        """0/1 matrix with restrict = R @ v and extend = R.T @ v."""
        n_d = self.n_nodes(DIRICHLET)
        n_n = self.n_nodes(NEUMANN)
        rows = np.arange(n_d)
        return sp.csr_matrix(
            (np.ones(n_d), (rows, self.interior_index)), shape=(n_d, n_n)
        )


def build_grid(
    lengths,
    n_cells,
    n_time_steps: int,
    t_final: float,
    max_space_time_nodes: int = _DEFAULT_NODE_BUDGET,
) -> Grid:
    """Validate grid parameters and construct the mesh."""
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    n_cells = tuple(int(n) for n in np.atleast_1d(n_cells))
    if len(lengths) != len(n_cells):
        raise ConfigurationError("lengths and n_cells must have the same dimension")
    if len(lengths) not in (1, 2):
        raise ConfigurationError("only 1D and 2D grids are supported")
    if any(L <= 0 for L in lengths):
        raise ConfigurationError("domain lengths must be positive")
    if any(n < 2 for n in n_cells):
        raise ConfigurationError("need at least 2 cells per axis")
    if n_time_steps < 1:
        raise ConfigurationError("need at least one time step")
    if t_final <= 0:
        raise ConfigurationError("final time must be positive")
    grid = Grid(lengths, n_cells, int(n_time_steps), float(t_final), max_space_time_nodes)
    total = (grid.n_time_steps + 1) * grid.n_nodes(NEUMANN)
    if total > max_space_time_nodes:
        raise ConfigurationError(
            f"space-time node count {total} exceeds the budget {max_space_time_nodes}"
        )
    return grid


@dataclass
class Field:
    """A grid function on one of the two node layouts."""

    grid: Grid
    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes(self.kind),):
            raise ShapeError(
                f"{self.kind} field needs {self.grid.n_nodes(self.kind)} values, "
                f"got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ShapeError(f"{self.kind} field contains non-finite values")

    @classmethod
    def zeros(cls, grid: Grid, kind: str) -> "Field":
        return cls(grid, kind, np.zeros(grid.n_nodes(kind)))

    @classmethod
    def full(cls, grid: Grid, kind: str, value: float) -> "Field":
        return cls(grid, kind, np.full(grid.n_nodes(kind), float(value)))

    @classmethod
    def from_function(cls, grid: Grid, kind: str, fn) -> "Field":
        vals = np.asarray(fn(*grid.coords(kind)), dtype=float)
        return cls(grid, kind, np.broadcast_to(vals, (grid.n_nodes(kind),)).copy())

    def copy(self) -> "Field":
        return Field(self.grid, self.kind, self.values.copy())


@dataclass
class TimeField:
    """One field per time level 0..N, stored as an (N+1, n_nodes) array.

    Level 0 exists for every quantity so that indexing is uniform; controls
    and sources are only consumed at levels 1..N and all space-time inner
    products run over those levels (rectangle rule in time).
    """

    grid: Grid
    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expect = (self.grid.n_time_steps + 1, self.grid.n_nodes(self.kind))
        if self.values.shape != expect:
            raise ShapeError(
                f"time-indexed {self.kind} field needs shape {expect}, "
                f"got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ShapeError(f"time-indexed {self.kind} field contains non-finite values")

    @classmethod
    def zeros(cls, grid: Grid, kind: str) -> "TimeField":
        return cls(grid, kind, np.zeros((grid.n_time_steps + 1, grid.n_nodes(kind))))

    @classmethod
    def full(cls, grid: Grid, kind: str, value: float) -> "TimeField":
        return cls(
            grid, kind, np.full((grid.n_time_steps + 1, grid.n_nodes(kind)), float(value))
        )

    @classmethod
    def from_function(cls, grid: Grid, kind: str, fn) -> "TimeField":
        coords = grid.coords(kind)
        rows = [
            np.broadcast_to(np.asarray(fn(t, *coords), dtype=float), (grid.n_nodes(kind),))
            for t in grid.times
        ]
        return cls(grid, kind, np.array(rows))

    @property
    def n_levels(self) -> int:
        return self.values.shape[0]

    def level(self, n: int) -> Field:
        return Field(self.grid, self.kind, self.values[n])

    def copy(self) -> "TimeField":
        return TimeField(self.grid, self.kind, self.values.copy())


@dataclass
class Trajectory:
    """Solution of the state system: temperature, order parameter and ξ."""

    theta: TimeField
    phi: TimeField
    xi: TimeField
    newton_iterations: list[int] = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.theta.grid


# -- operations -------------------------------------------------------


def laplacian_apply(f: Field) -> Field:
    return Field(f.grid, f.kind, f.grid.laplacian(f.kind) @ f.values)


def _check_same_layout(f: Field, g: Field):
    if f.grid is not g.grid and f.grid != g.grid:
        raise ShapeError("fields live on different grids")
    if f.kind != g.kind:
        raise ShapeError(f"layout mismatch: {f.kind} vs {g.kind}")


def inner_product(f: Field, g: Field) -> float:
    """Cell-volume weighted L2 pairing over the domain."""
    _check_same_layout(f, g)
    return float(np.dot(f.grid.weights(f.kind) * f.values, g.values))


def norm(f: Field) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def grad_norm_sq(f: Field) -> float:
    """Discrete Dirichlet energy ||∇f||² = -(Lf, f), nonnegative by symmetry."""
    lap = f.grid.laplacian(f.kind) @ f.values
    val = -float(np.dot(f.grid.weights(f.kind) * lap, f.values))
    return max(val, 0.0)


def space_time_inner(a: TimeField, b: TimeField) -> float:
    """Rectangle-rule pairing over space-time: dt * sum over levels 1..N."""
    if a.kind != b.kind or a.values.shape != b.values.shape:
        raise ShapeError("space-time layout mismatch")
    w = a.grid.weights(a.kind)
    return float(a.grid.dt * np.sum((a.values[1:] * w) * b.values[1:]))


def space_time_norm(a: TimeField) -> float:
    return float(np.sqrt(max(space_time_inner(a, a), 0.0)))


def linf_h_norm(a: TimeField) -> float:
    """max over time levels of the spatial L2 norm."""
    w = a.grid.weights(a.kind)
    return float(np.sqrt(np.max(np.sum(a.values * a.values * w, axis=1))))


def linf_grad_norm(a: TimeField) -> float:
    """max over time levels of ||∇·|| (the natural norm for zero-trace fields)."""
    return float(np.sqrt(max(grad_norm_sq(a.level(n)) for n in range(a.n_levels))))


def l2_v_norm(a: TimeField) -> float:
    """Space-time norm carrying both the value and the gradient part."""
    total = 0.0
    for n in range(1, a.n_levels):
        f = a.level(n)
        total += a.grid.dt * (inner_product(f, f) + grad_norm_sq(f))
    return float(np.sqrt(max(total, 0.0)))


def time_antiderivative(a: TimeField) -> TimeField:
    """Cumulative rectangle-rule time integral; level 0 is zero."""
    out = np.zeros_like(a.values)
    np.cumsum(a.values[1:], axis=0, out=out[1:])
    out[1:] *= a.grid.dt
    return TimeField(a.grid, a.kind, out)

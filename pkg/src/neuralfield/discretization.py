"""Uniform grids, composite quadrature, and the discrete integral operators.

A grid turns the compact domain into nodes, a quadrature rule turns
integrals into weighted sums, and the synaptic kernel is cached as the
matrix W[i, j] = w(x_i, x_j) * q_j.  The state-dependent plasticity factor
[1 + gamma * g(u_i - u_j)] is applied at evaluation time and never baked
into W, so one operator serves every gamma.

All reductions use numpy's fixed pairwise order over ascending indices,
which makes results deterministic and independent of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .model import ModelSpec, SynapticKernel

QUADRATURE_RULES = ("trapezoid", "simpson")
BOUNDARIES = ("compact", "periodic")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor-product grid on a box in 1 or 2 dimensions."""

    bounds: tuple
    npts: tuple
    boundary: str = "compact"

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in np.atleast_2d(np.asarray(self.bounds, dtype=float)))
        npts = tuple(int(n) for n in np.atleast_1d(self.npts))
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "npts", npts)
        if len(bounds) not in (1, 2):
            raise ValueError("only 1-D and 2-D grids are supported")
        if len(npts) != len(bounds):
            raise ValueError("need one node count per axis")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        for (a, b), n in zip(bounds, npts):
            if not b > a:
                raise ValueError("axis bounds must satisfy a < b")
            if n < 3:
                raise ValueError("need at least 3 nodes per axis")

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @cached_property
    def spacing(self) -> tuple:
        out = []
        for (a, b), n in zip(self.bounds, self.npts):
            out.append((b - a) / (n - 1) if self.boundary == "compact" else (b - a) / n)
        return tuple(out)

    @cached_property
    def axis_nodes(self) -> tuple:
        out = []
        for (a, b), n, h in zip(self.bounds, self.npts, self.spacing):
            if self.boundary == "compact":
                nodes = np.linspace(a, b, n)
            else:
                nodes = a + h * np.arange(n)
            nodes.flags.writeable = False
            out.append(nodes)
        return tuple(out)

    @cached_property
    def points(self) -> np.ndarray:
        """All nodes as an (n_total, dimension) array in lexicographic order."""
        if self.dimension == 1:
            pts = self.axis_nodes[0][:, None].copy()
        else:
            x, y = np.meshgrid(*self.axis_nodes, indexing="ij")
            pts = np.column_stack([x.ravel(), y.ravel()])
        pts.flags.writeable = False
        return pts

    @property
    def n_total(self) -> int:
        return int(np.prod(self.npts))

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))

    def pairwise_distance(self) -> np.ndarray:
        """Distances |x_i - x_j|; periodic grids use the minimal image per axis."""
        pts = self.points
        sq = np.zeros((self.n_total, self.n_total))
        for ax in range(self.dimension):
            d = np.abs(pts[:, ax, None] - pts[None, :, ax])
            if self.boundary == "periodic":
                period = self.bounds[ax][1] - self.bounds[ax][0]
                d = np.minimum(d, period - d)
            sq += d * d
        return np.sqrt(sq)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "bounds": [list(b) for b in self.bounds],
            "nodes": list(self.npts),
            "boundary": self.boundary,
        }


def _axis_weights(n: int, h: float, rule: str, boundary: str) -> np.ndarray:
    if rule == "trapezoid":
        if boundary == "periodic":
            return np.full(n, h)
        w = np.full(n, h)
        w[0] = w[-1] = h / 2.0
        return w
    if rule == "simpson":
        if boundary == "periodic":
            raise ValueError("simpson weights are not defined on periodic grids; use trapezoid")
        if n % 2 == 0:
            raise ValueError("simpson rule requires an odd node count per axis")
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * (h / 3.0)
    raise ValueError(f"unknown quadrature rule {rule!r}")


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Positive weights turning sums over nodes into integrals over the domain."""

    rule: str
    weights: np.ndarray
    grid: Grid

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * np.asarray(values, dtype=float)))

    def l1_norm(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * np.abs(np.asarray(values, dtype=float))))

    def l2_norm(self, values: np.ndarray) -> float:
        v = np.asarray(values, dtype=float)
        return float(np.sqrt(np.sum(self.weights * v * v)))


def make_quadrature(grid: Grid, rule: str = "trapezoid") -> Quadrature:
    per_axis = [
        _axis_weights(n, h, rule, grid.boundary)
        for n, h in zip(grid.npts, grid.spacing)
    ]
    weights = per_axis[0] if grid.dimension == 1 else np.outer(per_axis[0], per_axis[1]).ravel()
    return Quadrature(rule=rule, weights=weights, grid=grid)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Field values sampled on the grid nodes at one time instant."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v = v.copy() if v.flags.writeable else v
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise ValueError("field state contains non-finite values")
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def kernel_matrix(kernel: SynapticKernel, grid: Grid) -> np.ndarray:
    """Raw kernel values w(x_i, x_j) on all node pairs."""
    if kernel.isotropic:
        return kernel.profile(grid.pairwise_distance())
    matrix = kernel.params["matrix"]
    nodes = kernel.params["nodes"]
    pts = grid.points
    sampled = nodes if nodes.ndim == 2 else nodes[:, None]
    if sampled.shape != pts.shape or not np.allclose(sampled, pts, atol=1e-12):
        raise ValueError("tabulated kernel was sampled on a different grid")
    return np.array(matrix, dtype=float)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Cached kernel-times-weights matrix W[i, j] = w(x_i, x_j) * q_j."""

    matrix: np.ndarray
    grid: Grid
    quadrature: Quadrature

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m = m.copy() if m.flags.writeable else m
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if not np.all(np.isfinite(m)):
            raise ValueError("operator matrix contains non-finite entries")

    @property
    def abs_row_sums(self) -> np.ndarray:
        return np.abs(self.matrix).sum(axis=1)

    @property
    def positive(self) -> bool:
        return bool(np.all(self.matrix > 0))

    def scaled_by_gain(self, gain: np.ndarray) -> "DiscreteOperator":
        """Operator for the effective kernel w(x, y) * gain(y)."""
        gain = np.asarray(gain, dtype=float)
        if gain.shape != (self.grid.n_total,):
            raise ValueError("gain must have one value per grid node")
        return replace(self, matrix=self.matrix * gain[None, :])


def build_operator(kernel: SynapticKernel, grid: Grid, quad: Quadrature) -> DiscreteOperator:
    if quad.weights.shape[0] != grid.n_total:
        raise ValueError("quadrature does not match grid")
    w = kernel_matrix(kernel, grid)
    return DiscreteOperator(matrix=w * quad.weights[None, :], grid=grid, quadrature=quad)


def _as_values(state, n: int) -> np.ndarray:
    values = state.values if isinstance(state, FieldState) else np.asarray(state, dtype=float)
    if values.shape != (n,):
        raise ValueError(f"state has {values.shape} values, grid has {n} nodes")
    return values


def apply_j_values(model: ModelSpec, op: DiscreteOperator, values: np.ndarray) -> np.ndarray:
    """Nonlinear input term: sum_j W[i,j] * (1 + gamma*g(u_i - u_j)) * f(u_j)."""
    rates = model.firing(values)
    weighted = op.matrix * rates[None, :]
    if model.gamma != 0.0:
        diff = values[:, None] - values[None, :]
        weighted = weighted * (1.0 + model.gamma * model.learning(diff))
    return weighted.sum(axis=1)


def apply_f_values(model: ModelSpec, op: DiscreteOperator, values: np.ndarray) -> np.ndarray:
    """Right-hand side of the evolution: -u + (input term)."""
    return apply_j_values(model, op, values) - values


def apply_J(model: ModelSpec, op: DiscreteOperator, state) -> np.ndarray:
    """Public entry point; accepts a FieldState or a plain vector."""
    return apply_j_values(model, op, _as_values(state, op.grid.n_total))


def apply_F(model: ModelSpec, op: DiscreteOperator, state) -> np.ndarray:
    return apply_f_values(model, op, _as_values(state, op.grid.n_total))

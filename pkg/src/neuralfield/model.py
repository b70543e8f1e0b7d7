"""Synaptic kernels, firing-rate maps, learning kernels, and their constants.

The dynamics evolved elsewhere in the package is

    u_t(x,t) + u(x,t) = integral over the domain of
        w(x,y) * [1 + gamma * g(u(x,t) - u(y,t))] * f(u(y,t)) dy

where w is the synaptic kernel, f the firing rate, g the learning kernel
and gamma >= 0 the plasticity coefficient.  Everything the bound checks
need (sup norms, L1 norms, Lipschitz constants) lives here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import KernelInterpolationError

FIRING_KINDS = ("sigmoid", "scaled-arctan", "linear", "piecewise-linear-clamped")
LEARNING_KINDS = ("gaussian",)
KERNEL_KINDS = ("exponential", "mexican-hat", "tabulated")
MODEL_MODES = ("well-posed", "gain-field")

_FIRING_DEFAULTS = {
    "sigmoid": {"slope": 1.0, "threshold": 0.0},
    "scaled-arctan": {"scale": 1.0},
    "linear": {},
    "piecewise-linear-clamped": {"slope": 1.0, "threshold": 0.0},
}

_KERNEL_DEFAULTS = {
    "exponential": {"amplitude": 0.5, "decay": 1.0},
    "mexican-hat": {"scale": 1.0},
    "tabulated": {},
}


def _fill_params(kind, params, defaults, what):
    if kind not in defaults:
        raise ValueError(f"unknown {what} kind {kind!r}; expected one of {sorted(defaults)}")
    known = defaults[kind]
    params = dict(params or {})
    extra = set(params) - set(known)
    if extra and kind != "tabulated":
        raise ValueError(f"{what} {kind!r} got unexpected params {sorted(extra)}")
    merged = dict(known)
    merged.update(params)
    return merged


@dataclass(frozen=True)
class FiringRate:
    """Membrane potential to firing probability map.

    Bounded kinds take values in [0, 1]; the linear kind is the identity
    and is only legal in gain-field mode.
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", _fill_params(self.kind, self.params, _FIRING_DEFAULTS, "firing rate"))

    @property
    def bounded(self) -> bool:
        return self.kind != "linear"

    @property
    def lipschitz(self) -> float:
        """Sup of |f'| in closed form for every built-in kind."""
        p = self.params
        if self.kind == "sigmoid":
            return p["slope"] / 4.0
        if self.kind == "scaled-arctan":
            return p["scale"] / math.pi
        if self.kind == "linear":
            return 1.0
        return abs(p["slope"])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind == "sigmoid":
            out = 1.0 / (1.0 + np.exp(-p["slope"] * (s - p["threshold"])))
        elif self.kind == "scaled-arctan":
            out = 0.5 + np.arctan(p["scale"] * s) / math.pi
        elif self.kind == "linear":
            out = s
        else:
            out = np.clip(p["slope"] * (s - p["threshold"]), 0.0, 1.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class LearningKernel:
    """Gaussian similarity of pre- and post-synaptic potentials.

    g(d) = exp(-(d/width)^2), so g(0) = 1, g is even, and g decays to zero.
    """

    kind: str = "gaussian"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LEARNING_KINDS:
            raise ValueError(f"unknown learning kernel kind {self.kind!r}")
        merged = {"width": 1.0}
        merged.update(self.params or {})
        extra = set(merged) - {"width"}
        if extra:
            raise ValueError(f"learning kernel got unexpected params {sorted(extra)}")
        if merged["width"] <= 0:
            raise ValueError("learning kernel width must be positive")
        object.__setattr__(self, "params", merged)

    @property
    def lipschitz(self) -> float:
        # |g'| peaks at d = width/sqrt(2) with value sqrt(2/e)/width.
        return math.sqrt(2.0 / math.e) / self.params["width"]

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        z = d / self.params["width"]
        out = np.exp(-z * z)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class SynapticKernel:
    """Connection strength w(x, y) between positions y (pre) and x (post).

    Built-in kinds are isotropic profiles of the distance |x - y|:

    * ``exponential``: amplitude * exp(-decay * d), purely excitatory.
    * ``mexican-hat``: (1 - d/scale) * exp(-d/scale), short-range excitation
      with long-range inhibition.
    * ``tabulated``: an explicit matrix sampled on a known set of nodes.
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        merged = _fill_params(self.kind, self.params, _KERNEL_DEFAULTS, "synaptic kernel")
        if self.kind == "tabulated":
            matrix = np.asarray(merged.get("matrix"), dtype=float)
            nodes = np.asarray(merged.get("nodes"), dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ValueError("tabulated kernel needs a square matrix")
            if nodes.shape[0] != matrix.shape[0]:
                raise ValueError("tabulated kernel nodes must match matrix size")
            matrix.flags.writeable = False
            nodes.flags.writeable = False
            merged["matrix"] = matrix
            merged["nodes"] = nodes
        elif self.kind == "exponential":
            if merged["decay"] <= 0:
                raise ValueError("exponential kernel decay must be positive")
        elif self.kind == "mexican-hat":
            if merged["scale"] <= 0:
                raise ValueError("mexican-hat scale must be positive")
        object.__setattr__(self, "params", merged)

    @property
    def isotropic(self) -> bool:
        return self.kind in ("exponential", "mexican-hat")

    @property
    def positive(self) -> bool:
        """True when w > 0 everywhere (purely excitatory network)."""
        if self.kind == "exponential":
            return self.params["amplitude"] > 0
        if self.kind == "tabulated":
            return bool(np.all(self.params["matrix"] > 0))
        return False

    def profile(self, distance):
        """Kernel value as a function of |x - y| (isotropic kinds only)."""
        if not self.isotropic:
            raise ValueError("tabulated kernels have no radial profile")
        d = np.asarray(distance, dtype=float)
        p = self.params
        if self.kind == "exponential":
            out = p["amplitude"] * np.exp(-p["decay"] * d)
        else:
            z = d / p["scale"]
            out = (1.0 - z) * np.exp(-z)
        return out if out.ndim else float(out)

    def evaluate(self, x, y):
        """w(x, y) for points given as scalars or coordinate arrays."""
        if self.isotropic:
            dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
            return self.profile(np.linalg.norm(np.atleast_1d(dx)))
        nodes = self.params["nodes"]
        pts = np.atleast_2d(nodes) if nodes.ndim == 1 else nodes

        def locate(p):
            p = np.atleast_1d(np.asarray(p, dtype=float))
            if nodes.ndim == 1:
                hit = np.nonzero(np.abs(nodes - p[0]) <= 1e-12)[0]
            else:
                hit = np.nonzero(np.all(np.abs(pts - p) <= 1e-12, axis=1))[0]
            if hit.size == 0:
                raise KernelInterpolationError(
                    f"point {p.tolist()} is not a sampling node of the tabulated kernel; "
                    "interpolation is not supported"
                )
            return int(hit[0])

        return float(self.params["matrix"][locate(x), locate(y)])


@dataclass(frozen=True)
class ModelSpec:
    """Full problem definition: kernel, firing rate, learning kernel, gamma."""

    kernel: SynapticKernel
    firing: FiringRate
    learning: LearningKernel
    gamma: float = 0.0
    mode: str = "well-posed"

    def __post_init__(self):
        if self.mode not in MODEL_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODEL_MODES}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.mode == "well-posed" and not self.firing.bounded:
            raise ValueError(
                "linear firing rate is unbounded and only admitted in gain-field mode"
            )

    def to_json(self) -> dict:
        def section(obj):
            params = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in obj.params.items()}
            return {"kind": obj.kind, "params": params}

        return {
            "kernel": section(self.kernel),
            "firing": section(self.firing),
            "learning": section(self.learning),
            "gamma": self.gamma,
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ModelSpec":
        return cls(
            kernel=SynapticKernel(doc["kernel"]["kind"], doc["kernel"].get("params", {})),
            firing=FiringRate(doc["firing"]["kind"], doc["firing"].get("params", {})),
            learning=LearningKernel(doc["learning"]["kind"], doc["learning"].get("params", {})),
            gamma=float(doc.get("gamma", 0.0)),
            mode=doc.get("mode", "well-posed"),
        )


@dataclass(frozen=True)
class TheoryConstants:
    """Constants controlling every estimate the solver monitors.

    kernel_sup          sup |w|
    kernel_l1_sup       sup over x of the L1 norm of w(x, .) on the domain
    kernel_l1_lipschitz Lipschitz constant of x -> w(x, .) in L1 (diagnostic)
    firing_lipschitz    sup |f'|
    learning_lipschitz  sup |g'|
    method              'analytic' when every constant with a closed form used
                        it, 'grid-estimated' otherwise
    """

    kernel_sup: float
    kernel_l1_sup: float
    kernel_l1_lipschitz: float
    firing_lipschitz: float
    learning_lipschitz: float
    method: str = "analytic"

    def __post_init__(self):
        for name in ("kernel_sup", "kernel_l1_sup", "kernel_l1_lipschitz",
                     "firing_lipschitz", "learning_lipschitz"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_json(self) -> dict:
        return {
            "kernel_sup": self.kernel_sup,
            "kernel_l1_sup": self.kernel_l1_sup,
            "kernel_l1_lipschitz": self.kernel_l1_lipschitz,
            "firing_lipschitz": self.firing_lipschitz,
            "learning_lipschitz": self.learning_lipschitz,
            "method": self.method,
        }


def eval_firing(firing: FiringRate, s):
    """Evaluate the firing rate at potential s."""
    return firing(s)


def eval_learning(learning: LearningKernel, d):
    """Evaluate the learning kernel at potential difference d."""
    return learning(d)


def eval_kernel(kernel: SynapticKernel, x, y):
    """Evaluate the synaptic kernel at a pair of points."""
    return kernel.evaluate(x, y)


def _analytic_l1_sup(kernel: SynapticKernel, grid) -> float | None:
    """Closed-form sup_x integral of |w(x, .)| over the grid's domain, if known."""
    if kernel.kind != "exponential" or grid.dimension != 1:
        return None
    amp = abs(kernel.params["amplitude"])
    lam = kernel.params["decay"]
    a, b = grid.bounds[0]
    if grid.boundary == "periodic":
        # integral of the minimal-image profile around the ring
        return amp * (2.0 / lam) * (1.0 - math.exp(-lam * (b - a) / 2.0))
    # maximised at the midpoint of the interval
    return (amp / lam) * (2.0 - 2.0 * math.exp(-lam * (b - a) / 2.0))


def _analytic_sup(kernel: SynapticKernel) -> float | None:
    if kernel.kind == "exponential":
        return abs(kernel.params["amplitude"])
    if kernel.kind == "mexican-hat":
        # |(1 - z) exp(-z)| is largest at z = 0
        return 1.0
    return None


def _grid_l1_lower_sum(absw: np.ndarray, grid) -> float:
    """Lower Riemann sum of each row of |w|, then the max over rows.

    Per-cell minima make the estimate a true lower bound of the row integral
    whenever |w| is monotone on each cell, which holds for the built-in
    kernels once the kink sits on a node.
    """
    n_rows = absw.shape[0]
    if grid.dimension == 1:
        h = grid.spacing[0]
        if grid.boundary == "periodic":
            rolled = np.roll(absw, -1, axis=1)
            sums = (h * np.minimum(absw, rolled)).sum(axis=1)
        else:
            sums = (h * np.minimum(absw[:, :-1], absw[:, 1:])).sum(axis=1)
        return float(sums.max())
    n1, n2 = grid.npts
    cell = grid.spacing[0] * grid.spacing[1]
    best = 0.0
    for i in range(n_rows):
        tile = absw[i].reshape(n1, n2)
        if grid.boundary == "periodic":
            corners = np.minimum.reduce([
                tile, np.roll(tile, -1, 0), np.roll(tile, -1, 1),
                np.roll(np.roll(tile, -1, 0), -1, 1),
            ])
            best = max(best, float(cell * corners.sum()))
        else:
            corners = np.minimum.reduce([
                tile[:-1, :-1], tile[1:, :-1], tile[:-1, 1:], tile[1:, 1:],
            ])
            best = max(best, float(cell * corners.sum()))
    return best


def compute_constants(model: ModelSpec, grid) -> TheoryConstants:
    """Compute the estimate constants for a model on a grid.

    Closed forms are preferred whenever the kind admits one (they remove
    discretization bias from the bound checks); everything else falls back
    to grid suprema, which under-approximate the true values.
    """
    from .discretization import kernel_matrix

    w = kernel_matrix(model.kernel, grid)
    absw = np.abs(w)

    sup_analytic = _analytic_sup(model.kernel)
    kernel_sup = sup_analytic if sup_analytic is not None else float(absw.max())

    l1_analytic = _analytic_l1_sup(model.kernel, grid)
    kernel_l1_sup = l1_analytic if l1_analytic is not None else _grid_l1_lower_sum(absw, grid)

    # L1-Lipschitz constant of x -> w(x,.), estimated from adjacent node rows;
    # reported as a diagnostic, never consumed by a bound.
    quad_w = _plain_weights(grid)
    pts = grid.points
    l1_diffs = (np.abs(w[1:] - w[:-1]) * quad_w[None, :]).sum(axis=1)
    step = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(step > 0, l1_diffs / step, 0.0)
    kernel_l1_lipschitz = float(ratios.max()) if ratios.size else 0.0

    firing_lipschitz = model.firing.lipschitz
    learning_lipschitz = model.learning.lipschitz

    method = "analytic" if l1_analytic is not None else "grid-estimated"
    return TheoryConstants(
        kernel_sup=kernel_sup,
        kernel_l1_sup=kernel_l1_sup,
        kernel_l1_lipschitz=kernel_l1_lipschitz,
        firing_lipschitz=firing_lipschitz,
        learning_lipschitz=learning_lipschitz,
        method=method,
    )


def _plain_weights(grid) -> np.ndarray:
    from .discretization import make_quadrature

    return make_quadrature(grid, "trapezoid").weights


def estimate_lipschitz(fn, lo: float, hi: float, n: int = 4001) -> float:
    """Largest difference quotient of fn over adjacent samples of [lo, hi].

    A genuine lower bound of the true Lipschitz constant that converges to it
    from below as n grows.
    """
    s = np.linspace(lo, hi, n)
    v = np.asarray(fn(s), dtype=float)
    return float(np.max(np.abs(np.diff(v)) / np.diff(s)))


def contraction_factor(constants: TheoryConstants, gamma: float, segment_length: float) -> float:
    """Contraction factor of the solution operator over a time segment.

    q = rho * [1 + L*Cw + gamma*(L + 2K)*Cw] where rho is the segment length,
    L and K the firing/learning Lipschitz constants and Cw the kernel L1 sup.
    The fixed-point argument needs q < 1.
    """
    if segment_length < 0:
        raise ValueError("segment length must be nonnegative")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    cw = constants.kernel_l1_sup
    lip_f = constants.firing_lipschitz
    lip_g = constants.learning_lipschitz
    return segment_length * (1.0 + lip_f * cw + gamma * (lip_f + 2.0 * lip_g) * cw)


def max_segment_length(constants: TheoryConstants, gamma: float, safety: float = 0.5) -> float:
    """Longest segment with contraction factor exactly `safety`."""
    if not 0.0 < safety < 1.0:
        raise ValueError("safety must lie in (0, 1)")
    return safety / contraction_factor(constants, gamma, 1.0)

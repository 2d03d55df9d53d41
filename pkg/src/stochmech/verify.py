"""Residuals of the dynamical identities satisfied by the diffusion fields.

Every equation is assembled from grid fields as ``lhs - rhs`` and reduced
with a density-weighted L2 norm per time node. Forward and backward mean
derivatives are expanded as

    D+ f = df/dt + b_plus df/dx + nu d2f/dx2
    D- f = df/dt + b_minus df/dx - nu d2f/dx2

with central time differences. The two end nodes of the time grid and a
margin of grid points next to the invalid (low-density) region are left out
of the norm, since their stencils reach one-sided or clamped values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .fields import (
    FieldHistory,
    InvalidInputError,
    PhysicsParams,
    ScalarField,
    SpatialGrid,
    erode_mask,
    fd_operator,
    gradient_array,
    integrate_array,
    laplacian_array,
    time_derivative_array,
)
from .sampler import PathEnsemble, ks_distance
from .schrodinger import DEFAULT_DENSITY_FLOOR, DriftHistory, WavefunctionHistory

NormKind = Literal["weighted_L2", "max_on_mask", "ks"]

EQUATION_IDS = (
    "continuity", "nelson1", "nelson2", "fwd_dyn", "bwd_dyn",
    "fwd_pde", "bwd_pde", "combined_pde", "newton", "fp_fwd", "fp_bwd",
)
DEFAULT_TOLERANCE = 5e-4
OSMOTIC_TOLERANCE = 1e-4
BORN_TOLERANCE = 0.02
MIN_BORN_PATHS = 10_000
MASK_MARGIN = 3


class LowStatisticsError(ValueError):
    """Too few samples for a meaningful statistical check."""


@dataclass(frozen=True, eq=False)
class ResidualReport:
    equation_id: str
    norm_kind: NormKind
    value: float
    tolerance: float
    passed: bool
    per_time: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)

    def row(self) -> tuple[str, float, float, bool]:
        return (self.equation_id, self.value, self.tolerance, self.passed)


@dataclass(frozen=True, eq=False)
class PotentialField:
    phi: ScalarField
    gradient_phi: ScalarField

    def __post_init__(self):
        ref = fd_operator("gradient", self.phi).values
        if np.max(np.abs(ref - self.gradient_phi.values)) > 1e-12:
            raise InvalidInputError("gradient_phi does not match the gradient of phi")

    @classmethod
    def from_params(cls, params: PhysicsParams, grid: SpatialGrid) -> "PotentialField":
        phi = ScalarField(grid, params.potential(grid.x), "energy")
        return cls(phi, fd_operator("gradient", phi))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def residual_mask(valid_mask: np.ndarray, margin: int = MASK_MARGIN) -> np.ndarray:
    """Points valid at the node and both time neighbours, shrunk by ``margin``."""
    valid = np.asarray(valid_mask, dtype=bool)
    both = valid.copy()
    both[1:] &= valid[:-1]
    both[:-1] &= valid[1:]
    return erode_mask(both, margin)


def _rho_values(rho) -> np.ndarray:
    return rho.values if isinstance(rho, FieldHistory) else np.asarray(rho, dtype=float)


def reduce_residual(equation_id: str, residual: np.ndarray, rho: np.ndarray,
                    mask: np.ndarray, dx: float, t: np.ndarray, tolerance: float,
                    norm_kind: NormKind = "weighted_L2") -> ResidualReport:
    """Per-node norms of a residual field, aggregated as the max over interior nodes."""
    if norm_kind == "weighted_L2":
        per_time = np.sqrt(integrate_array(np.where(mask, rho * residual**2, 0.0), dx))
    elif norm_kind == "max_on_mask":
        per_time = np.max(np.where(mask, np.abs(residual), 0.0), axis=-1)
    else:
        raise InvalidInputError(f"unknown norm {norm_kind!r}")
    interior = per_time[1:-1] if per_time.size > 2 else per_time
    value = float(np.max(interior))
    return ResidualReport(equation_id, norm_kind, value, tolerance,
                          bool(value <= tolerance), per_time, t)


# ---------------------------------------------------------------------------
# field assembly
# ---------------------------------------------------------------------------

class _Ops:
    def __init__(self, drifts: DriftHistory, params: PhysicsParams):
        self.dx = drifts.grid.dx
        self.dt = drifts.tgrid.dt
        self.nu = params.nu
        self.bp = drifts.b_plus
        self.bm = drifts.b_minus

    def grad(self, f):
        return gradient_array(f, self.dx)

    def lap(self, f):
        return laplacian_array(f, self.dx)

    def ddt(self, f):
        return time_derivative_array(f, self.dt)

    def d_plus(self, f):
        return self.ddt(f) + self.bp * self.grad(f) + self.nu * self.lap(f)

    def d_minus(self, f):
        return self.ddt(f) + self.bm * self.grad(f) - self.nu * self.lap(f)


def _score(rho: np.ndarray, dx: float, floor: float) -> np.ndarray:
    return gradient_array(np.log(np.maximum(rho, floor)), dx)


def mean_acceleration(drifts: DriftHistory, params: PhysicsParams) -> FieldHistory:
    """a = (D+ b_minus + D- b_plus) / 2 at every time node."""
    ops = _Ops(drifts, params)
    a = 0.5 * (ops.d_plus(drifts.b_minus) + ops.d_minus(drifts.b_plus))
    return FieldHistory(drifts.grid, drifts.tgrid, a, "length/time^2")


def pde_residual_field(equation_id: str, drifts: DriftHistory, rho,
                       potential: PotentialField, params: PhysicsParams,
                       density_floor: float = DEFAULT_DENSITY_FLOOR,
                       fp_form: Literal["laplacian", "flux"] = "laplacian") -> np.ndarray:
    """Pointwise ``lhs - rhs`` of one equation on the (t, x) mesh.

    ``fp_form="flux"`` writes the diffusive term of the Fokker-Planck
    equations as d(u rho)/dx instead of nu d2rho/dx2, which is the form
    obtained by substituting v = b_plus - u into the continuity equation.
    """
    if equation_id not in EQUATION_IDS:
        raise InvalidInputError(f"unknown equation {equation_id!r}")
    r = _rho_values(rho)
    ops = _Ops(drifts, params)
    m, nu, beta = params.mass, params.nu, params.beta
    bp, bm, v, u = drifts.b_plus, drifts.b_minus, drifts.v, drifts.u
    gphi = potential.gradient_phi.values

    if equation_id == "continuity":
        return ops.ddt(r) + ops.grad(v * r)
    if equation_id in ("fp_fwd", "fp_bwd"):
        b, sign = (bp, 1.0) if equation_id == "fp_fwd" else (bm, -1.0)
        diffusive = ops.grad(u * r) if fp_form == "flux" else nu * ops.lap(r)
        return ops.ddt(r) + ops.grad(b * r) - sign * diffusive
    if equation_id == "nelson1":
        return ops.ddt(u) + nu * ops.lap(v) + ops.grad(v * u)
    if equation_id == "nelson2":
        return ops.ddt(v) - (u * ops.grad(u) - v * ops.grad(v) + nu * ops.lap(u) - gphi / m)
    if equation_id == "fwd_dyn":
        rhs = (0.5 * (-(bp + bm) * ops.grad(bp) - (bp - bm) * ops.grad(bm))
               - nu * ops.lap(bm) - gphi / m)
        return ops.ddt(bp) - rhs
    if equation_id == "bwd_dyn":
        rhs = (0.5 * ((bp - bm) * ops.grad(bp) - (bp + bm) * ops.grad(bm))
               + nu * ops.lap(bp) - gphi / m)
        return ops.ddt(bm) - rhs
    if equation_id == "newton":
        return 0.5 * m * (ops.d_plus(bm) + ops.d_minus(bp)) + gphi

    score = _score(r, drifts.grid.dx, density_floor)
    osmotic_drive = ops.d_plus(score) + ops.d_minus(score)
    if equation_id == "fwd_pde":
        return m * ops.d_minus(bp) + gphi - 0.5 * beta * osmotic_drive
    if equation_id == "bwd_pde":
        return m * ops.d_plus(bm) + gphi + 0.5 * beta * osmotic_drive
    # combined_pde
    return m * ops.d_minus(bp) - m * ops.d_plus(bm) - beta * osmotic_drive


def pde_residual(equation_id: str, drifts: DriftHistory, rho, potential: PotentialField,
                 params: PhysicsParams, tolerance: float = DEFAULT_TOLERANCE,
                 norm_kind: NormKind = "weighted_L2",
                 density_floor: float = DEFAULT_DENSITY_FLOOR) -> ResidualReport:
    r = _rho_values(rho)
    res = pde_residual_field(equation_id, drifts, r, potential, params, density_floor)
    mask = residual_mask(drifts.valid_mask)
    return reduce_residual(equation_id, res, r, mask, drifts.grid.dx,
                           drifts.tgrid.t, tolerance, norm_kind)


def osmotic_residual(drifts: DriftHistory, rho, params: PhysicsParams,
                     tolerance: float = OSMOTIC_TOLERANCE,
                     density_floor: float = DEFAULT_DENSITY_FLOOR) -> ResidualReport:
    """Norm of b_plus - b_minus - 2 nu d(ln rho)/dx."""
    r = _rho_values(rho)
    res = drifts.b_plus - drifts.b_minus - 2.0 * params.nu * _score(r, drifts.grid.dx, density_floor)
    mask = residual_mask(drifts.valid_mask)
    return reduce_residual("osmotic", res, r, mask, drifts.grid.dx, drifts.tgrid.t, tolerance)


def newton_residual(drifts: DriftHistory, rho, potential: PotentialField,
                    params: PhysicsParams, tolerance: float = DEFAULT_TOLERANCE) -> ResidualReport:
    """m a + d(phi)/dx, the force balance of the mean acceleration."""
    return pde_residual("newton", drifts, rho, potential, params, tolerance)


def born_check(history: WavefunctionHistory, ens: PathEnsemble,
               t_indices=None, tolerance: float = BORN_TOLERANCE) -> ResidualReport:
    """KS distance between path marginals and |psi|^2 at the requested nodes.

    Defaults to the first, middle and last node.
    """
    if ens.n_paths < MIN_BORN_PATHS:
        raise LowStatisticsError(
            f"born check needs at least {MIN_BORN_PATHS} paths, got {ens.n_paths}")
    n = history.tgrid.n_nodes
    if t_indices is None:
        t_indices = (0, (n - 1) // 2, n - 1)
    t_indices = tuple(int(k) for k in t_indices)
    per_time = np.array([
        ks_distance(ens.marginal(k),
                    ScalarField(history.grid, np.abs(history.psi[k]) ** 2))
        for k in t_indices])
    value = float(per_time.max())
    return ResidualReport("born", "ks", value, tolerance, bool(value <= tolerance),
                          per_time, history.tgrid.t[list(t_indices)])

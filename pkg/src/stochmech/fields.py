"""Grids, field containers and the discrete calculus shared by every module.

All fields live on a uniform 1D grid. Derivatives are second-order finite
differences (central in the interior, one-sided at the two ends) and all
integrals use the trapezoidal rule, so quadrature and differencing carry the
same error order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

MIN_POINTS = 8
NORMALIZATION_TOL = 1e-6


class InvalidInputError(ValueError):
    """Raised when an operation receives data that violates its contract."""


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < MIN_POINTS:
            raise InvalidInputError(
                f"grid needs at least {MIN_POINTS} points, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise InvalidInputError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def refined(self) -> "SpatialGrid":
        """Same domain with the spacing halved."""
        return SpatialGrid(self.x_min, self.x_max, 2 * self.n_points - 1)


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise InvalidInputError("t_end must exceed t_start")
        if self.n_steps < 1:
            raise InvalidInputError("n_steps must be positive")

    @classmethod
    def from_dt(cls, t_start: float, t_end: float, dt: float) -> "TimeGrid":
        """Build a grid whose step is the closest to ``dt`` that divides the span."""
        n = max(1, int(round((t_end - t_start) / dt)))
        return cls(t_start, t_end, n)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_nodes)

    def refined(self) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, 2 * self.n_steps)


PotentialKind = Literal["free", "harmonic", "coherent", "double_well"]


@dataclass(frozen=True)
class PhysicsParams:
    """Physical constants of a scenario.

    ``nu``, ``beta`` and ``alpha`` are derived from ``mass`` and ``hbar``
    (diffusivity hbar/2m, multipliers hbar and hbar/2) and are not free
    parameters. ``potential_args`` holds omega for the harmonic family,
    (omega, x0) for the coherent state and (a, b) for the double well
    ``a (x^2 - b^2)^2``.
    """

    mass: float = 1.0
    hbar: float = 1.0
    potential_id: PotentialKind = "harmonic"
    potential_args: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.mass <= 0 or self.hbar <= 0:
            raise InvalidInputError("mass and hbar must be positive")
        expected = {"free": 0, "harmonic": 1, "coherent": 2, "double_well": 2}
        if self.potential_id not in expected:
            raise InvalidInputError(f"unknown potential {self.potential_id!r}")
        if len(self.potential_args) != expected[self.potential_id]:
            raise InvalidInputError(
                f"potential {self.potential_id!r} takes "
                f"{expected[self.potential_id]} arguments, got {self.potential_args}")

    @property
    def nu(self) -> float:
        return self.hbar / (2.0 * self.mass)

    @property
    def beta(self) -> float:
        return self.hbar

    @property
    def alpha(self) -> float:
        return self.hbar / 2.0

    @property
    def omega(self) -> float:
        if self.potential_id in ("harmonic", "coherent"):
            return self.potential_args[0]
        raise InvalidInputError(f"potential {self.potential_id!r} has no frequency")

    def potential(self, x: np.ndarray) -> np.ndarray:
        """Potential energy phi(x)."""
        x = np.asarray(x, dtype=float)
        if self.potential_id == "free":
            return np.zeros_like(x)
        if self.potential_id in ("harmonic", "coherent"):
            w = self.potential_args[0]
            return 0.5 * self.mass * w**2 * x**2
        a, b = self.potential_args
        return a * (x**2 - b**2) ** 2


def _check_values(values: np.ndarray, grid: SpatialGrid, what: str) -> None:
    if values.ndim != 1 or values.shape[0] != grid.n_points:
        raise InvalidInputError(
            f"{what} has shape {values.shape}, grid has {grid.n_points} points")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: SpatialGrid
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        _check_values(values, self.grid, "scalar field")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: SpatialGrid, f, units: str = "") -> "ScalarField":
        return cls(grid, f(grid.x), units)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        _check_values(values, self.grid, "complex field")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class FieldHistory:
    """Real field sampled at every node of a time grid, shape (n_nodes, n_points)."""

    grid: SpatialGrid
    tgrid: TimeGrid
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        shape = (self.tgrid.n_nodes, self.grid.n_points)
        if values.shape != shape:
            raise InvalidInputError(f"history has shape {values.shape}, expected {shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def at(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[k], self.units)

    def __len__(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# finite differences on raw arrays (last axis is space)
# ---------------------------------------------------------------------------

def gradient_array(f: np.ndarray, dx: float) -> np.ndarray:
    """Second-order first derivative along the last axis."""
    if f.shape[-1] < MIN_POINTS:
        raise InvalidInputError("grid too small for finite differences")
    return np.gradient(f, dx, axis=-1, edge_order=2)


def laplacian_array(f: np.ndarray, dx: float) -> np.ndarray:
    """Second-order second derivative along the last axis."""
    if f.shape[-1] < MIN_POINTS:
        raise InvalidInputError("grid too small for finite differences")
    out = np.empty_like(f, dtype=float)
    out[..., 1:-1] = f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]
    out[..., 0] = 2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]
    out[..., -1] = 2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]
    return out / dx**2


def time_derivative_array(f: np.ndarray, dt: float) -> np.ndarray:
    """Central differences along the first (time) axis, one-sided at the ends."""
    return np.gradient(f, dt, axis=0, edge_order=2)


def fd_operator(kind: Literal["gradient", "laplacian", "divergence"],
                f: ScalarField) -> ScalarField:
    """Apply a finite-difference operator to a field.

    In one dimension the divergence coincides with the gradient.
    """
    if kind in ("gradient", "divergence"):
        values = gradient_array(f.values, f.grid.dx)
    elif kind == "laplacian":
        values = laplacian_array(f.values, f.grid.dx)
    else:
        raise InvalidInputError(f"unknown operator {kind!r}")
    return ScalarField(f.grid, values)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def integrate_array(f: np.ndarray, dx: float) -> np.ndarray | float:
    """Trapezoidal rule along the last axis."""
    return np.trapezoid(f, dx=dx, axis=-1)


def integrate(f: ScalarField) -> float:
    return float(integrate_array(f.values, f.grid.dx))


def expectation(f: ScalarField, rho: ScalarField) -> float:
    """Absolute expectation of ``f`` under the density ``rho``."""
    if f.grid != rho.grid:
        raise InvalidInputError("field and density live on different grids")
    if np.any(rho.values < 0):
        raise InvalidInputError("density has negative entries")
    mass = integrate(rho)
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise InvalidInputError(f"density not normalized: mass defect {mass - 1.0:.3e}")
    return float(integrate_array(rho.values * f.values, rho.grid.dx))


def expectation_history(f: np.ndarray, rho: np.ndarray, dx: float,
                        mask: np.ndarray | None = None) -> np.ndarray:
    """Per-time-node expectations of a (n_nodes, n_points) field.

    ``mask`` restricts the integrand; excluded points contribute zero.
    """
    integrand = rho * f
    if mask is not None:
        integrand = np.where(mask, integrand, 0.0)
    return integrate_array(integrand, dx)


def time_integrate(series, tgrid: TimeGrid) -> float:
    """Trapezoidal rule over the nodes of ``tgrid``."""
    series = np.asarray(series, dtype=float)
    if series.shape != (tgrid.n_nodes,):
        raise InvalidInputError(
            f"series has {series.shape[0] if series.ndim else 0} entries, "
            f"time grid has {tgrid.n_nodes} nodes")
    return float(np.trapezoid(series, dx=tgrid.dt))


def erode_mask(mask: np.ndarray, width: int) -> np.ndarray:
    """Shrink a validity mask by ``width`` points along space.

    Removes the points whose difference stencils reach into invalid or
    clamped territory.
    """
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(width):
        shrunk = out.copy()
        shrunk[..., 1:] &= out[..., :-1]
        shrunk[..., :-1] &= out[..., 1:]
        shrunk[..., 0] = False
        shrunk[..., -1] = False
        out = shrunk
    return out

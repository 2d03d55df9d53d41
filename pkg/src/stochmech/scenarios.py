"""Scenario catalog: initial states, default grids and closed-form fields.

Three scenarios have closed forms for every field (free Gaussian packet,
harmonic ground state, harmonic coherent state). The double well is
verification-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import InvalidInputError, PhysicsParams, SpatialGrid, TimeGrid

SCENARIOS = ("free_packet", "harmonic_ground", "coherent", "double_well")
ANALYTIC_SCENARIOS = ("free_packet", "harmonic_ground", "coherent")

FREE_SIGMA0_SQ = 0.5
COHERENT_X0 = 1.0
DOUBLE_WELL_ARGS = (0.25, 1.5)


@dataclass(frozen=True)
class Scenario:
    name: str
    params: PhysicsParams
    grid: SpatialGrid
    tgrid: TimeGrid

    def psi0(self) -> np.ndarray:
        return initial_state(self.name, self.params, self.grid.x)


def default_params(name: str, mass: float = 1.0, hbar: float = 1.0,
                   omega: float = 1.0) -> PhysicsParams:
    if name == "free_packet":
        return PhysicsParams(mass, hbar, "free", ())
    if name == "harmonic_ground":
        return PhysicsParams(mass, hbar, "harmonic", (omega,))
    if name == "coherent":
        return PhysicsParams(mass, hbar, "coherent", (omega, COHERENT_X0))
    if name == "double_well":
        return PhysicsParams(mass, hbar, "double_well", DOUBLE_WELL_ARGS)
    raise InvalidInputError(f"unknown scenario {name!r}")


def default_scenario(name: str, n_points: int = 513, dt: float = 1e-3,
                     params: PhysicsParams | None = None) -> Scenario:
    """Desk-scale defaults: [-8, 8] over T=1, coherent state on [-10, 10] over T=pi/2."""
    params = params or default_params(name)
    if name == "coherent":
        grid = SpatialGrid(-10.0, 10.0, n_points)
        t_end = 0.5 * np.pi / params.omega
    else:
        grid = SpatialGrid(-8.0, 8.0, n_points)
        t_end = 1.0
    return Scenario(name, params, grid, TimeGrid.from_dt(0.0, t_end, dt))


def gaussian_packet(x: np.ndarray, center: float, sigma_sq: float,
                    momentum: float = 0.0, hbar: float = 1.0) -> np.ndarray:
    """Normalized Gaussian wavefunction with position variance ``sigma_sq``."""
    amp = (2.0 * np.pi * sigma_sq) ** -0.25
    return amp * np.exp(-((x - center) ** 2) / (4.0 * sigma_sq)
                        + 1j * momentum * x / hbar)


def initial_state(name: str, params: PhysicsParams, x: np.ndarray) -> np.ndarray:
    m, hbar = params.mass, params.hbar
    if name == "free_packet":
        return gaussian_packet(x, 0.0, FREE_SIGMA0_SQ, hbar=hbar)
    if name == "harmonic_ground":
        return gaussian_packet(x, 0.0, hbar / (2.0 * m * params.omega), hbar=hbar)
    if name == "coherent":
        w, x0 = params.potential_args
        return gaussian_packet(x, x0, hbar / (2.0 * m * w), hbar=hbar)
    if name == "double_well":
        # width of the harmonic ground state of the left well
        a, b = params.potential_args
        w_local = np.sqrt(8.0 * a * b**2 / m)
        psi = gaussian_packet(x, -b, hbar / (2.0 * m * w_local), hbar=hbar)
        dx = x[1] - x[0]
        return psi / np.sqrt(np.trapezoid(np.abs(psi) ** 2, dx=dx))
    raise InvalidInputError(f"unknown scenario {name!r}")


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def gaussian_density(x, mean, var):
    return np.exp(-((x - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def free_packet_variance(t, params: PhysicsParams, sigma0_sq: float = FREE_SIGMA0_SQ):
    tau = params.hbar * np.asarray(t) / (2.0 * params.mass * sigma0_sq)
    return sigma0_sq * (1.0 + tau**2)


def analytic_moments(name: str, params: PhysicsParams, t):
    """Mean and variance of the exact density at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    if name == "free_packet":
        return np.zeros_like(t), free_packet_variance(t, params)
    if name in ("harmonic_ground", "coherent"):
        w = params.omega
        var = np.full_like(t, params.hbar / (2.0 * params.mass * w))
        x0 = params.potential_args[1] if name == "coherent" else 0.0
        return x0 * np.cos(w * t), var
    raise InvalidInputError(f"no closed form for {name!r}")


def analytic_fields(name: str, params: PhysicsParams, x, t) -> dict[str, np.ndarray]:
    """Exact rho, u, v, b_plus, b_minus on the (t, x) mesh."""
    x = np.asarray(x, dtype=float)[None, :]
    t = np.asarray(t, dtype=float)[:, None]
    mean, var = analytic_moments(name, params, t)
    nu = params.nu
    rho = gaussian_density(x, mean, var)
    u = -nu * (x - mean) / var
    if name == "free_packet":
        dvar = params.hbar**2 * t / (2.0 * params.mass**2 * FREE_SIGMA0_SQ)
        v = x * dvar / (2.0 * var)
    elif name == "harmonic_ground":
        v = np.zeros_like(x * t)
    else:
        w, x0 = params.potential_args
        v = np.broadcast_to(-x0 * w * np.sin(w * t), (t.shape[0], x.shape[1])).copy()
    u = np.broadcast_to(u, rho.shape).copy()
    v = np.broadcast_to(v, rho.shape).copy()
    return {"rho": rho, "u": u, "v": v, "b_plus": v + u, "b_minus": v - u}

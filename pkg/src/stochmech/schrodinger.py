"""Reference quantum evolution and its decomposition into diffusion fields.

The wavefunction is advanced with Crank-Nicolson in time. In space the
kinetic operator uses the compact fourth-order (Numerov) form
``M^{-1} D2`` with ``M = I + dx^2/12 D2``; multiplying the Crank-Nicolson
system through by ``M`` keeps every solve tridiagonal and the propagator
unitary in the discrete L2 norm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .fields import (
    FieldHistory,
    InvalidInputError,
    PhysicsParams,
    SpatialGrid,
    TimeGrid,
    ComplexField,
    gradient_array,
    integrate_array,
)

log = logging.getLogger(__name__)

DEFAULT_DENSITY_FLOOR = 1e-10
BOUNDARY_AMPLITUDE_LIMIT = 1e-6
NORM_DRIFT_LIMIT = 1e-6


class DomainTooSmallError(RuntimeError):
    """The wavefunction reached the Dirichlet walls."""


class InstabilityError(RuntimeError):
    """The discrete norm drifted beyond round-off."""


@dataclass(frozen=True, eq=False)
class WavefunctionHistory:
    grid: SpatialGrid
    tgrid: TimeGrid
    psi: np.ndarray  # (n_nodes, n_points) complex
    params: PhysicsParams

    def at(self, k: int) -> ComplexField:
        return ComplexField(self.grid, self.psi[k])

    def norms(self) -> np.ndarray:
        return integrate_array(np.abs(self.psi) ** 2, self.grid.dx)


@dataclass(frozen=True, eq=False)
class AmplitudePhase:
    grid: SpatialGrid
    tgrid: TimeGrid
    R: np.ndarray
    S: np.ndarray
    valid_mask: np.ndarray
    density_floor: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class DriftHistory:
    """Forward/backward mean velocities and their half sum and half difference.

    Outside ``valid_mask`` every field holds the nearest valid value.
    """

    grid: SpatialGrid
    tgrid: TimeGrid
    b_plus: np.ndarray
    b_minus: np.ndarray
    v: np.ndarray
    u: np.ndarray
    valid_mask: np.ndarray

    @classmethod
    def from_b(cls, grid, tgrid, b_plus, b_minus, valid_mask) -> "DriftHistory":
        b_plus = np.asarray(b_plus, dtype=float)
        b_minus = np.asarray(b_minus, dtype=float)
        return cls(grid, tgrid, b_plus, b_minus, 0.5 * (b_plus + b_minus),
                   0.5 * (b_plus - b_minus), np.asarray(valid_mask, dtype=bool))

    def shifted(self, delta_plus: float) -> "DriftHistory":
        """Copy with a constant added to ``b_plus`` (fault injection)."""
        return DriftHistory.from_b(self.grid, self.tgrid, self.b_plus + delta_plus,
                                   self.b_minus, self.valid_mask)


def _kinetic_bands(grid: SpatialGrid, params: PhysicsParams, dt: float):
    """Banded left/right Crank-Nicolson matrices for the interior points."""
    x = grid.x[1:-1]
    V = params.potential(x)
    c = -params.hbar**2 / (2.0 * params.mass * grid.dx**2)
    a = 0.5j * dt / params.hbar
    m_off, m_diag = 1.0 / 12.0, 10.0 / 12.0
    n = x.size
    # rows of M*H: c*(1,-2,1) + (m_off V_{i-1}, m_diag V_i, m_off V_{i+1})
    diag_h = -2.0 * c + m_diag * V
    upper_h = c + m_off * V[1:]
    lower_h = c + m_off * V[:-1]
    lhs = np.zeros((3, n), dtype=complex)
    lhs[0, 1:] = m_off + a * upper_h
    lhs[1] = m_diag + a * diag_h
    lhs[2, :-1] = m_off + a * lower_h
    rhs = (m_diag - a * diag_h, m_off - a * upper_h, m_off - a * lower_h)
    return lhs, rhs


def propagate(psi0, params: PhysicsParams, grid: SpatialGrid,
              tgrid: TimeGrid) -> WavefunctionHistory:
    """Integrate the Schrodinger equation with homogeneous Dirichlet walls.

    Raises
    ------
    DomainTooSmallError
        If ``|psi|`` exceeds 1e-6 at either wall at any step.
    InstabilityError
        If the discrete norm drifts by more than 1e-6.
    """
    psi0 = np.asarray(getattr(psi0, "values", psi0), dtype=complex)
    if psi0.shape != (grid.n_points,):
        raise InvalidInputError("initial state does not match the grid")
    norm0 = float(integrate_array(np.abs(psi0) ** 2, grid.dx))
    if abs(norm0 - 1.0) > 1e-8:
        raise InvalidInputError(f"initial state not normalized (norm {norm0:.12f})")

    lhs, (r_diag, r_up, r_low) = _kinetic_bands(grid, params, tgrid.dt)
    out = np.empty((tgrid.n_nodes, grid.n_points), dtype=complex)
    out[0] = psi0
    out[1:, 0] = out[1:, -1] = 0.0
    p = psi0[1:-1].copy()
    edge = max(abs(psi0[0]), abs(psi0[-1]))
    for k in range(1, tgrid.n_nodes):
        rhs = r_diag * p
        rhs[:-1] += r_up * p[1:]
        rhs[1:] += r_low * p[:-1]
        p = solve_banded((1, 1), lhs, rhs, check_finite=False)
        out[k, 1:-1] = p
        edge = max(edge, abs(p[0]), abs(p[-1]))
        if edge > BOUNDARY_AMPLITUDE_LIMIT:
            raise DomainTooSmallError(
                f"|psi| = {edge:.2e} at the boundary at t = {tgrid.t[k]:.4f}")

    history = WavefunctionHistory(grid, tgrid, out, params)
    drift = float(np.max(np.abs(history.norms() - norm0)))
    if drift > NORM_DRIFT_LIMIT:
        raise InstabilityError(f"norm drift {drift:.2e}")
    log.debug("propagated %d steps, norm drift %.2e", tgrid.n_steps, drift)
    return history


def born_density(history: WavefunctionHistory) -> FieldHistory:
    """rho = |psi|^2 at every time node."""
    return FieldHistory(history.grid, history.tgrid, np.abs(history.psi) ** 2, "1/length")


def _unwrap_from_peak(phase: np.ndarray, valid: np.ndarray, peak: int) -> np.ndarray:
    idx = np.flatnonzero(valid)
    out = np.array(phase, dtype=float)
    if idx.size == 0:
        return out
    start = int(np.searchsorted(idx, peak))
    start = min(start, idx.size - 1)
    right = np.unwrap(phase[idx[start:]])
    left = np.unwrap(phase[idx[: start + 1]][::-1])[::-1]
    # both halves share the peak sample, so they agree there
    out[idx[start:]] = right
    out[idx[: start + 1]] = left
    return out


def _clamp_outside(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace entries left/right of the valid span by the nearest valid value."""
    out = values.copy()
    for k in range(values.shape[0]):
        idx = np.flatnonzero(mask[k])
        if idx.size == 0:
            continue
        out[k, : idx[0]] = values[k, idx[0]]
        out[k, idx[-1] + 1:] = values[k, idx[-1]]
    return out


def decompose(history: WavefunctionHistory,
              density_floor: float = DEFAULT_DENSITY_FLOOR) -> AmplitudePhase:
    """Split psi = exp(R + iS) with the phase unwrapped outward from the peak.

    Points with ``|psi|^2`` below ``density_floor`` are flagged invalid.
    Interior invalid points (nodes of psi) are reported as warnings.
    """
    rho = np.abs(history.psi) ** 2
    valid = rho >= density_floor
    R = 0.5 * np.log(np.maximum(rho, density_floor))
    phase = np.angle(history.psi)
    S = np.empty_like(R)
    warnings = []
    for k in range(rho.shape[0]):
        peak = int(np.argmax(rho[k]))
        S[k] = _unwrap_from_peak(phase[k], valid[k], peak)
        idx = np.flatnonzero(valid[k])
        if idx.size and idx[-1] - idx[0] + 1 != idx.size:
            gaps = idx[np.flatnonzero(np.diff(idx) > 1)]
            for g in gaps:
                warnings.append(
                    f"node crossing near x={history.grid.x[g]:.4f} "
                    f"at t={history.tgrid.t[k]:.4f}")
    S = _clamp_outside(S, valid)
    for w in warnings[:5]:
        log.warning(w)
    return AmplitudePhase(history.grid, history.tgrid, R, S, valid,
                          density_floor, tuple(warnings))


def extract_drifts(ap: AmplitudePhase, params: PhysicsParams) -> DriftHistory:
    """u = (hbar/m) dR/dx, v = (hbar/m) dS/dx, b_plus/minus = v +/- u."""
    scale = params.hbar / params.mass
    u = _clamp_outside(scale * gradient_array(ap.R, ap.grid.dx), ap.valid_mask)
    v = _clamp_outside(scale * gradient_array(ap.S, ap.grid.dx), ap.valid_mask)
    # v and u are re-derived from b_plus/b_minus so the half-sum identities are exact
    return DriftHistory.from_b(ap.grid, ap.tgrid, v + u, v - u, ap.valid_mask)

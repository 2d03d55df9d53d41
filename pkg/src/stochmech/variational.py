"""Lagrangians, actions, augmented functionals and their stationarity.

Three Lagrangian families are evaluated in both directions:

    Y:  m b^2/2 - phi
    G:  m b^2/2 +/- (hbar/2) db/dx - phi
    E:  m b^2/2 +/- (hbar/2) d(b_plus + b_minus)/dx - phi

with ``b`` the forward drift for the plus direction and the backward drift
for the minus direction. Actions are time integrals of grid expectations.
Stationarity is tested in weak form: the Euler-Lagrange residual of each
direction is paired with a family of deterministic perturbations that
vanish at both ends of the time interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .fields import (
    FieldHistory,
    InvalidInputError,
    PhysicsParams,
    TimeGrid,
    erode_mask,
    expectation_history,
    gradient_array,
    time_integrate,
)
from .info import entropy_report
from .sampler import PathEnsemble, path_chunks, path_values
from .schrodinger import DEFAULT_DENSITY_FLOOR, DriftHistory
from .verify import PotentialField, pde_residual, pde_residual_field, residual_mask

Family = Literal["Y", "G", "E"]
Direction = Literal["plus", "minus"]

WEAK_TOLERANCE = 5e-4
FAULT_FACTOR = 10.0
N_SINE_MODES = 8


@dataclass(frozen=True)
class LagrangianKind:
    family: Family
    direction: Direction

    def __post_init__(self):
        if self.family not in ("Y", "G", "E") or self.direction not in ("plus", "minus"):
            raise InvalidInputError(f"no Lagrangian {self.family}{self.direction}")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "plus" else -1.0

    @property
    def label(self) -> str:
        return f"{self.family}_{self.direction}"


ALL_KINDS = tuple(LagrangianKind(f, d) for f in ("Y", "G", "E") for d in ("plus", "minus"))


@dataclass(frozen=True, eq=False)
class PerturbationProcess:
    """Deterministic, spatially uniform perturbation z(t) on a time grid."""

    tgrid: TimeGrid
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.shape != (self.tgrid.n_nodes,) or not np.all(np.isfinite(z)):
            raise InvalidInputError("z must be finite with one value per time node")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def endpoint_zero(self) -> bool:
        return self.z[0] == 0.0 and self.z[-1] == 0.0

    @classmethod
    def sine(cls, tgrid: TimeGrid, k: int, amplitude: float = 1.0) -> "PerturbationProcess":
        """amplitude * sin(k pi (t - t_a) / (t_b - t_a)), pinned to 0 at both ends."""
        s = (tgrid.t - tgrid.t_start) / (tgrid.t_end - tgrid.t_start)
        z = amplitude * np.sin(k * np.pi * s)
        z[0] = z[-1] = 0.0
        return cls(tgrid, z)

    def rate(self) -> np.ndarray:
        """dz/dt; for deterministic z both mean derivatives reduce to it."""
        return np.gradient(self.z, self.tgrid.dt, edge_order=2)

    def norm(self) -> float:
        """sup over t of |z| + |D+ z| + |D- z|."""
        return float(np.max(np.abs(self.z) + 2.0 * np.abs(self.rate())))


def sine_family(tgrid: TimeGrid, n_modes: int = N_SINE_MODES) -> list[PerturbationProcess]:
    return [PerturbationProcess.sine(tgrid, k) for k in range(1, n_modes + 1)]


@dataclass(frozen=True)
class FunctionalValue:
    kind: LagrangianKind
    action: float
    entropy_term: float
    fisher_term: float
    total: float
    standard_error: float = 0.0


# ---------------------------------------------------------------------------
# Lagrangians and actions
# ---------------------------------------------------------------------------

def _rho_values(rho) -> np.ndarray:
    return rho.values if isinstance(rho, FieldHistory) else np.asarray(rho, dtype=float)


def _expectation_mask(rho: np.ndarray, floor: float = DEFAULT_DENSITY_FLOOR) -> np.ndarray:
    return erode_mask(rho >= floor, 2)


def lagrangian_field(kind: LagrangianKind, drifts: DriftHistory, rho,
                     potential: PotentialField, params: PhysicsParams) -> FieldHistory:
    """Pointwise Lagrangian density of one family and direction."""
    b = drifts.b_plus if kind.direction == "plus" else drifts.b_minus
    dx = drifts.grid.dx
    out = 0.5 * params.mass * b**2 - potential.phi.values
    if kind.family == "G":
        out = out + kind.sign * 0.5 * params.hbar * gradient_array(b, dx)
    elif kind.family == "E":
        out = out + kind.sign * 0.5 * params.hbar * gradient_array(
            drifts.b_plus + drifts.b_minus, dx)
    return FieldHistory(drifts.grid, drifts.tgrid, out, "energy")


def lagrangian_expectation(kind: LagrangianKind, drifts: DriftHistory, rho,
                           potential: PotentialField, params: PhysicsParams) -> np.ndarray:
    r = _rho_values(rho)
    L = lagrangian_field(kind, drifts, r, potential, params).values
    return expectation_history(L, r, drifts.grid.dx, _expectation_mask(r))


def action(kind: LagrangianKind, drifts: DriftHistory, rho, potential: PotentialField,
           params: PhysicsParams) -> FunctionalValue:
    """int E[L] dt by grid expectation and trapezoidal time quadrature."""
    value = time_integrate(lagrangian_expectation(kind, drifts, rho, potential, params),
                           drifts.tgrid)
    return FunctionalValue(kind, value, 0.0, 0.0, value, 0.0)


def ensemble_action(kind: LagrangianKind, ens: PathEnsemble, drifts: DriftHistory,
                    potential: PotentialField, params: PhysicsParams) -> tuple[float, float]:
    """Monte-Carlo action: mean over paths of the path time integral, with its standard error."""
    L = lagrangian_field(kind, drifts, None, potential, params)
    per_path = np.concatenate([
        np.trapezoid(path_values(ens, L, a, b), dx=ens.tgrid.dt, axis=1)
        for a, b in path_chunks(ens.n_paths)])
    return float(per_path.mean()), float(per_path.std(ddof=1) / np.sqrt(per_path.size))


def expectation_swap(ens: PathEnsemble, f) -> tuple[float, float]:
    """(time integral of slice means, mean of per-path time integrals) of f.

    The two orders agree up to summation round-off on any ensemble.
    """
    w = np.full(ens.tgrid.n_nodes, ens.tgrid.dt)
    w[0] = w[-1] = 0.5 * ens.tgrid.dt
    column_sums = np.zeros(ens.tgrid.n_nodes)
    per_path = []
    for a, b in path_chunks(ens.n_paths):
        vals = path_values(ens, f, a, b)
        column_sums += vals.sum(axis=0)
        per_path.append(vals @ w)
    slice_first = float(np.dot(column_sums / ens.n_paths, w))
    path_first = float(np.mean(np.concatenate(per_path)))
    return slice_first, path_first


def augmented_functional(kind: LagrangianKind, drifts: DriftHistory, rho,
                         potential: PotentialField, params: PhysicsParams) -> FunctionalValue:
    """Action combined with the information terms its family requires.

    Y: A - beta H;  G: A + alpha I - beta H;  E: A alone, where H is the
    path relative entropy in the direction of ``kind`` and I the matching
    Fisher information production.
    """
    base = action(kind, drifts, rho, potential, params).action
    if kind.family == "E":
        return FunctionalValue(kind, base, 0.0, 0.0, base, 0.0)
    rep = entropy_report(drifts, rho, params)
    plus = kind.direction == "plus"
    entropy = rep.H_plus_minus if plus else rep.H_minus_plus
    fisher = 0.0
    if kind.family == "G":
        fisher = rep.fisher_production_fwd if plus else rep.fisher_production_bwd
    total = base + params.alpha * fisher - params.beta * entropy
    return FunctionalValue(kind, base, entropy, fisher, total, 0.0)


# ---------------------------------------------------------------------------
# expectation identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IdentityCheck:
    name: str
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gap))


def expectation_identities(drifts: DriftHistory, rho, potential: PotentialField,
                           params: PhysicsParams) -> dict[str, IdentityCheck]:
    """Direct expectations of the six Lagrangians against their (v, u, phi) forms.

    Right-hand sides: E[L_Y +/- m v u] for Y, E[L_Y - m u^2] for G and
    E[L_Y] for E, with L_Y = m v^2/2 + m u^2/2 - phi. Also returned: the
    G_plus/G_minus equality and the integration-by-parts identity
    E[db_plus/dx] = -E[u b_plus]/nu.
    """
    r = _rho_values(rho)
    dx, m = drifts.grid.dx, params.mass
    mask = _expectation_mask(r)

    def E(f):
        return expectation_history(f, r, dx, mask)

    v, u = drifts.v, drifts.u
    phi = potential.phi.values
    L_Y = 0.5 * m * v**2 + 0.5 * m * u**2 - phi
    rhs = {
        "Y": lambda s: E(L_Y + s * m * v * u),
        "G": lambda s: E(L_Y - m * u * u),
        "E": lambda s: E(L_Y),
    }
    out = {}
    lhs_by_kind = {}
    for kind in ALL_KINDS:
        lhs = lagrangian_expectation(kind, drifts, r, potential, params)
        lhs_by_kind[kind.label] = lhs
        out[kind.label] = IdentityCheck(kind.label, lhs, rhs[kind.family](kind.sign))
    out["G_equal"] = IdentityCheck("G_equal", lhs_by_kind["G_plus"], lhs_by_kind["G_minus"])
    out["ibp"] = IdentityCheck("ibp", E(gradient_array(drifts.b_plus, dx)),
                               -E(u * drifts.b_plus) / params.nu)
    return out


# ---------------------------------------------------------------------------
# first variation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeakFormReport:
    direction: Direction
    pairings: np.ndarray  # first variation for each z
    z_norms: np.ndarray
    residual_norm: float
    tolerance: float

    @property
    def normalized(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.z_norms > 0, np.abs(self.pairings) / self.z_norms, 0.0)

    @property
    def max_normalized(self) -> float:
        return float(np.max(self.normalized)) if self.normalized.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_normalized <= self.tolerance

    @property
    def fault_detected(self) -> bool:
        return self.max_normalized > FAULT_FACTOR * self.tolerance


def first_variation_weak(direction: Direction, drifts: DriftHistory, rho,
                         potential: PotentialField, params: PhysicsParams,
                         z_family: list[PerturbationProcess] | None = None,
                         tolerance: float = WEAK_TOLERANCE) -> WeakFormReport:
    """Pair the Euler-Lagrange residual of one direction with each perturbation.

    The first variation is -int E[G z] dt where G is the forward (plus) or
    backward (minus) drift equation residual.
    """
    if direction not in ("plus", "minus"):
        raise InvalidInputError(f"unknown direction {direction!r}")
    if z_family is None:
        z_family = sine_family(drifts.tgrid)
    for z in z_family:
        if not z.endpoint_zero:
            raise InvalidInputError("perturbations must vanish at both ends")
        if z.tgrid != drifts.tgrid:
            raise InvalidInputError("perturbation lives on a different time grid")
    r = _rho_values(rho)
    eq = "fwd_pde" if direction == "plus" else "bwd_pde"
    G = pde_residual_field(eq, drifts, r, potential, params)
    mean_G = expectation_history(G, r, drifts.grid.dx, residual_mask(drifts.valid_mask))
    pairings = np.array([-time_integrate(mean_G * z.z, drifts.tgrid) for z in z_family])
    norms = np.array([z.norm() for z in z_family])
    res = pde_residual(eq, drifts, r, potential, params)
    return WeakFormReport(direction, pairings, norms, res.value, tolerance)


# ---------------------------------------------------------------------------
# discrete velocity perturbation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityPerturbationCheck:
    direction: Direction
    max_discrepancy: float
    roundoff_bound: float

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.roundoff_bound


def _velocity_discrepancies(ens: PathEnsemble, zs: list[PerturbationProcess]):
    """Per z: max |velocity change - dz/dt| over paths and steps, and max |x| + |x + z|."""
    for z in zs:
        if z.tgrid != ens.tgrid:
            raise InvalidInputError("perturbation lives on a different time grid")
    dt = ens.tgrid.dt
    Z = np.stack([z.z for z in zs])  # (n_z, n_nodes)
    dZ = np.diff(Z, axis=1) / dt
    x = ens.positions
    worst = np.zeros(len(zs))
    scale = np.zeros(len(zs))
    for k in range(ens.tgrid.n_steps):
        x0, x1 = x[:, k], x[:, k + 1]
        p0 = x0[None, :] + Z[:, k, None]
        p1 = x1[None, :] + Z[:, k + 1, None]
        change = ((p1 - p0) - (x1 - x0)[None, :]) / dt
        worst = np.maximum(worst, np.max(np.abs(change - dZ[:, k, None]), axis=1))
        scale = np.maximum(scale, np.max(np.abs(p1), axis=1) + np.max(np.abs(x1)))
    if ens.tgrid.n_steps:
        first = np.max(np.abs(x[:, 0][None, :] + Z[:, 0, None]), axis=1) + np.max(np.abs(x[:, 0]))
        scale = np.maximum(scale, first)
    return worst, scale


def appendix_c_identity(ens: PathEnsemble, z: PerturbationProcess,
                        direction: Direction = "plus") -> VelocityPerturbationCheck:
    """Velocity change of the perturbed paths against the difference of z.

    Forward velocities are (x_{k+1} - x_k)/dt, backward ones (x_k - x_{k-1})/dt;
    both change by exactly the matching difference of z. The only
    discrepancy is floating-point cancellation, bounded by a few ulps of the
    path magnitudes divided by dt.
    """
    return velocity_perturbation_checks(ens, [z], direction)[0]


def velocity_perturbation_checks(ens: PathEnsemble, zs: list[PerturbationProcess],
                                 direction: Direction = "plus") -> list[VelocityPerturbationCheck]:
    """:func:`appendix_c_identity` for a whole family in one sweep over the paths.

    Forward and backward differences use the same increments, so the
    direction only labels the result.
    """
    if direction not in ("plus", "minus"):
        raise InvalidInputError(f"unknown direction {direction!r}")
    worst, scale = _velocity_discrepancies(ens, zs)
    bound = 8.0 * np.finfo(float).eps * scale / ens.tgrid.dt
    return [VelocityPerturbationCheck(direction, float(w), float(bd))
            for w, bd in zip(worst, bound)]


def partial_integration_identity(ens: PathEnsemble, f, z: PerturbationProcess) -> tuple[float, float]:
    """Sum over steps of E[f D-z] + E[z D+f], with its standard error.

    D-z is the backward difference of z and D+f the forward difference of f
    along each path, so the per-path sum telescopes to z f at the end nodes,
    which vanishes for endpoint-zero z.
    """
    if z.tgrid != ens.tgrid:
        raise InvalidInputError("perturbation lives on a different time grid")
    dz = np.diff(z.z)  # z_k - z_{k-1} for k = 1..n
    per_path = []
    for a, b in path_chunks(ens.n_paths):
        vals = path_values(ens, f, a, b)
        df = np.diff(vals, axis=1)  # f_{k+1} - f_k for k = 0..n-1
        # the dt of each term cancels against the 1/dt of the difference quotient
        per_path.append(vals[:, 1:] @ dz + df[:, 1:] @ z.z[1:-1] + df[:, 0] * z.z[0])
    per_path = np.concatenate(per_path)
    return float(per_path.mean()), float(per_path.std(ddof=1) / np.sqrt(per_path.size))

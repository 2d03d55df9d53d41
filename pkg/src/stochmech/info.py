"""Entropies, path-space relative entropy and Fisher information.

Continuum quantities are evaluated on grid histories: the forward and
backward derivatives of ``ln rho`` are expanded as
``(d/dt + b_pm d/dx +/- nu d2/dx2) ln rho`` and averaged under ``rho``.
The discrete-chain routines enumerate every path tuple of a small Markov
chain and give exact values with no time-step limit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    FieldHistory,
    InvalidInputError,
    PhysicsParams,
    ScalarField,
    erode_mask,
    expectation_history,
    gradient_array,
    integrate_array,
    laplacian_array,
    time_derivative_array,
    time_integrate,
)
from .schrodinger import DEFAULT_DENSITY_FLOOR, DriftHistory

MAX_ENUMERATION = 10**6
STOCHASTIC_TOL = 1e-12


class DegenerateChainError(ValueError):
    """A marginal vanishes where a Bayes reversal needs to divide by it."""


@dataclass
class EntropyReport:
    """Headline entropy/information values with their additive breakdown.

    ``terms`` maps a headline name to ``(term, value, stderr)`` triples whose
    values add up to the headline.
    """

    H_a: float
    H_b: float
    H_plus_minus: float
    H_minus_plus: float
    fisher_production_fwd: float = float("nan")
    fisher_production_bwd: float = float("nan")
    terms: dict[str, list[tuple[str, float, float]]] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)
    mass_defect: float = 0.0

    def headline(self, name: str) -> float:
        return getattr(self, name)

    def breakdown_gap(self, name: str) -> float:
        """|headline - sum of its terms|."""
        total = math.fsum(v for _, v, _ in self.terms.get(name, []))
        return abs(self.headline(name) - total)

    def to_text(self, prefix: str = "entropy") -> str:
        lines = []
        for key in ("H_a", "H_b", "H_plus_minus", "H_minus_plus",
                    "fisher_production_fwd", "fisher_production_bwd", "mass_defect"):
            lines.append(f"{prefix}.{key} = {getattr(self, key)!r}")
        for head, rows in self.terms.items():
            for name, value, se in rows:
                lines.append(f"{prefix}.terms.{head}.{name}.value = {value!r}")
                lines.append(f"{prefix}.terms.{head}.{name}.stderr = {se!r}")
        for flag, state in self.flags.items():
            lines.append(f"{prefix}.flags.{flag} = {str(state).lower()}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# single-time quantities
# ---------------------------------------------------------------------------

def _entropy_values(rho: np.ndarray, dx: float, floor: float) -> np.ndarray:
    keep = rho >= floor
    integrand = np.where(keep, -rho * np.log(np.where(keep, rho, 1.0)), 0.0)
    return integrate_array(integrand, dx)


def differential_entropy(rho: ScalarField, density_floor: float = DEFAULT_DENSITY_FLOOR) -> float:
    """-int rho ln rho dx over the points with rho >= density_floor."""
    return float(_entropy_values(rho.values, rho.grid.dx, density_floor))


def _log_density(rho: np.ndarray, floor: float) -> np.ndarray:
    return np.log(np.maximum(rho, floor))


def _fisher_values(rho: np.ndarray, dx: float, floor: float) -> np.ndarray:
    mask = erode_mask(rho >= floor, 1)
    score = gradient_array(_log_density(rho, floor), dx)
    return expectation_history(score**2, rho, dx, mask)


def fisher_information(rho: ScalarField, density_floor: float = DEFAULT_DENSITY_FLOOR) -> float:
    """int rho (d ln rho/dx)^2 dx on the valid region."""
    return float(_fisher_values(rho.values, rho.grid.dx, density_floor))


def bohm_potential(rho: np.ndarray, dx: float, params: PhysicsParams,
                   floor: float = DEFAULT_DENSITY_FLOOR) -> np.ndarray:
    """Q = -hbar^2 (d2 sqrt(rho)/dx2) / (2 m sqrt(rho)); zero below the floor.

    Evaluated as -hbar^2/(2m) (R'' + R'^2) with R = ln(rho)/2, which is the
    same expression without dividing by a vanishing amplitude.
    """
    R = 0.5 * _log_density(rho, floor)
    q = -params.hbar**2 / (2.0 * params.mass) * (
        laplacian_array(R, dx) + gradient_array(R, dx) ** 2)
    return np.where(rho >= floor, q, 0.0)


def bohm_identity(rho: np.ndarray, dx: float, params: PhysicsParams,
                  floor: float = DEFAULT_DENSITY_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Return (E[Q], hbar^2 I / 8m) for one density or a history of them."""
    rho = np.asarray(rho, dtype=float)
    mask = erode_mask(rho >= floor, 2)
    q = bohm_potential(rho, dx, params, floor)
    eq = expectation_history(q, rho, dx, mask)
    fisher = _fisher_values(rho, dx, floor)
    return eq, params.hbar**2 * fisher / (8.0 * params.mass)


# ---------------------------------------------------------------------------
# history quantities
# ---------------------------------------------------------------------------

def _rho_values(rho) -> np.ndarray:
    return rho.values if isinstance(rho, FieldHistory) else np.asarray(rho, dtype=float)


def _expectation_mask(rho: np.ndarray, floor: float) -> np.ndarray:
    return erode_mask(rho >= floor, 2)


def _endpoint_entropies(rho: np.ndarray, dx: float, floor: float) -> tuple[float, float]:
    ent = _entropy_values(rho[[0, -1]], dx, floor)
    return float(ent[0]), float(ent[1])


def log_density_derivatives(drifts: DriftHistory, rho, params: PhysicsParams,
                            floor: float = DEFAULT_DENSITY_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Per-time expectations E[D+ ln rho] and E[D- ln rho]."""
    r = _rho_values(rho)
    dx, dt = drifts.grid.dx, drifts.tgrid.dt
    ln_rho = _log_density(r, floor)
    dt_ln = time_derivative_array(ln_rho, dt)
    grad = gradient_array(ln_rho, dx)
    lap = laplacian_array(ln_rho, dx)
    mask = _expectation_mask(r, floor)
    d_plus = dt_ln + drifts.b_plus * grad + params.nu * lap
    d_minus = dt_ln + drifts.b_minus * grad - params.nu * lap
    return (expectation_history(d_plus, r, dx, mask),
            expectation_history(d_minus, r, dx, mask))


def divergence_expectations(drifts: DriftHistory, rho,
                            floor: float = DEFAULT_DENSITY_FLOOR) -> dict[str, np.ndarray]:
    """Per-time E[d b_plus/dx], E[d b_minus/dx] and E[d(b_plus + b_minus)/dx]."""
    r = _rho_values(rho)
    dx = drifts.grid.dx
    mask = _expectation_mask(r, floor)
    div_p = gradient_array(drifts.b_plus, dx)
    div_m = gradient_array(drifts.b_minus, dx)
    return {
        "plus": expectation_history(div_p, r, dx, mask),
        "minus": expectation_history(div_m, r, dx, mask),
        "sum": expectation_history(div_p + div_m, r, dx, mask),
    }


def entropy_report(drifts: DriftHistory, rho, params: PhysicsParams,
                   floor: float = DEFAULT_DENSITY_FLOOR) -> EntropyReport:
    """Relative entropies (closed D-operator form) and Fisher productions."""
    r = _rho_values(rho)
    tgrid = drifts.tgrid
    H_a, H_b = _endpoint_entropies(r, drifts.grid.dx, floor)
    e_plus, e_minus = log_density_derivatives(drifts, r, params, floor)
    div = divergence_expectations(drifts, r, floor)
    int_dplus = time_integrate(e_plus, tgrid)
    int_dminus = time_integrate(e_minus, tgrid)
    int_div_p = time_integrate(div["plus"], tgrid)
    int_div_m = time_integrate(div["minus"], tgrid)
    terms = {
        "H_plus_minus": [("H_b", H_b, 0.0), ("minus_H_a", -H_a, 0.0),
                         ("int_E_Dplus_ln_rho", int_dplus, 0.0)],
        "H_minus_plus": [("H_a", H_a, 0.0), ("minus_H_b", -H_b, 0.0),
                         ("minus_int_E_Dminus_ln_rho", -int_dminus, 0.0)],
        "fisher_production_fwd": [("H_b", H_b, 0.0), ("minus_H_a", -H_a, 0.0),
                                  ("minus_int_E_div_b_plus", -int_div_p, 0.0)],
        "fisher_production_bwd": [("H_a", H_a, 0.0), ("minus_H_b", -H_b, 0.0),
                                  ("int_E_div_b_minus", int_div_m, 0.0)],
    }
    heads = {k: math.fsum(v for _, v, _ in rows) for k, rows in terms.items()}
    counted = integrate_array(np.where(r[[0, -1]] >= floor, r[[0, -1]], 0.0), drifts.grid.dx)
    return EntropyReport(H_a, H_b, heads["H_plus_minus"], heads["H_minus_plus"],
                         heads["fisher_production_fwd"], heads["fisher_production_bwd"],
                         terms, mass_defect=float(np.max(np.abs(1.0 - counted))))


def relative_entropy_theorem1(drifts: DriftHistory, rho, params: PhysicsParams,
                              tgrid=None, floor: float = DEFAULT_DENSITY_FLOOR) -> tuple[float, float]:
    """H(rho+ || rho-) and H(rho- || rho+) from the D-operator expression.

    H(+|-) = H_b - H_a + int E[D+ ln rho] dt
    H(-|+) = H_a - H_b - int E[D- ln rho] dt
    """
    rep = entropy_report(drifts, rho, params, floor)
    return rep.H_plus_minus, rep.H_minus_plus


def relative_entropy_corollary1(drifts: DriftHistory, rho, tgrid=None,
                                floor: float = DEFAULT_DENSITY_FLOOR) -> tuple[float, float]:
    """Same pair through the mean drift divergence, +/- 1/2 int E[d(b+ + b-)/dx] dt."""
    r = _rho_values(rho)
    H_a, H_b = _endpoint_entropies(r, drifts.grid.dx, floor)
    half = 0.5 * time_integrate(divergence_expectations(drifts, r, floor)["sum"], drifts.tgrid)
    return H_b - H_a - half, H_a - H_b + half


def fisher_production(drifts: DriftHistory, rho, params: PhysicsParams,
                      tgrid=None, floor: float = DEFAULT_DENSITY_FLOOR) -> tuple[float, float, float]:
    """(int nu I dt, forward form, backward form) of the Fisher information production."""
    r = _rho_values(rho)
    direct = time_integrate(params.nu * _fisher_values(r, drifts.grid.dx, floor), drifts.tgrid)
    rep = entropy_report(drifts, r, params, floor)
    return direct, rep.fisher_production_fwd, rep.fisher_production_bwd


# ---------------------------------------------------------------------------
# exact discrete chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteChain:
    """Finite-state Markov chain: initial law and one row-stochastic kernel per step.

    ``kernels[i][x, y]`` is p(x_{i+1} = y | x_i = x).
    """

    rho1: np.ndarray
    kernels: tuple[np.ndarray, ...]

    def __post_init__(self):
        rho1 = np.asarray(self.rho1, dtype=float)
        kernels = tuple(np.asarray(k, dtype=float) for k in self.kernels)
        n = rho1.size
        if rho1.ndim != 1 or np.any(rho1 < 0) or abs(rho1.sum() - 1.0) > STOCHASTIC_TOL:
            raise InvalidInputError("rho1 must be a probability vector")
        for k in kernels:
            if k.shape != (n, n) or np.any(k < 0):
                raise InvalidInputError("kernels must be non-negative n x n matrices")
            if np.any(np.abs(k.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
                raise InvalidInputError("kernel rows must sum to one")
        if not kernels:
            raise InvalidInputError("a chain needs at least one step")
        object.__setattr__(self, "rho1", rho1)
        object.__setattr__(self, "kernels", kernels)

    @property
    def n_states(self) -> int:
        return self.rho1.size

    @property
    def n_steps(self) -> int:
        return len(self.kernels)

    def marginals(self) -> list[np.ndarray]:
        out = [self.rho1]
        for k in self.kernels:
            out.append(out[-1] @ k)
        return out

    @classmethod
    def random(cls, rng: np.random.Generator, n_states: int, n_steps: int,
               concentration: float = 1.0) -> "DiscreteChain":
        """Dirichlet-distributed initial law and kernel rows."""
        alpha = np.full(n_states, concentration)
        rho1 = rng.dirichlet(alpha)
        kernels = tuple(rng.dirichlet(alpha, size=n_states) for _ in range(n_steps))
        return cls(rho1, kernels)


@dataclass(frozen=True, eq=False)
class PathMeasurePair:
    """Forward and backward path probabilities over every path tuple.

    Both tensors have one axis per time node, ``rho_plus[x1, ..., xn]``.
    """

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    marginals: tuple[np.ndarray, ...] = ()
    backward_kernels: tuple[np.ndarray, ...] = ()


def _pair_factor(mat: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis], shape[axis + 1] = mat.shape
    return mat.reshape(shape)


def _single_factor(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.size
    return vec.reshape(shape)


def bayes_reversal(chain: DiscreteChain) -> tuple[np.ndarray, ...]:
    """Backward kernels q_i[y, x] = p(x_i = x | x_{i+1} = y) = p_i[x, y] rho_i[x] / rho_{i+1}[y]."""
    marg = chain.marginals()
    out = []
    for i, k in enumerate(chain.kernels):
        nxt = marg[i + 1]
        if np.any(nxt <= 0.0):
            raise DegenerateChainError(f"marginal at node {i + 2} has a zero entry")
        out.append((k * marg[i][:, None]).T / nxt[:, None])
    return tuple(out)


def chain_path_measures(chain: DiscreteChain,
                        backward_kernels: tuple[np.ndarray, ...] | None = None) -> PathMeasurePair:
    """Enumerate the forward path law and the backward law.

    The backward law is rho_n(x_n) prod q_i(x_i | x_{i+1}); by default the
    q_i are the Bayes reversals of the forward kernels, but any row-stochastic
    backward kernels may be supplied.
    """
    ndim = chain.n_steps + 1
    if chain.n_states**ndim > MAX_ENUMERATION:
        raise InvalidInputError("too many path tuples to enumerate")
    marg = chain.marginals()
    q = bayes_reversal(chain) if backward_kernels is None else tuple(
        np.asarray(k, dtype=float) for k in backward_kernels)

    plus = _single_factor(chain.rho1, 0, ndim)
    for i, k in enumerate(chain.kernels):
        plus = plus * _pair_factor(k, i, ndim)
    minus = _single_factor(marg[-1], ndim - 1, ndim)
    for i, qi in enumerate(q):
        minus = minus * _pair_factor(qi.T, i, ndim)
    return PathMeasurePair(np.asarray(plus), np.asarray(minus), tuple(marg), q)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum p ln(p/q); +inf when q vanishes where p does not."""
    p = np.ravel(p)
    q = np.ravel(q)
    support = p > 0
    if np.any(q[support] <= 0):
        return float("inf")
    return math.fsum(p[support] * np.log(p[support] / q[support]))


def discrete_entropy(p: np.ndarray) -> float:
    p = np.ravel(p)
    p = p[p > 0]
    return -math.fsum(p * np.log(p))


def _xlogy_ratio(weight: np.ndarray, num: np.ndarray, den: np.ndarray) -> np.ndarray:
    ok = weight > 0
    safe_num = np.where(ok, num, 1.0)
    safe_den = np.where(ok, den, 1.0)
    with np.errstate(divide="ignore"):  # a zero denominator is an infinite divergence
        return np.where(ok, weight * np.log(safe_num / safe_den), 0.0)


def chain_relative_entropy(pair: PathMeasurePair, chain: DiscreteChain) -> EntropyReport:
    """Exact KL divergences of the pair plus their telescoped decomposition.

    ``T1 = H(x_n) - H(x_1)``; ``T2`` is reported twice: as the sum of
    expected log kernel ratios (valid for any backward kernels) and in the
    Bayes-substituted form sum_i E[ln rho_{i+1}(x_{i+1}) - ln rho_i(x_i)].
    The breakdown of ``H_plus_minus`` uses the kernel-ratio form.
    """
    marg = pair.marginals or tuple(chain.marginals())
    H_1, H_n = discrete_entropy(marg[0]), discrete_entropy(marg[-1])
    kl_pm = kl_divergence(pair.rho_plus, pair.rho_minus)
    kl_mp = kl_divergence(pair.rho_minus, pair.rho_plus)

    t1 = H_n - H_1
    t2_kernel = []
    t2_bayes = []
    for i, k in enumerate(chain.kernels):
        joint = marg[i][:, None] * k  # P(x_i = x, x_{i+1} = y) under rho_plus
        q = pair.backward_kernels[i] if pair.backward_kernels else bayes_reversal(chain)[i]
        t2_kernel.append(float(_xlogy_ratio(joint, k, q.T).sum()))
        ln_next = np.broadcast_to(marg[i + 1][None, :], joint.shape)
        ln_here = np.broadcast_to(marg[i][:, None], joint.shape)
        t2_bayes.append(float(_xlogy_ratio(joint, ln_next, ln_here).sum()))
    T2 = math.fsum(t2_kernel)
    T2_bayes = math.fsum(t2_bayes)
    rep = EntropyReport(
        H_a=H_1, H_b=H_n, H_plus_minus=kl_pm, H_minus_plus=kl_mp,
        terms={
            "H_plus_minus": [("T1", t1, 0.0), ("T2", T2, 0.0)],
            "T2_bayes_form": [("T2_bayes", T2_bayes, 0.0)],
        },
        flags={"infinite_plus_minus": math.isinf(kl_pm),
               "infinite_minus_plus": math.isinf(kl_mp)},
    )
    return rep


def enumerate_paths(n_states: int, n_nodes: int):
    """All path tuples in the same (C) order as the measure tensors."""
    return itertools.product(range(n_states), repeat=n_nodes)

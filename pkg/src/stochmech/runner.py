"""Run orchestration: solve, decompose, sample, check, write outputs.

Each check maps the lazily built run state to one report row
``(id, value, tolerance, pass)``. Most checks pass when the value is at most
the tolerance; checks with comparator ``min`` pass when it is at least the
tolerance. All numbers are written with ``repr`` and nothing depends on the
clock, so identical configurations give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from . import info, variational as var
from .config import RunConfig, config_items
from .fields import erode_mask, integrate_array
from .sampler import PathEnsemble, sample_backward, sample_forward, write_ensemble
from .scenarios import ANALYTIC_SCENARIOS, Scenario, analytic_fields, analytic_moments
from .schrodinger import born_density, decompose, extract_drifts, propagate
from .verify import (
    EQUATION_IDS,
    PotentialField,
    born_check,
    osmotic_residual,
    pde_residual,
    pde_residual_field,
    residual_mask,
)

log = logging.getLogger(__name__)

ROUNDOFF_FLOOR = 1e-8
CONVERGENCE_EQUATIONS = ("nelson1", "nelson2", "fwd_dyn", "bwd_dyn",
                         "fwd_pde", "bwd_pde", "fp_fwd", "fp_bwd")
FAULT_SHIFT = 0.1
N_CHAINS = 100
EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


@dataclass(frozen=True)
class CheckResult:
    id: str
    value: float
    tolerance: float
    passed: bool
    comparator: str = "max"


# ---------------------------------------------------------------------------
# run state
# ---------------------------------------------------------------------------

class RunState:
    """Lazily computed artifacts of one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.scenario = Scenario(cfg.scenario, cfg.params, cfg.grid, cfg.tgrid)

    def _stage(self, name, fn):
        try:
            return fn()
        except Exception as exc:  # surfaced to the CLI with the stage name
            raise StageError(name, exc) from exc

    @cached_property
    def history(self):
        sc = self.scenario
        return self._stage("solve", lambda: propagate(sc.psi0(), sc.params, sc.grid, sc.tgrid))

    @cached_property
    def rho(self):
        return born_density(self.history)

    @cached_property
    def clean_drifts(self):
        def build():
            ap = decompose(self.history, self.cfg.density_floor)
            return extract_drifts(ap, self.cfg.params)
        return self._stage("decompose", build)

    @cached_property
    def drifts(self):
        d = self.clean_drifts
        return d.shifted(self.cfg.drift_shift) if self.cfg.drift_shift else d

    @cached_property
    def potential(self):
        return PotentialField.from_params(self.cfg.params, self.cfg.grid)

    def _ensemble(self, direction) -> PathEnsemble:
        cfg = self.cfg
        if direction == "forward":
            return self._stage("sample", lambda: sample_forward(
                self.drifts, self.rho.at(0), cfg.params, cfg.sampler))
        return self._stage("sample", lambda: sample_backward(
            self.drifts, self.rho.at(-1), cfg.params, cfg.sampler))

    @cached_property
    def forward(self) -> PathEnsemble:
        return self._ensemble("forward")

    @cached_property
    def backward(self) -> PathEnsemble:
        return self._ensemble("backward")

    @cached_property
    def entropy(self) -> info.EntropyReport:
        return info.entropy_report(self.drifts, self.rho, self.cfg.params, self.cfg.density_floor)

    @cached_property
    def refined(self) -> "RunState":
        from dataclasses import replace
        cfg = replace(self.cfg, grid=self.cfg.grid.refined(), tgrid=self.cfg.tgrid.refined())
        return RunState(cfg)

    def residual(self, eq: str) -> float:
        return pde_residual(eq, self.drifts, self.rho, self.potential, self.cfg.params).value


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def _check_norm(s: RunState) -> float:
    norms = s.history.norms()
    return float(np.max(np.abs(norms - norms[0])))


def _check_stationary(s: RunState) -> float:
    r = s.rho.values
    return float(np.max(np.abs(r - r[0])))


def _moments(s: RunState):
    r, x, dx = s.rho.values, s.cfg.grid.x, s.cfg.grid.dx
    mean = integrate_array(r * x, dx)
    var_ = integrate_array(r * (x - mean[:, None]) ** 2, dx)
    return mean, var_


def _check_moments(s: RunState) -> float:
    mean, var_ = _moments(s)
    m_ref, v_ref = analytic_moments(s.cfg.scenario, s.cfg.params, s.cfg.tgrid.t)
    return float(max(np.max(np.abs(mean - m_ref)), np.max(np.abs(var_ - v_ref))))


def density_peak(rho: np.ndarray, x: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    """Peak location per time node from a parabola through ln(rho) at the top three points."""
    rho = np.atleast_2d(rho)
    k = np.clip(np.argmax(rho, axis=-1), 1, rho.shape[-1] - 2)
    rows = np.arange(rho.shape[0])
    lm, l0, lp = (np.log(np.maximum(rho[rows, k + d], floor)) for d in (-1, 0, 1))
    denom = lm - 2.0 * l0 + lp
    shift = np.where(denom != 0, 0.5 * (lm - lp) / np.where(denom != 0, denom, 1.0), 0.0)
    dx = x[1] - x[0]
    return x[k] + shift * dx


def _check_coherent_peak(s: RunState) -> float:
    w, x0 = s.cfg.params.potential_args
    peak = density_peak(s.rho.values, s.cfg.grid.x)
    return float(np.max(np.abs(peak - x0 * np.cos(w * s.cfg.tgrid.t))))


def _check_closed_form_fields(s: RunState) -> float:
    ref = analytic_fields(s.cfg.scenario, s.cfg.params, s.cfg.grid.x, s.cfg.tgrid.t)
    r = s.rho.values
    mask = erode_mask(s.drifts.valid_mask, 4)
    worst = 0.0
    for name in ("u", "v"):
        err = getattr(s.drifts, name) - ref[name]
        per_t = np.sqrt(integrate_array(np.where(mask, r * err**2, 0.0), s.cfg.grid.dx))
        worst = max(worst, float(np.max(per_t)))
    return worst


def _equation_check(eq: str) -> Callable[[RunState], float]:
    return lambda s: s.residual(eq)


def _check_osmotic(s: RunState) -> float:
    return osmotic_residual(s.drifts, s.rho, s.cfg.params, density_floor=s.cfg.density_floor).value


def _field_gap(s: RunState, combo: Callable[[dict], np.ndarray], **kw) -> float:
    fields = {eq: pde_residual_field(eq, s.drifts, s.rho, s.potential, s.cfg.params, **kw)
              for eq in ("fwd_pde", "bwd_pde", "combined_pde", "newton", "continuity")}
    gap = combo(fields)
    mask = residual_mask(s.drifts.valid_mask)
    return float(np.max(np.where(mask, np.abs(gap), 0.0)[1:-1]))


def _check_pde_sum(s: RunState) -> float:
    return _field_gap(s, lambda f: f["fwd_pde"] + f["bwd_pde"] - 2.0 * f["newton"])


def _check_pde_difference(s: RunState) -> float:
    return _field_gap(s, lambda f: f["fwd_pde"] - f["bwd_pde"] - f["combined_pde"])


def _check_fp_continuity(s: RunState) -> float:
    flux = pde_residual_field("fp_fwd", s.drifts, s.rho, s.potential, s.cfg.params,
                              fp_form="flux")
    cont = pde_residual_field("continuity", s.drifts, s.rho, s.potential, s.cfg.params)
    mask = residual_mask(s.drifts.valid_mask)
    return float(np.max(np.where(mask, np.abs(flux - cont), 0.0)[1:-1]))


def _check_convergence(s: RunState) -> float:
    """Smallest coarse/fine residual ratio over equations above the round-off floor."""
    ratios = []
    for eq in CONVERGENCE_EQUATIONS:
        coarse, fine = s.residual(eq), s.refined.residual(eq)
        if coarse <= ROUNDOFF_FLOOR:
            continue
        ratios.append(coarse / fine if fine > 0 else math.inf)
    return min(ratios) if ratios else math.inf


def _check_rel_entropy_agreement(s: RunState) -> float:
    rep = s.entropy
    c_plus, c_minus = info.relative_entropy_corollary1(s.drifts, s.rho, floor=s.cfg.density_floor)
    return max(abs(rep.H_plus_minus - c_plus), abs(rep.H_minus_plus - c_minus))


def _check_rel_entropy_zero(s: RunState) -> float:
    rep = s.entropy
    c_plus, c_minus = info.relative_entropy_corollary1(s.drifts, s.rho, floor=s.cfg.density_floor)
    return max(abs(rep.H_plus_minus), abs(rep.H_minus_plus), abs(c_plus), abs(c_minus))


def _check_rel_entropy_antisymmetry(s: RunState) -> float:
    return abs(s.entropy.H_plus_minus + s.entropy.H_minus_plus)


def _fisher_triple(s: RunState):
    return info.fisher_production(s.drifts, s.rho, s.cfg.params, floor=s.cfg.density_floor)


def _check_fisher_agreement(s: RunState) -> float:
    a, b, c = _fisher_triple(s)
    return max(abs(a - b), abs(a - c), abs(b - c))


def _check_fisher_ground(s: RunState) -> float:
    target = s.cfg.params.omega * (s.cfg.tgrid.t_end - s.cfg.tgrid.t_start)
    return max(abs(v - target) for v in _fisher_triple(s))


def _check_bohm(s: RunState) -> float:
    eq, rhs = info.bohm_identity(s.rho.values, s.cfg.grid.dx, s.cfg.params, s.cfg.density_floor)
    return float(np.max(np.abs(eq - rhs)))


def chain_oracle(seed: int, n_chains: int = N_CHAINS) -> float:
    """Worst violation over random chains of: Bayes KL = 0, KL = T1 + T2, KL >= 0."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_chains):
        n_states = int(rng.integers(2, 6))
        n_steps = int(rng.integers(1, 5))
        chain = info.DiscreteChain.random(rng, n_states, n_steps)
        pair = info.chain_path_measures(chain)
        rep = info.chain_relative_entropy(pair, chain)
        worst = max(worst, abs(rep.H_plus_minus), abs(rep.H_minus_plus),
                    rep.breakdown_gap("H_plus_minus"))
        # mismatched pair: backward kernels unrelated to the forward chain
        other = info.DiscreteChain.random(rng, n_states, n_steps)
        mis = info.chain_path_measures(chain, backward_kernels=other.kernels)
        mrep = info.chain_relative_entropy(mis, chain)
        for kl in (mrep.H_plus_minus, mrep.H_minus_plus):
            if math.isfinite(kl):
                worst = max(worst, -kl)
        if math.isfinite(mrep.H_plus_minus):
            worst = max(worst, mrep.breakdown_gap("H_plus_minus"))
    return worst


def _check_chain_oracle(s: RunState) -> float:
    return chain_oracle(s.cfg.sampler.seed)


def _identities(s: RunState):
    return var.expectation_identities(s.drifts, s.rho, s.potential, s.cfg.params)


def _check_lagrangian_identities(s: RunState) -> float:
    ids = _identities(s)
    return max(ids[k.label].max_gap for k in var.ALL_KINDS)


def _check_lagrangian_g_equal(s: RunState) -> float:
    return _identities(s)["G_equal"].max_gap


def _check_ibp(s: RunState) -> float:
    return _identities(s)["ibp"].max_gap


def functional_offsets(s: RunState) -> dict[str, float]:
    """Differences between the Fisher-augmented and entropy-only functionals."""
    vals = {k.label: var.augmented_functional(k, s.drifts, s.rho, s.potential, s.cfg.params)
            for k in var.ALL_KINDS}
    return {"plus": vals["G_plus"].total - vals["Y_plus"].total,
            "minus": vals["G_minus"].total - vals["Y_minus"].total}


def _check_functional_offset(s: RunState) -> float:
    """Gap to the stated offsets -(hbar/2)(H_b - H_a) (plus) and +(hbar/2)(H_b - H_a) (minus)."""
    off = functional_offsets(s)
    half = 0.5 * s.cfg.params.hbar * (s.entropy.H_b - s.entropy.H_a)
    return max(abs(off["plus"] + half), abs(off["minus"] - half))


def _check_weak_form(s: RunState) -> float:
    return max(var.first_variation_weak(d, s.drifts, s.rho, s.potential, s.cfg.params)
               .max_normalized for d in ("plus", "minus"))


def _check_fault_detection(s: RunState) -> float:
    bad = s.clean_drifts.shifted(FAULT_SHIFT)
    return max(var.first_variation_weak(d, bad, s.rho, s.potential, s.cfg.params)
               .max_normalized for d in ("plus", "minus"))


def _check_born_forward(s: RunState) -> float:
    return born_check(s.history, s.forward).value


def _check_born_backward(s: RunState) -> float:
    return born_check(s.history, s.backward).value


def _check_action_ensemble(s: RunState) -> float:
    """Largest |Monte-Carlo - quadrature| action gap, in standard errors, over the forward kinds."""
    worst = 0.0
    for family in ("Y", "G", "E"):
        kind = var.LagrangianKind(family, "plus")
        grid_value = var.action(kind, s.drifts, s.rho, s.potential, s.cfg.params).action
        mc, se = var.ensemble_action(kind, s.forward, s.drifts, s.potential, s.cfg.params)
        worst = max(worst, abs(mc - grid_value) / se if se > 0 else abs(mc - grid_value))
    return worst


def _check_expectation_swap(s: RunState) -> float:
    L = var.lagrangian_field(var.LagrangianKind("Y", "plus"), s.drifts, None,
                             s.potential, s.cfg.params)
    a, b = var.expectation_swap(s.forward, L)
    return abs(a - b)


def _check_drift_variation(s: RunState) -> float:
    checks = var.velocity_perturbation_checks(s.forward, var.sine_family(s.cfg.tgrid))
    return max(c.max_discrepancy / c.roundoff_bound for c in checks)


@dataclass(frozen=True)
class CheckSpec:
    fn: Callable[[RunState], float]
    tolerance: float
    comparator: str = "max"
    sampling: bool = False
    scenarios: tuple[str, ...] | None = ANALYTIC_SCENARIOS


_ALL = None
CHECKS: dict[str, CheckSpec] = {
    "norm": CheckSpec(_check_norm, 1e-6, scenarios=_ALL),
    "stationary_density": CheckSpec(_check_stationary, 1e-6, scenarios=("harmonic_ground",)),
    "moments": CheckSpec(_check_moments, 1e-4),
    "coherent_peak": CheckSpec(_check_coherent_peak, 1e-4, scenarios=("coherent",)),
    "closed_form_fields": CheckSpec(_check_closed_form_fields, 1e-5),
    "osmotic": CheckSpec(_check_osmotic, 1e-4),
    **{eq: CheckSpec(_equation_check(eq), 5e-4) for eq in EQUATION_IDS},
    "pde_sum_identity": CheckSpec(_check_pde_sum, 1e-12),
    "pde_difference_identity": CheckSpec(_check_pde_difference, 1e-12),
    "fp_continuity_identity": CheckSpec(_check_fp_continuity, 1e-12),
    "convergence": CheckSpec(_check_convergence, 3.0, comparator="min"),
    "rel_entropy_agreement": CheckSpec(_check_rel_entropy_agreement, 2e-4, scenarios=_ALL),
    "rel_entropy_zero": CheckSpec(_check_rel_entropy_zero, 5e-4, scenarios=_ALL),
    "rel_entropy_antisymmetry": CheckSpec(_check_rel_entropy_antisymmetry, 2e-4, scenarios=_ALL),
    "fisher_agreement": CheckSpec(_check_fisher_agreement, 5e-4, scenarios=_ALL),
    "fisher_ground_value": CheckSpec(_check_fisher_ground, 1e-4, scenarios=("harmonic_ground",)),
    "bohm": CheckSpec(_check_bohm, 1e-4),
    "chain_oracle": CheckSpec(_check_chain_oracle, 1e-12, sampling=True, scenarios=_ALL),
    "lagrangian_identities": CheckSpec(_check_lagrangian_identities, 1e-4),
    "lagrangian_g_equal": CheckSpec(_check_lagrangian_g_equal, 1e-6),
    "ibp": CheckSpec(_check_ibp, 1e-5),
    "functional_offset": CheckSpec(_check_functional_offset, 5e-4),
    "weak_form": CheckSpec(_check_weak_form, 5e-4),
    "fault_detection": CheckSpec(_check_fault_detection, var.FAULT_FACTOR * var.WEAK_TOLERANCE,
                                 comparator="min"),
    "born_forward": CheckSpec(_check_born_forward, 0.02, sampling=True, scenarios=_ALL),
    "born_backward": CheckSpec(_check_born_backward, 0.03, sampling=True, scenarios=_ALL),
    "action_ensemble": CheckSpec(_check_action_ensemble, 3.0, sampling=True, scenarios=_ALL),
    "expectation_swap": CheckSpec(_check_expectation_swap, 1e-12, sampling=True, scenarios=_ALL),
    "drift_variation": CheckSpec(_check_drift_variation, 1.0, sampling=True, scenarios=_ALL),
}
SAMPLING_CHECKS = frozenset(k for k, v in CHECKS.items() if v.sampling)

# per-scenario tolerances that differ from the defaults above
SCENARIO_TOLERANCES = {
    ("harmonic_ground", "osmotic"): 2e-6,
}

DOUBLE_WELL_CHECKS = ("norm", "rel_entropy_agreement", "rel_entropy_zero",
                      "rel_entropy_antisymmetry", "fisher_agreement", "chain_oracle",
                      "born_forward", "born_backward", "expectation_swap", "drift_variation")


def default_checks(scenario: str) -> tuple[str, ...]:
    if scenario == "double_well":
        return DOUBLE_WELL_CHECKS
    return tuple(k for k, spec in CHECKS.items()
                 if spec.scenarios is None or scenario in spec.scenarios)


def tolerance_for(cfg: RunConfig, check: str) -> float:
    overrides = cfg.tolerance_overrides()
    if check in overrides:
        return overrides[check]
    return SCENARIO_TOLERANCES.get((cfg.scenario, check), CHECKS[check].tolerance)


def run_checks(state: RunState) -> list[CheckResult]:
    out = []
    for cid in state.cfg.checks:
        spec = CHECKS[cid]
        if spec.scenarios is not None and state.cfg.scenario not in spec.scenarios:
            raise StageError("verify", ValueError(
                f"check {cid!r} needs one of the scenarios {spec.scenarios}"))
        try:
            value = float(spec.fn(state))
        except StageError:
            raise
        except Exception as exc:
            raise StageError(f"verify:{cid}", exc) from exc
        tol = tolerance_for(state.cfg, cid)
        passed = value <= tol if spec.comparator == "max" else value >= tol
        out.append(CheckResult(cid, value, tol, bool(passed), spec.comparator))
        log.info("%s = %r (tolerance %r) %s", cid, value, tol, "pass" if passed else "FAIL")
    return out


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def format_report(cfg: RunConfig, results: list[CheckResult], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "value", "tolerance", "pass"])
        for r in results:
            w.writerow([r.id, repr(r.value), repr(r.tolerance), "true" if r.passed else "false"])
        return buf.getvalue()
    lines = ["# run report"]
    lines += [f"config.{k} = {v}" for k, v in config_items(cfg, runtime=False)]
    for r in results:
        lines += [f"check.{r.id}.value = {r.value!r}",
                  f"check.{r.id}.tolerance = {r.tolerance!r}",
                  f"check.{r.id}.comparator = {r.comparator}",
                  f"check.{r.id}.pass = {'true' if r.passed else 'false'}"]
    failed = [r.id for r in results if not r.passed]
    lines += [f"summary.checks = {len(results)}", f"summary.failed = {len(failed)}",
              f"summary.failed_ids = {', '.join(failed)}"]
    return "\n".join(lines) + "\n"


def _stride_nodes(n_nodes: int, stride: int) -> list[int]:
    nodes = list(range(0, n_nodes, stride))
    if nodes[-1] != n_nodes - 1:
        nodes.append(n_nodes - 1)
    return nodes


def write_field_dump(state: RunState, path: Path) -> None:
    """CSV with columns x, t, rho, u, v, b_plus, b_minus on every stride-th node."""
    d, x, t = state.drifts, state.cfg.grid.x, state.cfg.tgrid.t
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t", "rho", "u", "v", "b_plus", "b_minus"])
        for k in _stride_nodes(len(t), state.cfg.output.field_stride):
            for i in range(x.size):
                w.writerow([repr(float(x[i])), repr(float(t[k])), repr(float(state.rho.values[k, i])),
                            repr(float(d.u[k, i])), repr(float(d.v[k, i])),
                            repr(float(d.b_plus[k, i])), repr(float(d.b_minus[k, i]))])


PlotRow = tuple[str, float | None, float | None, float, float | None]


def density_rows(state: RunState, nodes: list[int] | None = None) -> list[PlotRow]:
    x, t = state.cfg.grid.x, state.cfg.tgrid.t
    nodes = range(len(t)) if nodes is None else nodes
    return [("rho", float(x[i]), float(t[k]), float(state.rho.values[k, i]), None)
            for k in nodes for i in range(x.size)]


def entropy_rows(rep: info.EntropyReport) -> list[PlotRow]:
    return [(f"entropy.{head}.{name}", None, None, float(value), float(se))
            for head, rows in rep.terms.items() for name, value, se in rows]


def series_rows(quantity: str, t, values, stderr=None) -> list[PlotRow]:
    stderr = [None] * len(values) if stderr is None else stderr
    return [(quantity, None, float(tk), float(v), None if s is None else float(s))
            for tk, v, s in zip(t, values, stderr)]


def emit_plot_data(rows: list[PlotRow], path: Path) -> None:
    """Long-format CSV: quantity, x, t, value, stderr (empty where not applicable)."""
    def cell(v):
        return "" if v is None else repr(v)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "x", "t", "value", "stderr"])
        for q, x, t, v, se in rows:
            w.writerow([q, cell(x), cell(t), cell(v), cell(se)])


def _plot_rows(state: RunState, results: list[CheckResult]) -> list[PlotRow]:
    nodes = _stride_nodes(state.cfg.tgrid.n_nodes, state.cfg.output.field_stride)
    rows = density_rows(state, nodes) + entropy_rows(state.entropy)
    ids = {r.id for r in results}
    for name, ens_attr in (("born_forward", "forward"), ("born_backward", "backward")):
        if name in ids:
            rep = born_check(state.history, getattr(state, ens_attr), t_indices=nodes)
            rows += series_rows(f"ks_{ens_attr}", rep.t, rep.per_time)
    return rows


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    results: list[CheckResult]
    files: list[Path]

    @property
    def exit_status(self) -> int:
        return EXIT_OK if all(r.passed for r in self.results) else EXIT_FAILED


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def solve(cfg: RunConfig) -> RunOutcome:
    state = RunState(cfg)
    out = _out_dir(cfg)
    files = []
    if cfg.output.dump_fields:
        files.append(out / "fields.csv")
        write_field_dump(state, files[-1])
    else:
        state.drifts  # still run every solver stage
    return RunOutcome([], files)


def sample(cfg: RunConfig) -> RunOutcome:
    if cfg.sampler is None:
        raise StageError("sample", ValueError("sampling needs a seed"))
    state = RunState(cfg)
    out = _out_dir(cfg)
    files = []
    for direction in ("forward", "backward"):
        files += write_ensemble(getattr(state, direction), out / f"ensemble_{direction}",
                                cfg.scenario)
    return RunOutcome([], files)


def run(cfg: RunConfig, plot_data: bool | None = None) -> RunOutcome:
    """Full pipeline: every stage, the configured checks and the requested files."""
    state = RunState(cfg)
    out = _out_dir(cfg)
    results = run_checks(state)
    files = []
    ext = "csv" if cfg.output.format == "csv" else "txt"
    report = out / f"report.{ext}"
    report.write_text(format_report(cfg, results, cfg.output.format), encoding="utf-8")
    files.append(report)
    if cfg.output.dump_fields:
        files.append(out / "fields.csv")
        write_field_dump(state, files[-1])
    if cfg.output.dump_ensembles and cfg.sampler is not None:
        for direction in ("forward", "backward"):
            files += write_ensemble(getattr(state, direction), out / f"ensemble_{direction}",
                                    cfg.scenario)
    if cfg.output.plot_data if plot_data is None else plot_data:
        files.append(out / "plot_data.csv")
        emit_plot_data(_plot_rows(state, results), files[-1])
        files.append(out / "entropy.txt")
        files[-1].write_text(state.entropy.to_text(), encoding="utf-8")
    return RunOutcome(results, files)

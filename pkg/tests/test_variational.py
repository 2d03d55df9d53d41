import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmech import info
from stochmech.fields import InvalidInputError, TimeGrid, gradient_array
from stochmech.sampler import SamplerConfig, sample_backward, sample_forward
from stochmech.variational import (
    ALL_KINDS,
    LagrangianKind,
    PerturbationProcess,
    action,
    appendix_c_identity,
    augmented_functional,
    ensemble_action,
    expectation_identities,
    expectation_swap,
    first_variation_weak,
    lagrangian_expectation,
    lagrangian_field,
    partial_integration_identity,
    sine_family,
    velocity_perturbation_checks,
)
from tests.conftest import solved


def args(s):
    return s.drifts, s.rho, s.potential, s.params


# Lagrangian fields

def test_ground_state_lagrangian_values(ground):
    y = lagrangian_expectation(LagrangianKind("Y", "plus"), *args(ground))
    g = lagrangian_expectation(LagrangianKind("G", "plus"), *args(ground))
    # b_plus = v + u = -x, so m b^2/2 equals phi and Y vanishes; db/dx = -1
    assert np.max(np.abs(y)) <= 1e-6
    assert np.max(np.abs(g + 0.5)) <= 1e-6


def test_e_family_difference(coherent):
    ep = lagrangian_field(LagrangianKind("E", "plus"), *args(coherent)).values
    em = lagrangian_field(LagrangianKind("E", "minus"), *args(coherent)).values
    d = coherent.drifts
    expected = 0.5 * d.b_plus**2 - 0.5 * d.b_minus**2 + coherent.params.hbar * gradient_array(
        d.b_plus + d.b_minus, coherent.grid.dx)
    assert np.max(np.abs(ep - em - expected)) <= 1e-12


def test_unknown_kind_rejected():
    with pytest.raises(InvalidInputError):
        LagrangianKind("Q", "plus")
    with pytest.raises(InvalidInputError):
        LagrangianKind("Y", "sideways")


def test_ground_state_actions(ground):
    assert abs(action(LagrangianKind("Y", "plus"), *args(ground)).action) <= 1e-6
    g = action(LagrangianKind("G", "plus"), *args(ground)).action
    assert g == pytest.approx(-0.5 * ground.tgrid.t_end, abs=1e-6)


# expectation identities

@pytest.mark.parametrize("name", ["ground", "coherent", "free"])
def test_y_g_identities_and_g_equality(name, request):
    checks = expectation_identities(*args(request.getfixturevalue(name)))
    for label in ("Y_plus", "Y_minus", "G_plus", "G_minus"):
        assert checks[label].max_gap <= 1e-4
    assert checks["G_equal"].max_gap <= 1e-6
    assert checks["ibp"].max_gap <= 1e-5


@pytest.mark.parametrize("name", ["ground", "coherent"])
def test_e_identities_where_mean_vu_vanishes(name, request):
    checks = expectation_identities(*args(request.getfixturevalue(name)))
    assert checks["E_plus"].max_gap <= 1e-4 and checks["E_minus"].max_gap <= 1e-4


def test_e_identity_gap_on_spreading_packet(free):
    # E[L_E +/-] = E[L_Y -/+ m v u]; on the spreading packet E[v u] = -t/(2(1+t^2))
    checks = expectation_identities(*args(free))
    t = free.tgrid.t
    vu = -t / (2 * (1 + t**2))
    assert np.max(np.abs(checks["E_plus"].lhs - checks["E_plus"].rhs + vu)) <= 1e-5
    assert checks["E_plus"].max_gap == pytest.approx(0.25, abs=1e-5)


def test_ground_expectations_of_g(ground):
    checks = expectation_identities(*args(ground))
    assert np.max(np.abs(checks["G_plus"].lhs + 0.5)) <= 1e-6


# augmented functionals

@pytest.mark.parametrize("name", ["ground", "free"])
def test_functional_bookkeeping(name, request):
    s = request.getfixturevalue(name)
    a, b = s.params.alpha, s.params.beta
    for kind in ALL_KINDS:
        fv = augmented_functional(kind, *args(s))
        fisher = a * fv.fisher_term if kind.family == "G" else 0.0
        entropy = b * fv.entropy_term if kind.family != "E" else 0.0
        assert abs(fv.total - (fv.action + fisher - entropy)) <= 1e-12


def test_ground_functional_equals_action(ground):
    for family in ("Y", "G"):
        fv = augmented_functional(LagrangianKind(family, "plus"), *args(ground))
        assert abs(fv.entropy_term) <= 1e-6
    j = augmented_functional(LagrangianKind("Y", "plus"), *args(ground))
    assert abs(j.total - j.action) <= 1e-6


def test_free_packet_offset_is_half_hbar_entropy_change(free):
    hb_minus_ha = 0.5 * np.log(2.0)
    for d, sign in (("plus", 1.0), ("minus", -1.0)):
        jy = augmented_functional(LagrangianKind("Y", d), *args(free)).total
        jg = augmented_functional(LagrangianKind("G", d), *args(free)).total
        assert jg - jy == pytest.approx(sign * 0.5 * free.params.hbar * hb_minus_ha, abs=1e-6)


# weak-form stationarity

@pytest.mark.parametrize("direction", ["plus", "minus"])
@pytest.mark.parametrize("name", ["ground", "coherent", "free"])
def test_weak_form_stationarity(name, direction, request):
    rep = first_variation_weak(direction, *args(request.getfixturevalue(name)))
    assert rep.pairings.size == 8 and rep.passed


def test_zero_perturbation_pairs_to_zero(coherent):
    z = PerturbationProcess(coherent.tgrid, np.zeros(coherent.tgrid.n_nodes))
    rep = first_variation_weak("plus", *args(coherent), z_family=[z])
    assert rep.pairings[0] == 0.0 and rep.max_normalized == 0.0


def test_nonzero_endpoint_rejected(coherent):
    z = PerturbationProcess(coherent.tgrid, np.ones(coherent.tgrid.n_nodes))
    with pytest.raises(InvalidInputError):
        first_variation_weak("plus", *args(coherent), z_family=[z])


def test_unknown_direction_rejected(coherent):
    with pytest.raises(InvalidInputError):
        first_variation_weak("up", *args(coherent))


def test_corrupted_drift_grows_linearly(ground):
    values = []
    for shift in (0.05, 0.1, 0.2):
        bad = ground.drifts.shifted(shift)
        values.append(first_variation_weak("plus", bad, ground.rho, ground.potential,
                                           ground.params).max_normalized)
    assert values[1] / values[0] == pytest.approx(2.0, rel=0.05)
    assert values[2] / values[1] == pytest.approx(2.0, rel=0.05)
    assert values[1] > 10 * 5e-4


def test_sine_family_profile():
    tg = TimeGrid(0.0, 2.0, 200)
    fam = sine_family(tg)
    assert len(fam) == 8 and all(z.endpoint_zero for z in fam)
    # sup of sin(s) + pi cos(s)
    assert fam[0].norm() == pytest.approx(np.hypot(1.0, np.pi), rel=1e-4)


# sampled estimators

@pytest.fixture(scope="module")
def ground_paths():
    s = solved("harmonic_ground")
    cfg = SamplerConfig(20_000, seed=5)
    return (sample_forward(s.drifts, s.rho.at(0), s.params, cfg),
            sample_backward(s.drifts, s.rho.at(s.tgrid.n_steps), s.params, cfg))


def test_ensemble_action_matches_grid_action(ground, ground_paths):
    fwd, _ = ground_paths
    for family in ("Y", "G", "E"):
        kind = LagrangianKind(family, "plus")
        mean, se = ensemble_action(kind, fwd, ground.drifts, ground.potential, ground.params)
        grid = action(kind, *args(ground)).action
        assert abs(mean - grid) <= max(3 * se, 1e-9)


def test_expectation_swap(ground_paths):
    a, b = expectation_swap(ground_paths[0], lambda x, t: np.cos(x) + t * x**3)
    assert abs(a - b) <= 1e-12


def test_partial_integration_telescopes(ground_paths):
    z = sine_family(ground_paths[0].tgrid)[2]
    mean, se = partial_integration_identity(ground_paths[0], lambda x, t: np.sin(x) + t, z)
    assert abs(mean) <= max(3 * se, 1e-12)


@pytest.mark.parametrize("which", [0, 1])
def test_velocity_perturbation_identity(ground_paths, which):
    ens = ground_paths[which]
    direction = "plus" if which == 0 else "minus"
    for chk in velocity_perturbation_checks(ens, sine_family(ens.tgrid), direction):
        assert chk.direction == direction and chk.passed


def test_single_perturbation_matches_family(ground_paths):
    z = sine_family(ground_paths[0].tgrid)[4]
    single = appendix_c_identity(ground_paths[0], z)
    batch = velocity_perturbation_checks(ground_paths[0], [z])[0]
    assert single == batch


@settings(max_examples=25, deadline=None)
@given(eps=st.sampled_from([0.5, 0.25, 2.0, 4.0, 0.125]), k=st.integers(1, 8))
def test_velocity_change_scales_with_perturbation(ground_paths, eps, k):
    # power-of-two scaling keeps the product exact, so the ratio is exact too
    ens = ground_paths[0]
    x = ens.positions[:200]
    z = sine_family(ens.tgrid)[k - 1].z
    dt = ens.tgrid.dt
    base = (np.diff(x + z, axis=1) - np.diff(x, axis=1)) / dt
    scaled = (np.diff(x + eps * z, axis=1) - np.diff(x, axis=1)) / dt
    exact_z = np.diff(z) / dt
    tol = 8 * np.finfo(float).eps * (np.max(np.abs(x)) + 1 + eps) / dt
    assert np.max(np.abs(base - exact_z)) <= tol
    assert np.max(np.abs(scaled - eps * exact_z)) <= tol


def test_perturbation_validation():
    tg = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(InvalidInputError):
        PerturbationProcess(tg, np.zeros(5))
    with pytest.raises(InvalidInputError):
        PerturbationProcess(tg, np.full(11, np.nan))

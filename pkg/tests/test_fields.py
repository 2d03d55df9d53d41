import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochmech.fields import (
    InvalidInputError,
    PhysicsParams,
    ScalarField,
    SpatialGrid,
    TimeGrid,
    erode_mask,
    expectation,
    fd_operator,
    integrate,
    time_integrate,
)


def field(grid, f):
    return ScalarField.from_function(grid, f)


def gauss(x):
    return np.exp(-x**2) / np.sqrt(np.pi)


# grids and parameters

def test_grid_rejects_too_few_points():
    with pytest.raises(InvalidInputError):
        SpatialGrid(-1.0, 1.0, 7)


def test_grid_rejects_reversed_bounds():
    with pytest.raises(InvalidInputError):
        SpatialGrid(1.0, -1.0, 16)


def test_grid_points_strictly_increasing():
    g = SpatialGrid(-3.0, 5.0, 17)
    assert g.dx == pytest.approx(0.5)
    assert np.all(np.diff(g.x) > 0)


def test_refined_grid_halves_spacing():
    g = SpatialGrid(-8.0, 8.0, 513)
    assert g.refined().dx == pytest.approx(g.dx / 2)
    t = TimeGrid.from_dt(0.0, 1.0, 1e-3)
    assert t.n_steps == 1000
    assert t.refined().dt == pytest.approx(t.dt / 2)


def test_time_grid_validation():
    with pytest.raises(InvalidInputError):
        TimeGrid(1.0, 0.0, 10)
    with pytest.raises(InvalidInputError):
        TimeGrid(0.0, 1.0, 0)


def test_physics_params_derived_constants():
    p = PhysicsParams(2.0, 3.0, "harmonic", (1.5,))
    assert p.nu == 3.0 / 4.0
    assert p.beta == 3.0
    assert p.alpha == 1.5
    assert p.omega == 1.5


@pytest.mark.parametrize("mass,hbar", [(0.0, 1.0), (1.0, -1.0)])
def test_physics_params_reject_nonpositive(mass, hbar):
    with pytest.raises(InvalidInputError):
        PhysicsParams(mass, hbar, "free", ())


def test_unknown_potential_rejected():
    with pytest.raises(InvalidInputError):
        PhysicsParams(1.0, 1.0, "cubic", ())


def test_potentials():
    x = np.linspace(-2, 2, 9)
    assert np.allclose(PhysicsParams(1.0, 1.0, "free", ()).potential(x), 0.0)
    assert np.allclose(PhysicsParams(1.0, 1.0, "harmonic", (2.0,)).potential(x), 2.0 * x**2)
    dw = PhysicsParams(1.0, 1.0, "double_well", (0.25, 1.5)).potential(x)
    assert np.allclose(dw, 0.25 * (x**2 - 2.25) ** 2)


def test_field_rejects_nonfinite_and_wrong_length():
    g = SpatialGrid(0.0, 1.0, 8)
    with pytest.raises(InvalidInputError):
        ScalarField(g, np.full(8, np.nan))
    with pytest.raises(InvalidInputError):
        ScalarField(g, np.zeros(9))


# finite differences

def test_gradient_exact_for_quadratic():
    g = SpatialGrid(-1.0, 1.0, 33)
    d = fd_operator("gradient", field(g, lambda x: x**2))
    assert np.max(np.abs(d.values - 2 * g.x)) < 1e-12


def test_laplacian_of_constant_is_zero():
    g = SpatialGrid(-1.0, 1.0, 33)
    assert np.all(fd_operator("laplacian", field(g, lambda x: 3.0 + 0 * x)).values == 0.0)


def test_divergence_equals_gradient():
    g = SpatialGrid(-1.0, 1.0, 33)
    f = field(g, np.sin)
    assert np.array_equal(fd_operator("divergence", f).values, fd_operator("gradient", f).values)


def test_unknown_operator_rejected():
    g = SpatialGrid(-1.0, 1.0, 33)
    with pytest.raises(InvalidInputError):
        fd_operator("curl", field(g, np.sin))


def _error(kind, n):
    g = SpatialGrid(-np.pi, np.pi, n)
    exact = np.cos(g.x) if kind == "gradient" else -np.sin(g.x)
    return np.max(np.abs(fd_operator(kind, field(g, np.sin)).values - exact))


@pytest.mark.parametrize("kind", ["gradient", "laplacian"])
def test_second_order_convergence(kind):
    ratio = _error(kind, 257) / _error(kind, 513)
    assert 4 * 0.8 <= ratio <= 4 * 1.2


def test_gradient_of_even_field_is_odd():
    g = SpatialGrid(-4.0, 4.0, 129)
    d = fd_operator("gradient", field(g, lambda x: np.exp(-x**2) * np.cos(x))).values
    assert np.max(np.abs(d + d[::-1])) < 1e-12


def test_discrete_integration_by_parts():
    errs = []
    for n in (129, 257):
        g = SpatialGrid(-8.0, 8.0, n)
        rho, f = gauss(g.x - 0.3), np.cos(g.x) + 0.5 * g.x
        lhs = integrate(ScalarField(g, rho * fd_operator("gradient", ScalarField(g, f)).values))
        rhs = integrate(ScalarField(g, f * fd_operator("gradient", ScalarField(g, rho)).values))
        errs.append(abs(lhs + rhs - (rho[-1] * f[-1] - rho[0] * f[0])) / g.dx**2)
    assert max(errs) < 1.0


# quadrature and expectations

def test_integrate_constant_and_linear():
    g = SpatialGrid(0.0, 1.0, 11)
    assert integrate(field(g, lambda x: 1.0 + 0 * x)) == pytest.approx(1.0, abs=1e-15)
    assert integrate(field(g, lambda x: x)) == pytest.approx(0.5, abs=1e-15)


def test_gaussian_normalization():
    g = SpatialGrid(-8.0, 8.0, 513)
    assert abs(integrate(field(g, gauss)) - 1.0) < 1e-10


def test_expectations_of_gaussian():
    g = SpatialGrid(-8.0, 8.0, 513)
    rho = field(g, gauss)
    assert abs(expectation(field(g, lambda x: x), rho)) < 1e-10
    assert abs(expectation(field(g, lambda x: x**2), rho) - 0.5) < 1e-8
    assert abs(expectation(field(g, lambda x: 1.0 + 0 * x), rho) - 1.0) < 1e-6


def test_expectation_reports_mass_defect():
    g = SpatialGrid(-8.0, 8.0, 513)
    with pytest.raises(InvalidInputError, match="mass defect"):
        expectation(field(g, lambda x: x), field(g, lambda x: 2 * gauss(x)))


def test_expectation_rejects_grid_mismatch():
    a, b = SpatialGrid(-8.0, 8.0, 513), SpatialGrid(-8.0, 8.0, 257)
    with pytest.raises(InvalidInputError):
        expectation(field(a, lambda x: x), field(b, gauss))


def test_time_integrate_constant_and_linear():
    t = TimeGrid(0.0, 2.0, 7)
    assert time_integrate(np.full(8, 3.0), t) == pytest.approx(6.0, abs=1e-14)
    t1 = TimeGrid(0.0, 1.0, 13)
    assert time_integrate(t1.t, t1) == pytest.approx(0.5, abs=1e-15)


def test_time_integrate_second_order():
    errs = []
    for n in (50, 100):
        t = TimeGrid(0.0, 1.0, n)
        errs.append(abs(time_integrate(t.t**2, t) - 1.0 / 3.0))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)


def test_time_integrate_length_mismatch():
    with pytest.raises(InvalidInputError):
        time_integrate(np.zeros(5), TimeGrid(0.0, 1.0, 5))


def test_erode_mask():
    m = np.array([0, 1, 1, 1, 1, 1, 0, 1], dtype=bool)
    assert erode_mask(m, 1).tolist() == [0, 0, 1, 1, 1, 0, 0, 0]


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-5, 5), k=st.floats(0.1, 3.0))
def test_integral_is_linear(c, k):
    g = SpatialGrid(-8.0, 8.0, 129)
    a = integrate(field(g, lambda x: c * np.sin(k * x) + gauss(x)))
    b = c * integrate(field(g, lambda x: np.sin(k * x))) + integrate(field(g, gauss))
    assert a == pytest.approx(b, abs=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochmech import info
from stochmech.fields import ScalarField, SpatialGrid
from stochmech.scenarios import gaussian_density

GRID = SpatialGrid(-8.0, 8.0, 513)
WIDE = SpatialGrid(-16.0, 16.0, 1025)  # same spacing, tails far below the floor


def gaussian(mean=0.0, var=0.5, grid=GRID):
    return ScalarField(grid, gaussian_density(grid.x, mean, var))


# differential entropy and Fisher information

def test_gaussian_entropy():
    assert abs(info.differential_entropy(gaussian()) - 0.5 * math.log(math.pi * math.e)) <= 1e-6


def test_uniform_entropy_is_zero():
    g = SpatialGrid(0.0, 1.0, 101)
    assert abs(info.differential_entropy(ScalarField(g, np.ones(101)))) <= 1e-12


def test_free_packet_entropy_at_t1(free):
    h = info.differential_entropy(free.rho.at(-1))
    assert abs(h - 0.5 * math.log(2 * math.pi * math.e)) <= 1e-4


def test_fisher_of_ground_density():
    assert abs(info.fisher_information(gaussian()) - 2.0) <= 1e-5


def test_fisher_of_unit_variance_gaussian():
    assert abs(info.fisher_information(gaussian(0.0, 1.0)) - 1.0) <= 1e-5


@settings(max_examples=25, deadline=None)
@given(shift=st.integers(-40, 40), var=st.floats(0.3, 1.5))
def test_fisher_translation_invariant(shift, var):
    # translate by whole grid steps so both densities are sampled identically
    base = gaussian(0.0, var, WIDE).values
    moved = np.roll(base, shift)
    a = info.fisher_information(ScalarField(WIDE, base))
    b = info.fisher_information(ScalarField(WIDE, moved))
    assert abs(a - b) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(mean=st.floats(-2, 2), var=st.floats(0.2, 2.0))
def test_entropy_matches_closed_form(mean, var):
    h = info.differential_entropy(gaussian(mean, var, WIDE))
    assert abs(h - 0.5 * math.log(2 * math.pi * math.e * var)) <= 1e-6


def test_bohm_identity_on_gaussian():
    eq, rhs = info.bohm_identity(gaussian().values, GRID.dx, _params())
    assert abs(eq - rhs) <= 1e-6
    assert abs(rhs - 0.25) <= 1e-6  # hbar^2 I / 8m with I = 2


def _params():
    from stochmech.scenarios import default_params

    return default_params("harmonic_ground")


# continuum relative entropy

def test_theorem1_zero_on_ground_state(ground):
    hp, hm = info.relative_entropy_theorem1(ground.drifts, ground.rho, ground.params)
    assert abs(hp) <= 1e-6 and abs(hm) <= 1e-6
    e_plus, _ = info.log_density_derivatives(ground.drifts, ground.rho, ground.params)
    assert np.max(np.abs(e_plus)) <= 1e-6


def test_corollary1_exact_on_ground_state(ground):
    cp, cm = info.relative_entropy_corollary1(ground.drifts, ground.rho)
    assert abs(cp) <= 1e-8 and abs(cm) <= 1e-8


@pytest.mark.parametrize("name", ["ground", "coherent", "free"])
def test_relative_entropy_antisymmetry_and_agreement(name, request):
    s = request.getfixturevalue(name)
    hp, hm = info.relative_entropy_theorem1(s.drifts, s.rho, s.params)
    cp, cm = info.relative_entropy_corollary1(s.drifts, s.rho)
    assert abs(hp + hm) <= 2e-4
    assert abs(hp - cp) <= 2e-4 and abs(hm - cm) <= 2e-4
    assert max(abs(hp), abs(hm), abs(cp), abs(cm)) <= 5e-4


def test_free_packet_terms_cancel(free):
    rep = info.entropy_report(free.drifts, free.rho, free.params)
    assert abs(rep.H_b - rep.H_a - 0.5 * math.log(2)) <= 1e-4
    cp, _ = info.relative_entropy_corollary1(free.drifts, free.rho)
    assert abs(cp) <= 5e-4


def test_entropy_report_breakdown_sums(coherent):
    rep = info.entropy_report(coherent.drifts, coherent.rho, coherent.params)
    for name in rep.terms:
        assert rep.breakdown_gap(name) <= 1e-12
        assert all(se >= 0 for _, _, se in rep.terms[name])
    text = rep.to_text()
    assert "H_plus_minus" in text and "term" in text


# Fisher information production

def test_fisher_production_ground_value(ground):
    for value in info.fisher_production(ground.drifts, ground.rho, ground.params):
        assert abs(value - 1.0) <= 1e-4


@pytest.mark.parametrize("name", ["coherent", "free"])
def test_fisher_production_forms_agree(name, request):
    s = request.getfixturevalue(name)
    a, b, c = info.fisher_production(s.drifts, s.rho, s.params)
    assert max(abs(a - b), abs(a - c), abs(b - c)) <= 5e-4


@pytest.mark.parametrize("name", ["ground", "coherent", "free"])
def test_bohm_identity_on_histories(name, request):
    s = request.getfixturevalue(name)
    eq, rhs = info.bohm_identity(s.rho.values, s.grid.dx, s.params)
    assert np.max(np.abs(eq - rhs)) <= 1e-4


# discrete chains

KERNEL = np.array([[0.9, 0.1], [0.1, 0.9]])


def test_symmetric_stationary_chain_measures_equal():
    chain = info.DiscreteChain(np.array([0.5, 0.5]), (KERNEL,))
    pair = info.chain_path_measures(chain)
    assert np.max(np.abs(pair.rho_plus - pair.rho_minus)) <= 1e-15
    rep = info.chain_relative_entropy(pair, chain)
    t1, t2 = (v for _, v, _ in rep.terms["H_plus_minus"])
    assert t1 == 0.0 and abs(t2) <= 1e-15


def test_bayes_reversal_exact_at_any_marginal():
    chain = info.DiscreteChain(np.array([0.7, 0.3]), (KERNEL, KERNEL))
    pair = info.chain_path_measures(chain)
    assert np.max(np.abs(pair.rho_plus - pair.rho_minus)) <= 1e-14
    rep = info.chain_relative_entropy(pair, chain)
    assert abs(rep.H_plus_minus) <= 1e-14 and abs(rep.H_minus_plus) <= 1e-14
    marg = chain.marginals()
    h1, h2, h3 = (info.discrete_entropy(m) for m in marg)
    assert h1 == pytest.approx(0.61086, abs=1e-5)
    assert h2 == pytest.approx(0.64103, abs=1e-5)
    assert h3 == pytest.approx(0.66001, abs=1e-5)
    t1, t2 = (v for _, v, _ in rep.terms["H_plus_minus"])
    assert t1 == pytest.approx(h3 - h1, abs=1e-15)
    assert abs(t1 + t2) <= 1e-14
    (_, t2_bayes, _), = rep.terms["T2_bayes_form"]
    assert abs(t2_bayes - t2) <= 1e-14


def test_random_chain_measures_normalized(rng):
    chain = info.DiscreteChain.random(rng, 3, 3)
    pair = info.chain_path_measures(chain)
    assert abs(pair.rho_plus.sum() - 1.0) <= 1e-12
    assert abs(pair.rho_minus.sum() - 1.0) <= 1e-12


def test_path_tensor_order_matches_enumeration(rng):
    chain = info.DiscreteChain.random(rng, 3, 2)
    pair = info.chain_path_measures(chain)
    k1, k2 = chain.kernels
    for path, p in zip(info.enumerate_paths(3, 3), pair.rho_plus.ravel()):
        a, b, c = path
        assert p == pytest.approx(chain.rho1[a] * k1[a, b] * k2[b, c], rel=1e-14)


def test_degenerate_chain_raises():
    chain = info.DiscreteChain(np.array([1.0, 0.0]), (np.eye(2),))
    with pytest.raises(info.DegenerateChainError):
        info.chain_path_measures(chain)


def test_invalid_chain_rejected():
    with pytest.raises(info.InvalidInputError):
        info.DiscreteChain(np.array([0.5, 0.6]), (KERNEL,))
    with pytest.raises(info.InvalidInputError):
        info.DiscreteChain(np.array([0.5, 0.5]), (np.array([[0.5, 0.6], [0.5, 0.5]]),))


def test_enumeration_limit():
    chain = info.DiscreteChain(np.full(11, 1 / 11), tuple(np.full((11, 11), 1 / 11)
                                                          for _ in range(6)))
    with pytest.raises(info.InvalidInputError):
        info.chain_path_measures(chain)


def test_infinite_kl_is_flagged():
    chain = info.DiscreteChain(np.array([0.5, 0.5]), (KERNEL,))
    pair = info.chain_path_measures(chain, backward_kernels=(np.eye(2),))
    rep = info.chain_relative_entropy(pair, chain)
    assert rep.flags["infinite_plus_minus"] and math.isinf(rep.H_plus_minus)


chains = st.tuples(st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))


@settings(max_examples=60, deadline=None)
@given(chains)
def test_bayes_reversed_kl_vanishes_and_decomposes(spec):
    n, steps, seed = spec
    chain = info.DiscreteChain.random(np.random.default_rng(seed), n, steps)
    rep = info.chain_relative_entropy(info.chain_path_measures(chain), chain)
    assert abs(rep.H_plus_minus) <= 1e-12 and abs(rep.H_minus_plus) <= 1e-12
    assert rep.breakdown_gap("H_plus_minus") <= 1e-12


@settings(max_examples=60, deadline=None)
@given(chains)
def test_kl_nonnegative_and_decomposes_for_mismatched_pairs(spec):
    n, steps, seed = spec
    rng = np.random.default_rng(seed)
    chain = info.DiscreteChain.random(rng, n, steps)
    other = info.DiscreteChain.random(rng, n, steps)
    pair = info.chain_path_measures(chain, backward_kernels=other.kernels)
    rep = info.chain_relative_entropy(pair, chain)
    assert rep.H_plus_minus >= -1e-12 and rep.H_minus_plus >= -1e-12
    assert rep.breakdown_gap("H_plus_minus") <= 1e-12 * max(1.0, abs(rep.H_plus_minus))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_kl_zero_iff_equal(n, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n))
    assert info.kl_divergence(p, p) == 0.0
    q = rng.dirichlet(np.ones(n))
    if np.max(np.abs(p - q)) > 1e-12:
        assert info.kl_divergence(p, q) > 0.0

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mrstruct import stoch
from mrstruct.errors import IllConditionedError
from mrstruct.forms import AtomSpace, GraphForm, SGForm, energy, indicator_family, path_graph
from mrstruct.medm import build_medm
from mrstruct.riemann import evaluate_tuple, gradient, pointwise_index, gram_field
from mrstruct.suites import random_function

F = np.array([0.0, 1.0, 3.0])


@pytest.fixture(scope="module")
def p3_chain():
    return stoch.ChainModel(path_graph(3))


@pytest.fixture(scope="module")
def p3_paths(p3_chain):
    return stoch.simulate_paths(p3_chain, seed=11, T=10.0, n_paths=10_000)


def test_chain_rates_and_reversibility(p3_chain):
    assert_allclose(p3_chain.q, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert_allclose(p3_chain.rates, [1, 2, 1])
    flux = p3_chain.m[:, None] * p3_chain.q
    assert np.array_equal(flux, flux.T)


def test_chain_needs_a_graph():
    with pytest.raises(TypeError):
        stoch.ChainModel(SGForm(1))


def test_generator(p3_chain):
    assert_allclose(p3_chain.generator(F), [1.0, 1.0, -2.0])


def test_single_atom_never_jumps():
    g = GraphForm(AtomSpace(("a",), np.ones(1), "graph"), np.zeros((1, 1)))
    path = stoch.simulate_path(stoch.ChainModel(g), seed=0, T=5.0)
    assert path.n_jumps == 0 and path.states.tolist() == [0]


def test_seed_determinism(p3_chain):
    a = stoch.simulate_path(p3_chain, 3, 10.0, path_id=7)
    b = stoch.simulate_path(p3_chain, 3, 10.0, path_id=7)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)
    c = stoch.simulate_path(p3_chain, 3, 10.0, path_id=8)
    assert not np.array_equal(a.times, c.times)


def test_worker_count_does_not_change_paths(p3_chain):
    serial = stoch.simulate_paths(p3_chain, 5, 4.0, 40)
    parallel = stoch.simulate_paths(p3_chain, 5, 4.0, 40, workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)


def test_paths_move_along_edges(p3_chain, p3_paths):
    for p in p3_paths[:200]:
        assert np.all(np.diff(p.times) > 0)
        assert np.all(p3_chain.c[p.states[:-1], p.states[1:]] > 0)


def test_horizon_must_be_positive(p3_chain):
    with pytest.raises(ValueError):
        stoch.simulate_path(p3_chain, 0, 0.0)


def test_stationary_occupation(p3_chain, p3_paths):
    occ = np.sum([p.occupation(3) for p in p3_paths], axis=0) / (10.0 * len(p3_paths))
    # initial-state fractions are binomial; occupation fractions have smaller spread
    start = np.bincount([p.states[0] for p in p3_paths], minlength=3) / len(p3_paths)
    pi = p3_chain.stationary
    sigma = np.sqrt(pi * (1 - pi) / len(p3_paths))
    assert np.all(np.abs(start - pi) <= 3 * sigma)
    assert np.all(np.abs(occ - pi) <= 3 * sigma)


def test_forced_path_example(p3_chain):
    path = stoch.PathRecord.from_jumps(0, [(0.5, 1)], 1.0)
    M = stoch.fukushima_martingale(p3_chain, path, F)
    assert M.terminal == 0.0
    assert_allclose(M([0.0, 0.25, 0.5, 1.0]), [0.0, -0.25, 0.5, 0.0])
    assert M.left[1] == -0.5 and M.right[1] == 0.5
    assert M.sup_abs() == 0.5


def test_constant_function_gives_zero_martingale(p3_chain, p3_paths):
    for p in p3_paths[:50]:
        assert stoch.fukushima_martingale(p3_chain, p, np.full(3, 2.0)).sup_abs() == 0.0


def test_martingale_mean_from_fixed_start(p3_chain):
    paths = stoch.simulate_paths(p3_chain, 21, 10.0, 10_000, init=0)
    finals = np.array([stoch.fukushima_martingale(p3_chain, p, F).terminal for p in paths])
    se = finals.std(ddof=1) / np.sqrt(finals.size)
    assert abs(finals.mean()) <= 3 * se


def test_carre_du_champ(p3_chain):
    assert_allclose(stoch.carre_du_champ(p3_chain, F), [1.0, 5.0, 4.0])
    assert_allclose(stoch.carre_du_champ(p3_chain, np.ones(3)), 0.0)


def test_quadratic_variation_compensator(p3_chain, p3_paths):
    diffs = np.array([np.subtract(*stoch.quadratic_variation(p3_chain, p, F)) for p in p3_paths])
    se = diffs.std(ddof=1) / np.sqrt(diffs.size)
    assert abs(diffs.mean()) <= 3 * se


def test_energy_monte_carlo_p3(p3_chain, p3_paths):
    finals = np.array([stoch.fukushima_martingale(p3_chain, p, F).terminal for p in p3_paths])
    sq = finals ** 2
    scale = p3_chain.m.sum() / (2 * 10.0)
    e_mc, se = scale * sq.mean(), scale * sq.std(ddof=1) / np.sqrt(sq.size)
    assert abs(e_mc - energy(p3_chain.graph, F)) <= 3 * se


@pytest.mark.parametrize("h", [1.0, 0.0])
def test_integral_of_constant_integrand(p3_chain, p3_paths, h):
    M = stoch.MAFSpec.fukushima(F)
    for p in p3_paths[:50]:
        I = stoch.stochastic_integral(p3_chain, p, np.full(3, h), M)
        m = stoch.maf_functional(p3_chain, p, M)
        assert_allclose(I.right, h * m.right, atol=0)
        assert_allclose(I.left, h * m.left, atol=0)


def test_integral_is_linear_in_integrand(p3_chain, p3_paths):
    rng = np.random.default_rng(0)
    M = stoch.MAFSpec.fukushima(F)
    for p in p3_paths[:50]:
        h1, h2 = rng.standard_normal(3), rng.standard_normal(3)
        a, b = rng.standard_normal(2)
        lhs = stoch.stochastic_integral(p3_chain, p, a * h1 + b * h2, M)
        r1 = stoch.stochastic_integral(p3_chain, p, h1, M)
        r2 = stoch.stochastic_integral(p3_chain, p, h2, M)
        assert_allclose(lhs.right, a * r1.right + b * r2.right, atol=1e-12)


def test_revuz_density_of_sum_spec(p3_chain):
    rng = np.random.default_rng(1)
    phi1, phi2 = rng.standard_normal(3), rng.standard_normal(3)
    f1, f2 = rng.standard_normal(3), rng.standard_normal(3)
    M = stoch.MAFSpec([(phi1, f1), (phi2, f2)])
    from mrstruct.forms import mutual_energy_measure as mu
    g = p3_chain.graph
    expected = phi1 ** 2 * mu(g, f1, f1) + 2 * phi1 * phi2 * mu(g, f1, f2) + phi2 ** 2 * mu(g, f2, f2)
    assert_allclose(M.revuz_density(p3_chain), expected, rtol=1e-12)
    assert_allclose(M.mutual_measure(p3_chain, f1), phi1 * mu(g, f1, f1) + phi2 * mu(g, f2, f1), rtol=1e-12)


# --- representation ---------------------------------------------------------------------

def test_p3_representation(p3_setup, p3_chain, p3_paths):
    tup = p3_setup.tuple
    M = stoch.MAFSpec.fukushima(F)
    rep = stoch.representation_check(p3_chain, p3_paths[:1000], M, tup)
    assert rep.ok and rep.max_rel_error <= 1e-8
    h = stoch.representation_integrand(p3_chain, M, tup).h
    assert_allclose(h, gradient(p3_chain.graph, F, tup).values, atol=1e-10)


def test_per_edge_interpolation_is_exact(p3_setup, p3_chain):
    tup = p3_setup.tuple
    h = stoch.representation_integrand(p3_chain, stoch.MAFSpec.fukushima(F), tup).h
    for x, y, _ in p3_chain.graph.edges() + [(j, i, c) for i, j, c in p3_chain.graph.edges()]:
        dg = np.array([g[y] - g[x] for g in tup.g])
        assert_allclose(h[x] @ dg, F[y] - F[x], atol=1e-12)


def test_unit_weight_spec_matches_fukushima(p3_setup, p3_chain):
    tup = p3_setup.tuple
    a = stoch.representation_integrand(p3_chain, stoch.MAFSpec([(np.ones(3), F)]), tup).h
    b = stoch.representation_integrand(p3_chain, stoch.MAFSpec.fukushima(F), tup).h
    assert_allclose(a, b)


def test_first_coordinate_integrand(p3_setup, p3_chain, p3_paths):
    tup = p3_setup.tuple
    M = stoch.MAFSpec.fukushima(tup.g[0])
    h = stoch.representation_integrand(p3_chain, M, tup).h
    assert_allclose(h, np.tile([1.0, 0.0], (3, 1)), atol=1e-12)
    assert stoch.representation_check(p3_chain, p3_paths[:100], M, tup).max_error < 1e-12


def test_representation_refuses_degenerate_tuple(p3_chain, p3_paths):
    g = p3_chain.graph
    nu = build_medm(g, indicator_family(g))
    ix = pointwise_index(gram_field(g, indicator_family(g), nu))
    tup = evaluate_tuple(g, [np.array([1.0, 0, 0]), np.array([2.0, 0, 0])], nu, ix)
    with pytest.raises(IllConditionedError):
        stoch.representation_check(p3_chain, p3_paths[:5], stoch.MAFSpec.fukushima(F), tup)


def test_representation_cholesky_route_agrees(g20_setup):
    chain = stoch.ChainModel(g20_setup.model)
    M = stoch.random_spec(chain, g20_setup.family, seed=3, n_terms=3)
    a = stoch.representation_integrand(chain, M, g20_setup.tuple).h
    b = stoch.representation_integrand(chain, M, g20_setup.tuple, method="cholesky").h
    assert_allclose(a, b, rtol=1e-6, atol=1e-8)


def test_random_specs_on_random_graph(g20_setup):
    chain = stoch.ChainModel(g20_setup.model)
    paths = stoch.simulate_paths(chain, 2, 10.0, 200)
    for k in range(5):
        M = stoch.random_spec(chain, g20_setup.family, seed=9, n_terms=3, index=k)
        assert stoch.representation_check(chain, paths, M, g20_setup.tuple).ok


# --- isometry and truncation ----------------------------------------------------------------

def test_p3_isometry(p3_setup, p3_chain):
    iso = stoch.energy_isometry(p3_chain, stoch.MAFSpec.fukushima(F), p3_setup.tuple)
    assert iso.e_exact == 5.0
    assert_allclose(iso.half_norm, 5.0, rtol=1e-12)


def test_zero_spec_isometry(p3_setup, p3_chain, p3_paths):
    iso = stoch.energy_isometry(p3_chain, stoch.MAFSpec.zero(3), p3_setup.tuple, paths=p3_paths[:100])
    assert (iso.e_exact, iso.half_norm, iso.e_mc) == (0.0, 0.0, 0.0)


def test_isometry_is_quadratic(p3_setup, p3_chain):
    M = stoch.MAFSpec([(np.array([1.0, -2.0, 0.5]), F)])
    a = stoch.energy_isometry(p3_chain, M, p3_setup.tuple)
    b = stoch.energy_isometry(p3_chain, M.scaled(3.0), p3_setup.tuple)
    assert_allclose([b.e_exact, b.half_norm], [9 * a.e_exact, 9 * a.half_norm], rtol=1e-12)


def test_truncation(p3_setup, p3_chain):
    h = stoch.representation_integrand(p3_chain, stoch.MAFSpec.fukushima(F), p3_setup.tuple)
    q = h.atom_quadratic()
    assert_allclose(stoch.truncate_integrand(h, q.max()).h, h.h)
    assert_allclose(stoch.truncate_integrand(h, 0.0).h, 0.0)
    with pytest.raises(ValueError):
        stoch.truncate_integrand(h, -1.0)


def test_truncation_error_shrinks(g20_setup):
    chain = stoch.ChainModel(g20_setup.model)
    f = random_function(g20_setup.model, 0)
    h = stoch.representation_integrand(chain, stoch.MAFSpec.fukushima(f), g20_setup.tuple)
    levels = np.sort(h.atom_quadratic())
    errs = []
    for k in levels:
        diff = stoch.VectorIntegrand(h.h - stoch.truncate_integrand(h, k).h, h.tuple)
        errs.append(diff.norm2())
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] == 0.0

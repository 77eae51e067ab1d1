import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mrstruct import medm, riemann
from mrstruct.errors import DominationError, IllConditionedError, SamplingError
from mrstruct.forms import (
    GraphForm,
    AtomSpace,
    QuadPoly,
    SGForm,
    SuperpositionForm,
    energy_measure,
    indicator_family,
    random_graph,
)
from mrstruct.suites import derivation_cases, random_function


def _setup(model, family, seed=0, nu=None):
    nu = medm.build_medm(model, family) if nu is None else nu
    gf = riemann.gram_field(model, family, nu)
    ix = riemann.pointwise_index(gf)
    return nu, gf, ix


# --- gram field and index ---------------------------------------------------------

def test_k3_indicator_gram_field_is_psd(k3):
    nu, gf, _ = _setup(k3, indicator_family(k3))
    assert gf.Z.shape == (3, 3, 3)
    assert_allclose(gf.Z, np.swapaxes(gf.Z, 1, 2))
    ev = np.linalg.eigvalsh(gf.Z)
    assert np.all(ev[:, 0] >= -1e-10 * (ev[:, -1] + 1))


def test_constant_family_gives_zero_matrices(p3):
    nu = np.ones(3)
    gf = riemann.gram_field(p3, [np.ones(3), 2 * np.ones(3)], nu)
    assert_allclose(gf.Z, 0.0)
    assert riemann.pointwise_index(gf).index == 0


def test_single_function_with_its_own_measure(p3):
    f = np.array([0.0, 1.0, 3.0])
    gf = riemann.gram_field(p3, [f], energy_measure(p3, f))
    assert_allclose(gf.Z[:, 0, 0], 1.0)


def test_gram_field_requires_domination(p3):
    with pytest.raises(DominationError):
        riemann.gram_field(p3, [np.array([0.0, 1.0, 3.0])], np.array([1.0, 0.0, 1.0]))


def test_p3_pointwise_index(p3):
    _, _, ix = _setup(p3, indicator_family(p3))
    assert ix.p_x.tolist() == [1, 2, 1]
    assert ix.index == 2
    assert ix.stratum(2).tolist() == [1]


def test_zero_form_has_index_zero():
    g = GraphForm(AtomSpace(("a", "b"), np.ones(2), "graph"), np.zeros((2, 2)))
    with pytest.warns(RuntimeWarning):
        nu = medm.build_medm(g, indicator_family(g))
    ix = riemann.pointwise_index(riemann.gram_field(g, indicator_family(g), nu))
    assert ix.index == 0 and ix.p_x.tolist() == [0, 0]


@pytest.mark.parametrize("seed", range(4))
def test_graph_index_equals_degree(seed):
    g = random_graph(15, seed=seed)
    _, _, ix = _setup(g, indicator_family(g))
    deg = (g.conductances > 0).sum(axis=1)
    assert ix.p_x.tolist() == deg.tolist()


def test_superposition_two_generators():
    sp = SuperpositionForm(2, 8)
    _, _, ix = _setup(sp, ["x1", "y"])
    assert set(ix.p_x[: sp.n_bulk]) == {2}
    assert set(ix.p_x[sp.n_bulk:]) == {1}
    assert ix.index == 2


def test_rank_is_monotone_in_the_family():
    g = random_graph(12, seed=7)
    fam = indicator_family(g)
    nu, gf, _ = _setup(g, fam)
    prev = np.zeros(12, dtype=int)
    for k in range(1, len(fam) + 1):
        sub = riemann.GramField(gf.Z[:, :k, :k], gf.nu, gf.labels[:k])
        p = riemann.pointwise_index(sub).p_x
        assert np.all(p >= prev)
        prev = p


def test_index_field_flags_non_spanning_family(p3):
    f = np.array([0.0, 1.0, 3.0])
    gf = riemann.gram_field(p3, [f], energy_measure(p3, f), spanning=False)
    assert riemann.pointwise_index(gf).lower_bound


# --- coordinate tuples ------------------------------------------------------------------

def test_single_function_tuple_is_in_ghat(p3):
    f = np.array([0.0, 1.0, 3.0])
    nu = energy_measure(p3, f)
    ix = riemann.pointwise_index(riemann.gram_field(p3, [f], nu))
    tup = riemann.sample_coordinates(p3, [f], nu, ix, seed=3)
    assert tup.in_Ghat and tup.redraws == 0
    assert_allclose(tup.cond[tup.charged], 1.0)


def test_degenerate_family_reports_failing_atom(p3):
    # both members are flat across the edge v1-v2, so v2 only sees a one-dimensional problem
    # while the index requires two directions at v1
    fam = [np.array([1.0, 0.0, 0.0]), np.array([2.0, 0.0, 0.0])]
    nu = medm.build_medm(p3, indicator_family(p3))
    ix = riemann.pointwise_index(riemann.gram_field(p3, indicator_family(p3), nu))
    with pytest.raises(SamplingError) as info:
        riemann.sample_coordinates(p3, fam, nu, ix, seed=0, r_max=4)
    assert info.value.worst_atom == "v1"
    tup = riemann.evaluate_tuple(p3, fam, nu, ix)
    assert not tup.in_G
    assert tup.worst_atom == 1


def test_sampling_is_reproducible(g20_setup):
    s = g20_setup
    a = riemann.sample_coordinates(s.model, s.family, s.nu, s.index, seed=5)
    b = riemann.sample_coordinates(s.model, s.family, s.nu, s.index, seed=5)
    assert_allclose(a.coefficients, b.coefficients, rtol=0, atol=0)


def test_scaling_preserves_membership(g20_setup):
    s = g20_setup
    tup = s.tuple
    scaled = [c * g for c, g in zip([3.0, -1e-3, 7e2, 1.0, -2.0, 5.0, 0.1], tup.g)]
    again = riemann.evaluate_tuple(s.model, scaled, s.nu, s.index)
    assert again.in_G == tup.in_G and again.in_Ghat == tup.in_Ghat
    assert_allclose(again.cond, tup.cond, rtol=1e-6)


def test_gradient_requires_g(p3):
    fam = [np.array([1.0, 0.0, 0.0]), np.array([2.0, 0.0, 0.0])]
    nu = medm.build_medm(p3, indicator_family(p3))
    ix = riemann.pointwise_index(riemann.gram_field(p3, indicator_family(p3), nu))
    tup = riemann.evaluate_tuple(p3, fam, nu, ix)
    with pytest.raises(IllConditionedError):
        riemann.gradient(p3, np.zeros(3), tup)


# --- gradient ---------------------------------------------------------------------------

def test_k3_gradient_of_exact_combination(k3):
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    nu, _, ix = _setup(k3, indicator_family(k3))
    tup = riemann.evaluate_tuple(k3, [e1, e2], nu, ix)
    assert tup.in_G
    assert_allclose(riemann.gradient(k3, e1 + 2 * e2, tup).values, [[1, 2]] * 3, atol=1e-12)


@pytest.mark.parametrize("fixture", ["p3_setup", "k3_setup", "g20_setup", "sg3_setup", "sp2_setup"])
def test_gradient_of_first_coordinate(fixture, request):
    s = request.getfixturevalue(fixture)
    grad = riemann.gradient(s.model, s.tuple.g[0], s.tuple).values
    expected = np.zeros_like(grad)
    expected[s.tuple.charged, 0] = 1.0
    assert_allclose(grad, expected, atol=1e-9)


@pytest.mark.parametrize("fixture", ["p3_setup", "g20_setup", "sg3_setup", "sp2_setup"])
def test_gradient_of_constant_is_zero(fixture, request):
    s = request.getfixturevalue(fixture)
    assert_allclose(riemann.gradient(s.model, s.model.constant(4.0), s.tuple).values, 0.0, atol=1e-12)


@pytest.mark.parametrize("fixture", ["p3_setup", "g20_setup", "sg3_setup", "sp2_setup"])
def test_components_beyond_pointwise_index_vanish(fixture, request):
    s = request.getfixturevalue(fixture)
    grad = riemann.gradient(s.model, random_function(s.model, 1), s.tuple)
    mask = np.arange(s.tuple.p)[None, :] >= grad.p_x[:, None]
    assert np.all(grad.values[mask] == 0.0)


@pytest.mark.parametrize("fixture", ["p3_setup", "k3_setup", "g20_setup", "sg3_setup", "sp2_setup"])
def test_two_factorizations_agree(fixture, request):
    """QR of the jets and Cholesky of the densities give the same solution.

    Agreement is 1e-10 where the leading block has condition number up to
    1e5; beyond that the Cholesky route's forward error ``~ eps * cond``
    dominates and is what we bound.
    """
    s = request.getfixturevalue(fixture)
    eps = np.finfo(float).eps
    tol = np.where(s.tuple.cond <= 1e5, 1e-10, 100 * eps * s.tuple.cond)
    for k in range(5):
        f = random_function(s.model, 2, k)
        a = riemann.gradient(s.model, f, s.tuple, method="qr").values
        b = riemann.gradient(s.model, f, s.tuple, method="cholesky").values
        err = np.abs(a - b).max(axis=1) / (1 + np.abs(a).max(axis=1))
        assert np.all(err <= tol)


def test_gradient_solves_normal_equations(g20_setup):
    s = g20_setup
    f = random_function(s.model, 4)
    w = riemann.gradient(s.model, f, s.tuple).values
    _, u = riemann._densities(s.model, f, s.tuple)
    for x in np.flatnonzero(s.tuple.charged):
        r = s.tuple.p_x[x]
        Z = s.tuple.Zg[x, :r, :r]
        assert_allclose(Z @ w[x, :r], u[x, :r], rtol=1e-8, atol=1e-10 * np.abs(u[x]).max())


def test_gradient_rejects_unknown_method(p3_setup):
    with pytest.raises(ValueError):
        riemann.gradient(p3_setup.model, np.zeros(3), p3_setup.tuple, method="svd")


# --- schur, remainder, reconstruction --------------------------------------------------------

def _bordered_det(s, f, x):
    """Determinant of the Gram matrix of (g_1..g_r, f) at x, normalized by its diagonal."""
    r = s.tuple.p_x[x]
    fam = list(s.tuple.g[:r]) + [f]
    G = riemann.gram_measures(s.model, fam)[x]
    d = np.sqrt(np.diag(G))
    return np.linalg.det(G / np.outer(d, d))


@pytest.mark.parametrize("k", range(10))
def test_bordered_determinant_oracle_on_p3(p3_setup, k):
    s = p3_setup
    f = random_function(s.model, 9, k)
    for x in range(3):
        assert abs(_bordered_det(s, f, x)) < 1e-10
    assert_allclose(riemann.schur_residual(s.model, f, s.tuple), 0.0, atol=1e-12)


@pytest.mark.parametrize("fixture", ["p3_setup", "k3_setup", "g20_setup", "sg3_setup", "sp2_setup"])
def test_schur_and_remainder_vanish(fixture, request):
    s = request.getfixturevalue(fixture)
    for k in range(10):
        f = random_function(s.model, 11, k)
        dff = np.where(s.tuple.charged, energy_measure(s.model, f) / np.where(s.tuple.charged, s.tuple.nu, 1), 0)
        sch = riemann.schur_residual(s.model, f, s.tuple)
        rem = riemann.remainder_density(s.model, f, s.tuple)
        assert np.all(sch <= 1e-8 * (1 + dff))
        assert np.all(np.abs(rem) <= 1e-8 * (1 + dff))
        assert_allclose(sch, rem, atol=1e-10)


def test_expanded_remainder_agrees_on_well_conditioned_tuple(k3_setup):
    s = k3_setup
    f = random_function(s.model, 0)
    a = riemann.remainder_density(s.model, f, s.tuple)
    b = riemann.remainder_density(s.model, f, s.tuple, expanded=True)
    assert_allclose(a, b, atol=1e-10)


def test_remainder_of_linear_combination_is_zero(g20_setup):
    s = g20_setup
    f = 2.0 * s.tuple.g[0] - 0.5 * s.tuple.g[1] + 3.0
    assert_allclose(riemann.remainder_density(s.model, f, s.tuple), 0.0, atol=1e-20)
    f = s.tuple.g[0] + 10.0
    assert_allclose(riemann.remainder_density(s.model, f, s.tuple), 0.0, atol=1e-20)


def test_remainder_is_positive_for_wrong_gradient(p3_setup):
    s = p3_setup
    f = np.array([0.0, 1.0, 3.0])
    w = riemann.gradient(s.model, f, s.tuple).values + 0.1
    assert np.all(riemann.remainder_density(s.model, f, s.tuple, grad=w) > 0)


def test_p3_reconstruction_example(p3_setup):
    s = p3_setup
    f = np.array([0.0, 1.0, 3.0])
    lhs, rhs, rel = riemann.energy_reconstruction(s.model, f, f, s.tuple)
    assert lhs == 5.0
    assert_allclose(rhs, 5.0, rtol=1e-12)
    assert rel < 1e-12


def test_reconstruction_on_disconnected_graph():
    c = np.zeros((4, 4))
    c[0, 1] = c[1, 0] = 1.0
    c[2, 3] = c[3, 2] = 2.0
    g = GraphForm(AtomSpace(("a", "b", "c", "d"), np.ones(4), "graph"), c)
    fam = indicator_family(g)
    nu, _, ix = _setup(g, fam)
    tup = riemann.sample_coordinates(g, fam, nu, ix, seed=0)
    f = np.array([1.0, -2.0, 0.0, 0.0])
    h = np.array([0.0, 0.0, 3.0, 1.0])
    lhs, rhs, rel = riemann.energy_reconstruction(g, f, h, tup)
    assert lhs == 0.0 and abs(rhs) < 1e-12


def test_sg_reconstruction_example():
    sg = SGForm(4)
    fam = sg.harmonic_family()
    nu, _, ix = _setup(sg, fam)
    tup = riemann.sample_coordinates(sg, fam, nu, ix, seed=0)
    lhs, rhs, rel = riemann.energy_reconstruction(sg, [1.0, 0, 0], [1.0, 0, 0], tup)
    assert_allclose([lhs, rhs], [2.0, 2.0], rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_reconstruction_property_on_graph(seed):
    g = random_graph(8, seed=seed % 50)
    fam = indicator_family(g)
    nu, _, ix = _setup(g, fam)
    try:
        tup = riemann.sample_coordinates(g, fam, nu, ix, seed=seed)
    except SamplingError:
        return
    gen = np.random.default_rng(seed)
    f, h = gen.standard_normal(8), gen.standard_normal(8)
    assert riemann.energy_reconstruction(g, f, h, tup)[2] < 1e-8


# --- derivation and SG ratio statistics ------------------------------------------------------

def test_derivation_identity_map(sp2_setup):
    s = sp2_setup
    psi = QuadPoly(1, 0.0, [1.0])
    assert riemann.derivation_check(s.model, psi, ["x1*y"], s.tuple) < 1e-10


def test_derivation_of_product(sp2_setup):
    s = sp2_setup
    psi = QuadPoly(2, 0.0, [0, 0], [[0, 0.5], [0.5, 0]])
    assert riemann.derivation_check(s.model, psi, ["x1", "y"], s.tuple) < 1e-8


def test_derivation_of_constant(sp2_setup):
    s = sp2_setup
    assert riemann.derivation_check(s.model, QuadPoly(1, 3.0), ["y"], s.tuple) < 1e-12


def test_derivation_cases(sp2_setup):
    s = sp2_setup
    for psi, fs in derivation_cases(s.model, 0):
        assert riemann.derivation_check(s.model, psi, fs, s.tuple) < 1e-8


def test_kusuoka_level0_matches_global_gram():
    stats = riemann.kusuoka_ratio_stats([0])
    assert stats[0]["cells"] == 1
    assert_allclose(stats[0]["mean_ratio"], 1.0)


def test_kusuoka_statistics():
    stats = riemann.kusuoka_ratio_stats(range(1, 7))
    means = [s["mean_ratio"] for s in stats]
    assert all(b < a for a, b in zip(means, means[1:]))
    assert means[3] < means[0]
    assert_allclose(means[:3], [1 / 9, 0.0439, 0.0331], rtol=2e-3)
    for s in stats:
        assert 1 <= s["min_rank"] <= s["max_rank"] <= 2
        assert 0.0 <= s["small_fraction"] <= 1.0


def test_kusuoka_reorthogonalizes():
    with pytest.warns(RuntimeWarning):
        stats = riemann.kusuoka_ratio_stats([2], generators=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)))
    ref = riemann.kusuoka_ratio_stats([2])
    assert 0 < stats[0]["mean_ratio"] <= 1
    assert ref[0]["mean_ratio"] > 0

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otreg import lab
from otreg import moduli as md
from otreg.measures import builtin, discretize
from otreg.oracles import gaussian_map, quantile_map_1d


def brute_triples(f, grid, m):
    """Every lattice triple at index distance m, as (quotient, i, k)."""
    out = []
    for i in range(f.size - m):
        for k in range(1, m):
            t = k / m
            q = ((1 - t) * f[i] + t * f[i + m] - f[i + k]) / (t * (1 - t))
            out.append((q, i, k))
    return out


# ---------------------------------------------------------------------------
# reports


def test_report_pass_rule():
    ok = lab.ViolationReport("c", -1e-4, {}, {"disc": 5e-5, "fd": 5e-5})
    bad = lab.ViolationReport("c", -1.01e-4, {}, {"disc": 5e-5, "fd": 5e-5})
    assert ok.tolerance == pytest.approx(1e-4)
    assert ok.passed and not bad.passed


def test_report_serializes_witness():
    rep = lab.ViolationReport("c", 0.5, {"x": np.array([1.0, 2.0]), "n": np.int64(3)}, {"total": 1e-3})
    d = json.loads(rep.to_json())
    assert d["witness"] == {"x": [1.0, 2.0], "n": 3} and d["pass"] is True
    row = rep.csv_row()
    assert row[:4] == ["c", "1", "0.5", "0.001"]


def test_tolerances_must_be_positive():
    with pytest.raises(ValueError):
        lab.check_modulus_dominated(md.Tabulated([0.0, 1.0], [0.0, 0.0]), md.Zero(), 0.0)


def test_normal_cdf_and_quantile():
    assert lab.normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-15)
    p = np.array([1e-10, 0.01, 0.5, 0.9, 1 - 1e-10])
    assert np.allclose(lab.normal_cdf(lab.normal_quantile(p)), p, rtol=1e-12, atol=0)


@pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, -0.2, 0.0, 0.7, 2.5, 6.0])
def test_normal_cdf_matches_erf(x):
    ref = 0.5 * math.erfc(-x / math.sqrt(2))
    assert lab.normal_cdf(x) == pytest.approx(ref, rel=1e-13, abs=1e-300)


# ---------------------------------------------------------------------------
# empirical moduli


def test_smoothness_of_quadratic_is_exact():
    g = np.linspace(-3, 3, 121)
    est = lab.empirical_smoothness(1.7 * g**2 / 2, [0.5, 1.0, 2.0], grid=g)
    assert np.allclose(est.values[1:], 1.7 * np.array([0.5, 1.0, 2.0]) ** 2 / 2, rtol=1e-12)


def test_convexity_of_quadratic_is_exact():
    g = np.linspace(-3, 3, 121)
    est = lab.empirical_convexity(0.4 * g**2 / 2, [0.5, 1.5], grid=g)
    assert np.allclose(est.values[1:], 0.4 * np.array([0.5, 1.5]) ** 2 / 2, rtol=1e-12)


def test_affine_has_zero_moduli():
    g = np.linspace(-2, 2, 81)
    f = 3 * g - 1
    for est in (lab.empirical_smoothness(f, [0.5, 1.0], grid=g), lab.empirical_convexity(f, [0.5, 1.0], grid=g)):
        assert np.max(np.abs(est.values)) < 1e-12


def test_abs_smoothness_and_kink_witness():
    g = np.linspace(-4, 4, 81)
    f = np.abs(g)
    est = lab.empirical_smoothness(f, [2.0], grid=g, t_samples="all")
    best = max(q for q, _, _ in brute_triples(f, g, 20))
    assert est.values[1] == pytest.approx(4.0, abs=1e-12)
    assert est.values[1] == pytest.approx(best, abs=1e-12)
    w = est.witnesses[0]
    assert (w["x0"], w["x1"], w["t"]) == pytest.approx((-1.0, 1.0, 0.5))


def test_quartic_convexity_matches_exhaustive_scan():
    g = np.linspace(-2, 2, 81)
    f = g**4
    est = lab.empirical_convexity(f, [1.0], grid=g, t_samples="all")
    worst = min(q for q, _, _ in brute_triples(f, g, 20))
    assert est.values[1] == pytest.approx(worst, abs=1e-9)


def test_callable_scan_finds_the_kink():
    est = lab.empirical_smoothness(np.abs, [2.0], box=(-4.0, 4.0), n_base=57)
    assert est.values[1] == pytest.approx(4.0, abs=1e-6)


def test_callable_scan_in_two_dimensions():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])

    def f(x):
        return 0.5 * np.einsum("ki,ij,kj->k", x, Q, x)

    box = np.array([[-2.0, 2.0], [-2.0, 2.0]])
    est = lab.empirical_smoothness(f, [1.0], box=box, n_random=2000, rng=0)
    top = np.linalg.eigvalsh(Q)[-1] / 2
    assert top - 0.02 <= est.values[1] <= top + 1e-12


def test_radius_too_large_is_skipped():
    g = np.linspace(0, 1, 11)
    est = lab.empirical_smoothness(g**2, [0.5, 5.0], grid=g)
    assert est.skipped == (5.0,)
    assert any("skipped" in fl for fl in est.flags)
    assert est.grid.tolist() == [0.0, 0.5]


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        lab.empirical_smoothness(np.zeros(5), [-1.0], grid=np.arange(5.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_more_samples_never_lower_the_estimate(seed):
    rng = np.random.default_rng(seed)
    g = np.linspace(-2, 2, 41)
    f = np.cumsum(np.cumsum(rng.random(41)))  # convex
    few = (0.3, 0.5)
    many = lab.DEFAULT_T
    s_few = lab.empirical_smoothness(f, [0.8, 1.6], few, grid=g).values
    s_many = lab.empirical_smoothness(f, [0.8, 1.6], many, grid=g).values
    c_few = lab.empirical_convexity(f, [0.8, 1.6], few, grid=g).values
    c_many = lab.empirical_convexity(f, [0.8, 1.6], many, grid=g).values
    assert np.all(s_many >= s_few - 1e-12)
    assert np.all(c_many <= c_few + 1e-12)
    assert np.all(c_many >= -1e-10)


def test_directional_smoothness_of_quadratic_form():
    Q = np.array([[1.0, 0.3], [0.3, 0.5]])

    def f(x):
        return 0.5 * np.einsum("ki,ij,kj->k", x, Q, x)

    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    S = md.QuadraticForm(Q)
    up = lab.check_directional_smoothness(f, S, box, 1e-9, n_triples=500)
    down = lab.check_directional_smoothness(f, S, box, 1e-9, n_triples=500, convexity=True)
    assert up.passed and down.passed
    assert abs(up.slack) < 1e-12 and abs(down.slack) < 1e-12


# ---------------------------------------------------------------------------
# fixed point and dominance


def test_modulus_dominated_reports_worst_radius():
    est = md.Tabulated([0.0, 1.0, 2.0], [0.0, 0.6, 1.5])
    rep = lab.check_modulus_dominated(est, md.Quadratic(1.0), 1e-3)
    assert rep.slack == pytest.approx(-0.1) and rep.witness["r"] == 1.0 and not rep.passed


def test_fixed_point_holds_for_the_limit_modulus():
    # a quadratic s = a r^2/2 satisfies the inequality exactly when a solves
    # a = (a + eps alpha) beta... ; zero is always admissible
    r = np.linspace(0, 3, 61)
    zero = md.Tabulated(r, np.zeros_like(r))
    rep = lab.check_fixed_point(zero, md.Quadratic(1.0), md.Quadratic(4.0), 0.1, 1e-9)
    assert rep.passed and rep.slack >= 0


def test_fixed_point_detects_an_oversized_estimate():
    r = np.linspace(0, 3, 61)
    big = md.Tabulated(r, 10.0 * r**2)
    rep = lab.check_fixed_point(big, md.Quadratic(1.0), md.Quadratic(4.0), 0.1, 1e-3)
    assert not rep.passed


def test_fixed_point_needs_origin():
    with pytest.raises(ValueError):
        lab.check_fixed_point(md.Tabulated([0.5, 1.0], [0.0, 0.0]), md.Zero(), md.Zero(), 0.1, 1e-3)


# ---------------------------------------------------------------------------
# maps on pairs


def test_linear_half_map_is_equality_in_conjugate_form():
    x, y = lab.sample_pairs(-3, 3, 500, 0)
    q, c = lab.check_map_regularity(x, y, x / 2, y / 2, md.Quadratic(0.5))
    assert abs(c.slack) < 1e-12 and q.passed


def test_identity_map_is_equality_in_both_forms():
    x, y = lab.sample_pairs(-3, 3, 500, 1)
    q, c = lab.check_map_regularity(x, y, x, y, md.Quadratic(1.0))
    assert abs(q.slack) < 1e-12 and abs(c.slack) < 1e-12


def test_quantile_map_regularity():
    mu = discretize(builtin("gaussian", cov=1.0), (-8, 8), 4096)
    nu = discretize(builtin("gaussian", cov=0.25), (-4, 4), 4096)
    x, y = lab.sample_pairs(-3, 3, 10_000, 2)
    Tx, _ = quantile_map_1d(mu, nu, x[:, 0])
    Ty, _ = quantile_map_1d(mu, nu, y[:, 0])
    q, c = lab.check_map_regularity(x, y, Tx, Ty, md.Quadratic(0.5))
    assert q.slack >= -1e-3 and c.slack >= -1e-3


def test_coincident_pairs_are_skipped():
    x = np.array([0.0, 1.0])
    q, c = lab.check_map_regularity(x, x, 2 * x, 2 * x, md.Quadratic(1.0))
    assert "empty" in q.flags and q.passed and c.passed


def test_sample_pairs_shapes_and_box():
    x, y = lab.sample_pairs([-1, 0], [1, 2], 200, 3, dim=2)
    assert x.shape == y.shape == (200, 2)
    assert np.all((y >= [-1, 0]) & (y <= [1, 2]))
    corner = y[40:50]
    assert np.all(np.isin(corner[:, 0], [-1, 1]) & np.isin(corner[:, 1], [0, 2]))


def test_holder_of_linear_map():
    x, y = lab.sample_pairs(-1, 1, 200, 4)
    c, _ = lab.holder_constant(x, y, 2.5 * x, 2.5 * y, 1.0)
    assert c == pytest.approx(2.5, rel=1e-12)


def test_holder_of_square_root():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 4, 1000)
    y = rng.uniform(0, 4, 1000)
    y[:100] = 10.0 ** rng.uniform(-8, -2, 100)
    x[:100] = 0.0
    c, w = lab.holder_constant(x, y, np.sqrt(x), np.sqrt(y), 0.5)
    assert 0.98 <= c <= 1.0 + 1e-12
    assert min(w["x"][0], w["y"][0]) == 0.0


def test_holder_exponent_domain():
    with pytest.raises(ValueError):
        lab.holder_constant([0.0], [1.0], [0.0], [1.0], 1.5)


def test_kolesnikov_constant_exponential_to_gaussian():
    assert lab.kolesnikov_constant(1, 2, 1, 1) == pytest.approx(2 ** (1 / 3))
    with pytest.raises(ValueError):
        lab.kolesnikov_constant(3, 2, 1, 1)


def test_lipschitz_radial_to_gaussian_holder():
    mu = discretize(builtin("lipschitz_radial", L=1.0), (-40, 40), 20001)
    nu = discretize(builtin("gaussian", cov=1.0), (-8, 8), 4001)
    x, y = lab.sample_pairs(-10, 10, 10_000, 6)
    Tx, _ = quantile_map_1d(mu, nu, x[:, 0])
    Ty, _ = quantile_map_1d(mu, nu, y[:, 0])
    rep = lab.check_holder(x, y, Tx, Ty, 0.5, 8 * math.sqrt(2) / 3)
    assert rep.passed


def test_growth_of_half_map():
    x = np.linspace(-5, 5, 101)
    rep = lab.check_growth(x, x / 2, 0.0, md.Quadratic(0.5), md.Quadratic(2.0))
    assert rep.slack == pytest.approx(0.0, abs=1e-9)
    assert rep.witness["x"][0] == 0.0


def test_growth_at_origin_only():
    rep = lab.check_growth(np.array([0.0]), np.array([0.3]), 0.3, md.Quadratic(1.0), md.Quadratic(1.0))
    assert rep.slack == pytest.approx(0.0, abs=1e-12)


def test_cauchy_to_gaussian_growth():
    mu = discretize(builtin("cauchy", n=1), (-400, 400), 200_001)
    nu = discretize(builtin("gaussian", cov=1.0), (-9, 9), 4001)
    x = np.linspace(-20, 20, 801)
    Tx, _ = quantile_map_1d(mu, nu, x)
    T0, _ = quantile_map_1d(mu, nu, np.array([0.0]))
    sig = builtin("cauchy", n=1).declared_sigma
    rep = lab.check_growth(x, Tx, T0[0], sig, md.Quadratic(1.0))
    assert rep.passed


def test_identity_is_exact_isometry():
    x, y = lab.sample_pairs(-1, 1, 100, 7)
    rep = lab.check_approximate_isometry(x, y, x, y, 0.0)
    assert rep.slack == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        lab.check_approximate_isometry(x, y, x, y, -1.0)


def test_affine_growth():
    x = np.linspace(-3, 3, 7)
    rep = lab.check_affine_growth(x, x + 1.0, 2.0)
    assert rep.slack == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# subspaces


def line_pair(deg, n=4001):
    th = math.radians(deg)
    mu = discretize(builtin("subspace_gaussian", frame=[[1.0], [0.0]], cov=1.0), None, n)
    nu = discretize(builtin("subspace_gaussian", frame=[[math.cos(th)], [math.sin(th)]], cov=0.25), None, n)
    return mu, nu


@pytest.mark.parametrize("deg,bound", [(0, 0.5), (60, 0.25), (90, 0.0), (150, 0.5 * math.cos(math.radians(30)))])
def test_subspace_contraction(deg, bound):
    mu, nu = line_pair(deg)
    rep = lab.check_subspace_contraction(mu, nu, 1.0, 4.0, pairs=4000, span=(-3, 3))
    assert rep.witness["bound"] == pytest.approx(bound, abs=1e-15)
    assert rep.passed


def test_orthogonal_lines_give_a_constant_projection():
    mu, nu = line_pair(90)
    rep = lab.check_subspace_contraction(mu, nu, 1.0, 4.0, pairs=2000, span=(-3, 3))
    assert rep.witness["quotient"] <= 1e-12


def test_subspace_needs_frames():
    m = discretize(builtin("gaussian", cov=1.0), (-3, 3), 16)
    with pytest.raises(ValueError):
        lab.check_subspace_contraction(m, m, 1.0, 1.0)


# ---------------------------------------------------------------------------
# grid derivatives


def test_fd_hessian_exact_on_quadratics():
    ax = np.linspace(-1, 1, 21)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    f = 1.5 * X**2 + 0.7 * X * Y + 0.2 * Y**2
    H = lab.fd_hessian(f, ax[1] - ax[0])
    assert np.allclose(H, [[3.0, 0.7], [0.7, 0.4]], atol=1e-10)
    assert np.allclose(lab.fd_laplacian(f, ax[1] - ax[0]), 3.4, atol=1e-10)


def test_cubic_interpolation_exact_on_cubics():
    ax = np.arange(10.0)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    f = X**3 - 2 * X * Y**2 + Y**3
    c = np.random.default_rng(8).uniform(1, 7, size=(50, 2))
    ref = c[:, 0] ** 3 - 2 * c[:, 0] * c[:, 1] ** 2 + c[:, 1] ** 3
    assert np.allclose(lab.interpolate_cubic(f, c), ref, atol=1e-9)
    with pytest.raises(ValueError):
        lab.interpolate_cubic(f, np.array([[0.5, 4.0]]))


def test_aniso_hessian_equality_case():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    B = np.array([[1.0, 0.0], [0.0, 4.0]])
    T = gaussian_map(A, B)
    ax = np.linspace(-2, 2, 33)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    P = np.stack([X, Y], -1)
    phi = 0.5 * np.einsum("...i,ij,...j->...", P, T, P)
    rep = lab.check_aniso_hessian(phi, ax[1] - ax[0], T, 1e-6, axes=(ax, ax))
    assert abs(rep.slack) <= 1e-6 and rep.passed
    assert "richardson" in rep.flags


def test_aniso_hessian_identity():
    ax = np.linspace(-1, 1, 9)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    rep = lab.check_aniso_hessian(0.5 * (X**2 + Y**2), ax[1] - ax[0], np.eye(2))
    assert abs(rep.slack) <= 1e-9


def test_aniso_hessian_grid_too_coarse():
    with pytest.raises(ValueError):
        lab.check_aniso_hessian(np.zeros((4, 8)), 0.1, np.eye(2))


def test_superharmonic_half_square_norm():
    ax = np.linspace(-2, 2, 41)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    lap, mv = lab.check_superharmonic(0.5 * (X**2 + Y**2), ax[1] - ax[0], 1.0)
    assert abs(lap.slack) < 1e-9 and abs(mv.slack) < 1e-9


def test_superharmonic_caffarelli_equality():
    ax = np.linspace(-2, 2, 41)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    lap, mv = lab.check_superharmonic(0.25 * (X**2 + Y**2), ax[1] - ax[0], 0.5)
    assert abs(lap.slack) <= 1e-6 and abs(mv.slack) <= 1e-6


def test_superharmonic_detects_excess():
    ax = np.linspace(-2, 2, 41)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    lap, mv = lab.check_superharmonic(0.5 * (X**2 + Y**2), ax[1] - ax[0], 0.9)
    assert not lap.passed and not mv.passed


def test_superharmonic_three_dimensions():
    ax = np.linspace(-1, 1, 21)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    lap, mv = lab.check_superharmonic(0.5 * (X**2 + Y**2 + Z**2), ax[1] - ax[0], 1.0, radii_cells=(1, 2))
    assert abs(lap.slack) < 1e-9 and abs(mv.slack) < 1e-9


# ---------------------------------------------------------------------------
# concentration and entropic constants


def test_concentration_gaussian_equality():
    g = discretize(builtin("gaussian", cov=0.5), (-10, 10), 8001)
    conc, var = lab.check_concentration_1d(g, 0.0, 2.0)
    assert conc.slack >= -1e-4
    assert var.slack == pytest.approx(0.0, abs=1e-6)


def test_concentration_at_zero_radius():
    nu = discretize(builtin("log_lip_gaussian", a="sin", L=1.0), (-10, 10), 4001)
    conc, _ = lab.check_concentration_1d(nu, 1.0, 1.0, r_grid=[0.0])
    assert conc.slack == pytest.approx(0.0, abs=1e-12)


def test_concentration_log_lipschitz():
    nu = discretize(builtin("log_lip_gaussian", a="sin", L=1.0), (-10, 10), 4001)
    conc, var = lab.check_concentration_1d(nu, 1.0, 1.0)
    assert conc.slack >= -1e-3 and var.slack >= -1e-3


def test_concentration_is_one_dimensional():
    m = discretize(builtin("gaussian", cov=1.0, dim=2), (-3, 3), 8)
    with pytest.raises(ValueError):
        lab.check_concentration_1d(m, 0.0, 1.0)


def test_log_lipschitz_constant_value():
    assert lab.log_lipschitz_constant(1.0, 1.0) == pytest.approx(64 + 16 * math.sqrt(2 / math.pi))
    assert lab.log_lipschitz_constant(1.0, 1.0) == pytest.approx(76.766153, abs=1e-6)


def test_entropic_constant_solves_its_quadratic():
    a_v, b_w, L, eps = 1.0, 2.0, 0.5, 0.1
    C = lab.log_lipschitz_constant(L, b_w)
    a = lab.entropic_hessian_constant(a_v, b_w, L, eps)
    # eps beta a^2 - (C - k) a - C a_v eps = 0 with k = eps^2 a_v b_w
    k = eps**2 * a_v * b_w
    assert eps * b_w * a * a - (C - k) * a - C * a_v * eps == pytest.approx(0.0, abs=1e-9)


def test_entropic_hessian_fallback_at_zero_lipschitz():
    r = np.linspace(0, 2, 9)
    est = md.Tabulated(r, 0.25 * r**2)
    rep = lab.check_entropic_hessian_bound(est, 1.0, 4.0, 0.0, 0.1)
    assert "L=0 fallback" in rep.flags
    assert rep.slack == pytest.approx(0.0, abs=1e-9)


def test_entropic_hessian_quadratic_bound():
    r = np.linspace(0, 2, 9)
    a = lab.entropic_hessian_constant(1.0, 1.0, 1.0, 0.1)
    rep = lab.check_entropic_hessian_bound(md.Tabulated(r, 0.5 * a * r**2), 1.0, 1.0, 1.0, 0.1)
    assert rep.slack == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.0, 3.0), st.floats(0.01, 2.0))
def test_entropic_constant_is_positive_and_finite(a_v, b_w, L, eps):
    a = lab.entropic_hessian_constant(a_v, b_w, L, eps)
    assert math.isfinite(a) and a >= 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=30))
def test_worst_slack_is_the_minimum(vals):
    rep = lab._worst("c", vals, lambda i: {"i": i}, 1e-3)
    assert rep.slack == min(vals)
    assert vals[rep.witness["i"]] == rep.slack
    assert rep.passed == (min(vals) >= -1e-3)


def test_worst_treats_nan_as_violation():
    rep = lab._worst("c", [1.0, float("nan")], lambda i: {"i": i}, 1e-3)
    assert not rep.passed and rep.witness["i"] == 1


def test_brute_triples_helper_agrees_with_itertools():
    f = np.arange(6.0) ** 2
    n = sum(1 for _ in itertools.product(range(6 - 3), range(1, 3)))
    assert len(brute_triples(f, None, 3)) == n

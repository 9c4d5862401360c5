import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from otreg import prekopa as pk

Z = np.linspace(-8, 8, 801)
HALF = np.array([0.5, 0.5])


def gaussian_instance(m, s=(1.0, 1.0), lam=HALF, z=Z):
    F = np.array([-((z - mi) ** 2) / (2 * si**2) for mi, si in zip(m, s)])
    return pk.PLInstance(z, lam, F, -((z - np.dot(lam, m)) ** 2) / 2)


def perturbed_instance(rng, z=Z, amp=0.3):
    k = rng.uniform(0.5, 3.0, size=2)
    F = np.array([-(z**2) / 2 + amp * np.sin(ki * z) for ki in k])
    return pk.PLInstance(z, HALF, F, -(z**2) / 2)


def linprog_optimum(a, b, C):
    """Transport LP solved by a general-purpose simplex, as a second oracle."""
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n : (i + 1) * n] = 1
    for j in range(n):
        A[m + j, j::n] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


# ---------------------------------------------------------------------------
# instances


def test_instance_validation():
    F = np.zeros((2, Z.size))
    with pytest.raises(ValueError):
        pk.PLInstance(Z, [0.5, 0.6], F, Z * 0)
    with pytest.raises(ValueError):
        pk.PLInstance(Z**3, HALF, F, Z * 0)
    with pytest.raises(ValueError):
        pk.PLInstance(Z, HALF, F[:1], Z * 0)
    bad = F.copy()
    bad[1] = -np.inf
    with pytest.raises(ValueError):
        pk.PLInstance(Z, HALF, bad, Z * 0)


def test_instance_is_read_only():
    inst = gaussian_instance([0.0, 1.0])
    with pytest.raises(ValueError):
        inst.f_tables[0, 0] = 1.0


def test_instance_round_trip(tmp_path):
    F = np.array([-(Z**2) / 2, np.where(np.abs(Z) < 3, 0.0, -np.inf)])
    inst = pk.PLInstance(Z, HALF, F, -(Z**2) / 2)
    pk.save_instance(inst, tmp_path / "i.json")
    back = pk.load_instance(tmp_path / "i.json")
    assert np.array_equal(back.f_tables, inst.f_tables) and np.array_equal(back.h_table, inst.h_table)


def test_cubic_interpolation_of_tables():
    z = np.linspace(-2, 2, 41)
    x = np.linspace(-1.9, 1.9, 37)
    assert np.allclose(pk.interp_table(z, z**3 - z, x), x**3 - x, atol=1e-12)
    vals = np.where(z < 0, -np.inf, z)
    out = pk.interp_table(z, vals, np.array([-0.05, 0.55]))
    assert np.isneginf(out[0]) and out[1] == pytest.approx(0.55)


# ---------------------------------------------------------------------------
# couplings


def test_identical_marginals_give_diagonal_coupling():
    inst = gaussian_instance([0.3, 0.3])
    cp = pk.barycentric_coupling(inst)
    assert np.max(np.abs(cp.start[0] - cp.start[1])) < 1e-14
    assert cp.cost(HALF) == pytest.approx(0.0, abs=1e-20)


def test_coupling_marginals_are_exact():
    inst = perturbed_instance(np.random.default_rng(0))
    cp = pk.barycentric_coupling(inst)
    for i in range(2):
        ref = np.diff(pk._grid_cdf(Z, inst.f_tables[i]))
        assert np.max(np.abs(cp.cell_masses(i, Z) - ref)) < 1e-14
    assert cp.pieces().sum() == pytest.approx(1.0, abs=1e-15)


def test_gaussian_coupling_cost_is_scaled_wasserstein():
    # comonotone Gaussians: cost = 2 l1 l2 ((m1 - m2)^2 + (s1 - s2)^2)
    z = np.linspace(-12, 12, 4001)
    inst = gaussian_instance([0.5, -1.0], (1.0, 1.5), z=z)
    cost = pk.barycentric_coupling(inst).cost(HALF)
    assert cost == pytest.approx(0.5 * (1.5**2 + 0.5**2), rel=1e-4)


def test_three_marginals_supported_four_rejected():
    F3 = np.array([-((Z - m) ** 2) / 2 for m in (-1, 0, 1)])
    inst3 = pk.PLInstance(Z, [0.2, 0.3, 0.5], F3, -(Z**2) / 2)
    cp = pk.barycentric_coupling(inst3)
    assert cp.start.shape[0] == 3
    F4 = np.vstack([F3, F3[:1]])
    inst4 = pk.PLInstance(Z, [0.25] * 4, F4, -(Z**2) / 2)
    with pytest.raises(ValueError):
        pk.barycentric_coupling(inst4)


def test_comonotone_plan_two_atoms_beats_antitone():
    C = pk.pair_cost_matrix([0.0, 1.0], [0.0, 1.0])
    P = pk.comonotone_plan(HALF, HALF)
    assert np.allclose(P, np.diag(HALF))
    assert np.sum(P * C) <= np.sum(np.fliplr(P) * C)


def test_comonotone_plan_marginals():
    rng = np.random.default_rng(1)
    a, b = rng.random(5), rng.random(7)
    a, b = a / a.sum(), b / b.sum()
    P = pk.comonotone_plan(a, b)
    assert np.allclose(P.sum(1), a, atol=1e-15) and np.allclose(P.sum(0), b, atol=1e-15)
    with pytest.raises(ValueError):
        pk.comonotone_plan(a, 2 * b)


def test_comonotone_matches_permutation_enumeration():
    rng = np.random.default_rng(2)
    a = np.full(8, 1 / 8)
    for _ in range(5):
        x, y = np.sort(rng.normal(size=8)), np.sort(rng.normal(size=8))
        C = pk.pair_cost_matrix(x, y)
        v, P = pk.lp_vertex_optimum(a, a, C)
        assert abs(np.sum(pk.comonotone_plan(a, a) * C) - v) <= 1e-12
        assert np.allclose(P.sum(0), a)


def test_comonotone_matches_tree_enumeration():
    rng = np.random.default_rng(3)
    for m, n in [(4, 4), (3, 6), (2, 7)]:
        x, y = np.sort(rng.normal(size=m)), np.sort(rng.normal(size=n))
        a, b = rng.random(m), rng.random(n)
        a, b = a / a.sum(), b / b.sum()
        C = pk.pair_cost_matrix(x, y)
        v, _ = pk.lp_vertex_optimum(a, b, C)
        assert abs(np.sum(pk.comonotone_plan(a, b) * C) - v) <= 1e-12


def test_vertex_enumeration_agrees_with_simplex():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=4), rng.normal(size=5)
    a, b = rng.random(4), rng.random(5)
    a, b = a / a.sum(), b / b.sum()
    C = np.abs(x[:, None] - y[None, :])  # not supermodular-equivalent: any optimum counts
    v, _ = pk.lp_vertex_optimum(a, b, C)
    assert v == pytest.approx(linprog_optimum(a, b, C), abs=1e-12)


def test_vertex_enumeration_limits():
    with pytest.raises(ValueError):
        pk.lp_vertex_optimum(np.full(10, 0.1), np.full(10, 0.1), np.zeros((10, 10)))
    a = np.array([0.2, 0.3, 0.5])
    b = np.array([0.1, 0.1, 0.2, 0.2, 0.1, 0.1, 0.2])
    with pytest.raises(ValueError):
        pk.lp_vertex_optimum(a, b, np.zeros((3, 7)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_comonotone_is_optimal_on_small_marginals(m, n, seed):
    rng = np.random.default_rng(seed)
    x, y = np.sort(rng.normal(size=m)), np.sort(rng.normal(size=n))
    a, b = rng.random(m) + 0.05, rng.random(n) + 0.05
    a, b = a / a.sum(), b / b.sum()
    C = pk.pair_cost_matrix(x, y)
    como = float(np.sum(pk.comonotone_plan(a, b) * C))
    assert como <= linprog_optimum(a, b, C) + 1e-12


# ---------------------------------------------------------------------------
# quantitative inequality


def test_qpl_identical_functions():
    f = -(Z**2) / 2 + 0.3 * np.sin(2 * Z)
    inst = pk.PLInstance(Z, HALF, np.array([f, f]), f)
    res = pk.verify_qpl(inst)
    assert res.correction == pytest.approx(0.0, abs=1e-12)
    assert res.slack == pytest.approx(0.0, abs=1e-10)


def test_qpl_gaussian_equality():
    for m in ([0.0, 1.0], [-1.3, 0.4], [2.0, -2.0]):
        assert abs(pk.verify_qpl(gaussian_instance(m)).slack) <= 1e-6


def test_qpl_random_perturbations():
    rng = np.random.default_rng(5)
    worst = min(pk.verify_qpl(perturbed_instance(rng)).slack for _ in range(50))
    assert worst >= -1e-3


def test_qpl_shift_invariance():
    inst = perturbed_instance(np.random.default_rng(6))
    base = pk.verify_qpl(inst).slack
    for i, c in itertools.product((0, 1), (-7.0, 0.3, 12.0)):
        assert pk.verify_qpl(inst.shifted(i, c)).slack == pytest.approx(base, abs=1e-10)


def test_qpl_flags_unreachable_barycenter():
    h = np.where(np.abs(Z) < 0.5, -(Z**2) / 2, -np.inf)
    inst = pk.PLInstance(Z, HALF, np.array([-(Z**2) / 2, -(Z**2) / 2]), h)
    res = pk.verify_qpl(inst)
    assert res.slack == math.inf and res.flags


def test_qpl_three_marginals_gaussian_equality():
    m = np.array([-1.0, 0.5, 2.0])
    lam = np.array([0.2, 0.3, 0.5])
    F = np.array([-((Z - mi) ** 2) / 2 for mi in m])
    inst = pk.PLInstance(Z, lam, F, -((Z - lam @ m) ** 2) / 2)
    assert abs(pk.verify_qpl(inst).slack) <= 1e-6


# ---------------------------------------------------------------------------
# entropy along the barycenter


def test_entropy_of_gaussian_on_grid():
    z = np.linspace(-10, 10, 4001)
    inst = gaussian_instance([0.0, 0.0], (1.0, 1.0), z=z)
    _, H_bar, Hs = pk.entropy_convexity_slack(inst)
    ref = -0.5 * math.log(2 * math.pi * math.e)  # int p log p for N(0, 1)
    assert Hs[0] == pytest.approx(ref, abs=1e-5) and H_bar == pytest.approx(ref, abs=1e-5)


def test_entropy_convexity_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(10):
        s, _, _ = pk.entropy_convexity_slack(perturbed_instance(rng, amp=0.8))
        assert s >= -1e-6


def test_entropy_convexity_gaussians_of_different_widths():
    z = np.linspace(-16, 16, 3201)
    inst = gaussian_instance([0.0, 1.0], (0.5, 2.0), z=z)
    s, H_bar, _ = pk.entropy_convexity_slack(inst)
    # barycenter of comonotone Gaussians has width (0.5 + 2) / 2
    assert H_bar == pytest.approx(-0.5 * math.log(2 * math.pi * math.e * 1.25**2), abs=1e-4)
    assert s > 0


# ---------------------------------------------------------------------------
# classical inequality


def g(q):
    return np.exp(-(q**2))


Y = np.linspace(-8, 8, 801)


def test_classical_identical():
    res = pk.verify_classical_pl(Y, g(Y), g(Y), g, 0.5)
    assert res.hypothesis_ok and abs(res.slack) <= 1e-8


def test_classical_shifted_gaussians():
    res = pk.verify_classical_pl(Y, g(Y - 1.0), g(Y + 2.0), lambda q: g(q + 0.5), 0.5)
    assert res.hypothesis_ok and res.slack >= -1e-8


def test_classical_hypothesis_failure_is_not_a_violation():
    res = pk.verify_classical_pl(Y, g(Y - 1.0), g(Y + 2.0), lambda q: 0.5 * g(q + 0.5), 0.5)
    assert not res.hypothesis_ok and res.hypothesis_slack < 0


@pytest.mark.parametrize("t", [0.5, 0.25, 1 / 3])
def test_classical_random_log_concave_with_sup_convolution(t):
    y = np.linspace(-8, 8, 401)
    rng = np.random.default_rng(8)
    worst = math.inf
    for _ in range(20):
        a = rng.uniform(0.3, 3.0, 2)
        c = rng.uniform(-2, 2, 2)
        f0, f1 = np.exp(-a[0] * (y - c[0]) ** 2), np.exp(-a[1] * np.abs(y - c[1]) ** 1.5)
        res = pk.verify_classical_pl(y, f0, f1, pk.sup_convolution(y, f0, f1, t), t)
        assert res.hypothesis_ok
        worst = min(worst, res.slack)
    assert worst >= -1e-6


def test_sup_convolution_of_gaussians():
    # at half-step points the two grid arguments differ by a cell, costing e^{-h^2/4}
    h = Y[1] - Y[0]
    hz, hv = pk.sup_convolution(Y, g(Y - 1.0), g(Y + 1.0), 0.5)
    inner = np.abs(hz) < 3
    z, v = hz[inner], hv[inner]
    assert np.all(v <= g(z) * (1 + 1e-12))
    assert np.all(v >= g(z) * math.exp(-(h**2) / 4) * (1 - 1e-12))
    on_grid = np.isclose(z / h, np.round(z / h))
    assert np.allclose(v[on_grid], g(z[on_grid]), rtol=1e-12)


def test_classical_t_domain():
    with pytest.raises(ValueError):
        pk.verify_classical_pl(Y, g(Y), g(Y), g, 1.0)
    with pytest.raises(ValueError):
        pk.verify_classical_pl(Y, -g(Y), g(Y), g, 0.5)

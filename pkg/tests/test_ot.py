"""Transport-distance solver checks against LP and closed-form oracles."""

import numpy as np
import pytest

import measinv.ot as MO
from measinv.errors import NumericalError
from measinv.grid import DensityField, Grid
from measinv.ot import CostSpec, brute_force_lp, c_transform, pairwise_cost, sinkhorn, transport_cost_exact_1d


def unit_grid(counts):
    dim = len(counts)
    return Grid((0.0,) * dim, (1.0,) * dim, counts)


def random_pair(grid, seed, zero_frac=0.0):
    rng = np.random.default_rng(seed)
    a = rng.random(grid.n) + 0.02
    b = rng.random(grid.n) + 0.02
    if zero_frac > 0:
        a[rng.random(grid.n) < zero_frac] = 0.0
        b[rng.random(grid.n) < zero_frac] = 0.0
    a /= a.sum()
    b /= b.sum()
    return DensityField(grid, a), DensityField(grid, b)


def test_pairwise_cost_hand_values():
    xa = np.array([[0.0], [1.0], [3.0]])
    C2 = pairwise_cost(xa, xa, 2.0)
    assert np.array_equal(C2, [[0, 1, 9], [1, 0, 4], [9, 4, 0]])
    C1 = pairwise_cost(xa, xa, 1.0)
    assert np.allclose(C1, [[0, 1, 3], [1, 0, 2], [3, 2, 0]])


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(p=0.5)
    with pytest.raises(ValueError):
        CostSpec(omega=2.0)
    with pytest.raises(ValueError):
        CostSpec(omega=0.0)
    with pytest.raises(ValueError):
        CostSpec(eta_floor_scale=0.2, eta_start_scale=0.1)
    with pytest.raises(ValueError):
        CostSpec(eta_shrink=1.0)
    with pytest.raises(ValueError):
        CostSpec(marginal_tol=0.0)
    with pytest.raises(ValueError):
        CostSpec(max_iters=0)
    with pytest.raises(ValueError):
        CostSpec(polish_rounds=0)


def test_eta_schedule_geometric_to_floor():
    grid = unit_grid((4, 4, 4))
    cost = CostSpec()
    etas = cost.eta_schedule(grid)
    scale = grid.diameter() ** 2
    assert etas[0] == pytest.approx(cost.eta_start_scale * scale)
    assert etas[-1] == pytest.approx(cost.eta_floor(grid))
    ratios = np.diff(np.log(etas[:-1]))
    assert np.allclose(ratios, np.log(cost.eta_shrink))
    assert all(e1 > e2 for e1, e2 in zip(etas, etas[1:]))


def test_input_validation():
    grid = unit_grid((3, 3, 3))
    mu, nu = random_pair(grid, 0)
    bad = mu.values.copy()
    bad[0] = -1e-3
    with pytest.raises(ValueError):
        sinkhorn(DensityField(grid, bad), nu, CostSpec())
    with pytest.raises(ValueError):
        sinkhorn(mu, DensityField(grid, 2.0 * nu.values), CostSpec())
    other = Grid((0.0,) * 3, (2.0,) * 3, (3, 3, 3))
    with pytest.raises(ValueError):
        sinkhorn(mu, DensityField(other, nu.values), CostSpec())


def lp_reference(mu, nu, p):
    pts = MO._grid_points(mu.grid)
    C = pairwise_cost(pts, pts, p)
    return brute_force_lp(mu.values, nu.values, C), C


def test_sinkhorn_near_lp_with_certificates():
    # entropic lower bound within the documented gap of the exact cost,
    # and the rounded pair must itself be dual feasible
    grid = unit_grid((3, 3, 3))
    cost = CostSpec()
    worst = 0.0
    for seed in range(6):
        mu, nu = random_pair(grid, seed, zero_frac=0.2 if seed % 2 else 0.0)
        lp, C = lp_reference(mu, nu, cost.p)
        sk = sinkhorn(mu, nu, cost)
        assert sk.cost <= lp.cost + 1e-12
        gap = (lp.cost - sk.cost) / max(lp.cost, 1e-30)
        worst = max(worst, gap)
        du = sk.potentials
        slack = (du.phi[:, None] + du.psi[None, :] - C).max()
        assert slack <= 1e-9
        assert sk.cost == pytest.approx(du.objective(mu.values, nu.values))
    assert worst < 0.02


def test_sinkhorn_symmetry():
    grid = unit_grid((3, 3, 3))
    cost = CostSpec()
    mu, nu = random_pair(grid, 11)
    ab = sinkhorn(mu, nu, cost).cost
    ba = sinkhorn(nu, mu, cost).cost
    assert abs(ab - ba) <= 0.02 * max(ab, ba)


def test_identical_marginals_cost_zero():
    grid = unit_grid((4, 4, 4))
    mu, _ = random_pair(grid, 7, zero_frac=0.3)
    res = sinkhorn(mu, mu, CostSpec())
    assert res.cost == pytest.approx(0.0, abs=1e-10)
    assert res.marginal_err < CostSpec().marginal_tol


def test_warm_start_accelerates():
    grid = unit_grid((4, 4, 4))
    mu, nu = random_pair(grid, 3)
    cost = CostSpec()
    first = sinkhorn(mu, nu, cost)
    second = sinkhorn(mu, nu, cost, warm=first.potentials)
    assert second.iterations < first.iterations // 2
    assert second.cost == pytest.approx(first.cost, rel=1e-6)


def test_frozen_iteration_count_is_deterministic():
    grid = unit_grid((4, 4, 4))
    mu, nu = random_pair(grid, 3)
    cost = CostSpec(frozen_iters=40)
    r1 = sinkhorn(mu, nu, cost)
    r2 = sinkhorn(mu, nu, cost)
    assert r1.cost == r2.cost
    assert r1.iterations == r2.iterations


def test_unreachable_tolerance_raises():
    grid = unit_grid((4, 4, 4))
    mu, nu = random_pair(grid, 3)
    with pytest.raises(NumericalError):
        sinkhorn(mu, nu, CostSpec(marginal_tol=1e-300, max_iters=30))


def test_dense_path_size_guard():
    grid = unit_grid((17, 17, 17))
    mu, nu = random_pair(grid, 0)
    with pytest.raises(ValueError):
        sinkhorn(mu, nu, CostSpec(p=1.5))


def test_lp_plan_certificates():
    grid = unit_grid((3, 3))
    mu, nu = random_pair(grid, 5)
    lp, C = lp_reference(mu, nu, 2.0)
    r, c = lp.plan.marginals(grid.n, grid.n)
    assert np.abs(r - mu.values).max() < 1e-12
    assert np.abs(c - nu.values).max() < 1e-12
    assert lp.plan.masses.min() >= 0
    primal = float((lp.plan.masses * C[lp.plan.rows, lp.plan.cols]).sum())
    assert primal == pytest.approx(lp.cost, abs=1e-12)
    dual = float(lp.u @ mu.values + lp.v @ nu.values)
    assert dual == pytest.approx(lp.cost, abs=1e-9)


def test_c_transform_properties():
    for counts, p in (((4, 4, 4), 2.0), ((5, 5), 1.5)):
        grid = unit_grid(counts)
        rng = np.random.default_rng(2)
        phi = rng.normal(size=grid.n)
        cost = CostSpec(p=p)
        pts = MO._grid_points(grid)
        C = pairwise_cost(pts, pts, p)
        psi = c_transform(phi, cost, grid)
        assert (phi[:, None] + psi[None, :] - C).max() <= 1e-12
        # the double transform dominates the original potential and is
        # a fixed point from then on
        phi2 = c_transform(psi, cost, grid)
        assert (phi2 - phi).min() >= -1e-12
        psi2 = c_transform(phi2, cost, grid)
        assert np.abs(psi2 - psi).max() <= 1e-12


def test_c_transform_rejects_bad_input():
    grid = unit_grid((3, 3))
    with pytest.raises(ValueError):
        c_transform(np.zeros(5), CostSpec(), grid)
    with pytest.raises(ValueError):
        c_transform(np.full(grid.n, np.inf), CostSpec(), grid)


def test_exact_1d_matches_lp():
    n = 25
    grid = Grid((0.0,), (1.0,), (n,))
    x = grid.centers(0)
    rng = np.random.default_rng(9)
    for p in (2.0, 1.0, 1.5):
        a = rng.random(n) + 0.01
        b = rng.random(n) + 0.01
        a /= a.sum()
        b /= b.sum()
        C = pairwise_cost(x[:, None], x[:, None], p)
        lp = brute_force_lp(a, b, C)
        w, du = transport_cost_exact_1d(a, b, x, p)
        assert abs(w - lp.cost) < 1e-10
        assert du.objective(a, b) == pytest.approx(w, abs=1e-10)
        assert (du.phi[:, None] + du.psi[None, :] - C).max() <= 1e-9


def test_exact_1d_pure_shift():
    # moving an indicator block by a distance s costs s^p exactly
    grid = Grid((0.0,), (1.0,), (50,))
    x = grid.centers(0)
    mu = np.where(x < 0.2, 1.0, 0.0)
    mu /= mu.sum()
    nu = np.where((x >= 0.5) & (x < 0.7), 1.0, 0.0)
    nu /= nu.sum()
    w2, _ = transport_cost_exact_1d(mu, nu, x, 2.0)
    assert w2 == pytest.approx(0.25, abs=1e-12)
    w1, _ = transport_cost_exact_1d(mu, nu, x, 1.0)
    assert w1 == pytest.approx(0.5, abs=1e-12)


def two_hump_profile(x, theta):
    left = np.where((x >= 0.0) & (x < 1.0), 1.0, 0.0)
    mid = np.where((x >= 2.0) & (x < 3.0), 1.0, 0.0)
    return (0.5 + theta) * left / left.sum() + (0.5 - theta) * mid / mid.sum()


def test_two_hump_asymmetric_sensitivity():
    # mass reweighting between two separated blocks: the cost is exactly
    # 1 at theta = 0 and the one-sided difference quotients split, the
    # increasing side steeper than the decreasing one
    n = 400
    grid = Grid((0.0,), (4.0,), (n,))
    x = grid.centers(0)
    right = np.where((x >= 1.0) & (x < 2.0), 1.0, 0.0)
    far = np.where((x >= 3.0) & (x < 4.0), 1.0, 0.0)
    target = 0.5 * right / right.sum() + 0.5 * far / far.sum()
    w0, _ = transport_cost_exact_1d(two_hump_profile(x, 0.0), target, x, 2.0)
    assert w0 == pytest.approx(1.0, abs=2e-3)
    th = 0.02
    wr, _ = transport_cost_exact_1d(two_hump_profile(x, th), target, x, 2.0)
    wl, _ = transport_cost_exact_1d(two_hump_profile(x, -th), target, x, 2.0)
    assert (wr - w0) / th >= 4.8
    assert (wl - w0) / (-th) <= 3.2

"""Line search and descent loops: toy rigs plus a short real inversion."""

import csv

import numpy as np
import pytest

import measinv as mi
from measinv.dynamics import ParameterVector
from measinv.gradient import LossConfig, build_forward
from measinv.grid import Grid
from measinv.optimize import (
    BacktrackingConfig,
    InferenceConfig,
    backtracking_step,
    coordinate_descent,
    gradient_descent,
)


def double_well_1d():
    # v = -4x(x^2 - a): stationary mass sits in two wells at +-sqrt(a),
    # so the parameter moves the density shape smoothly on a fine grid
    def vel(theta, x):
        return -4.0 * x * (x * x - theta)

    def jac(theta, x):
        return (4.0 * x)[None, :, :]

    return mi.custom_system(vel, jac, ("a",), ((-2.0, 2.0),), dim=1)


@pytest.fixture(scope="module")
def well_rig():
    system = double_well_1d()
    grid = Grid((-2.0,), (2.0,), (64,))
    loss = LossConfig(grid=grid, epsilon=1e-4)
    rho_star = build_forward(system, np.array([0.9]), loss).rho
    return system, rho_star, loss


def start_point():
    return ParameterVector(np.array([0.55]), bounds=((0.1, 1.8),))


@pytest.fixture(scope="module")
def lorenz_rig():
    system = mi.make_system("lorenz")
    box = mi.DEFAULT_BOUNDS["lorenz"]
    grid = Grid.from_spacing(tuple(b[0] for b in box), tuple(b[1] for b in box), 3.0)
    loss = LossConfig(grid=grid, epsilon=1e-6)
    rho_star = build_forward(system, np.array([10.0, 28.0, 8.0 / 3.0]), loss).rho
    return system, rho_star, loss


def lorenz_start():
    bounds = ((0.5, 40.0), (1.0, 60.0), (0.3, 10.0))
    return ParameterVector(np.array([8.0, 26.0, 2.2]), bounds=bounds)


class TestBacktracking:
    def quad(self, theta):
        return float(((theta - 3.0) ** 2).sum())

    def test_accepts_descent_on_quadratic(self):
        theta = np.array([0.0])
        grad = 2.0 * (theta - 3.0)
        nxt, tau, f, st = backtracking_step(
            self.quad, theta, grad, -grad, BacktrackingConfig()
        )
        assert st == "accepted"
        assert tau > 0
        assert f < self.quad(theta)
        assert f == pytest.approx(self.quad(nxt))

    def test_zero_direction(self):
        theta = np.array([1.0])
        nxt, tau, f, st = backtracking_step(
            self.quad, theta, np.zeros(1), np.zeros(1), BacktrackingConfig()
        )
        assert st == "zero_gradient"
        assert tau == 0.0
        assert np.array_equal(nxt, theta)

    def test_fails_on_ascent_direction(self):
        theta = np.array([0.0])
        grad = 2.0 * (theta - 3.0)
        nxt, tau, f, st = backtracking_step(
            self.quad, theta, grad, +grad, BacktrackingConfig(max_halvings=5)
        )
        assert st == "line_search_failed"
        assert np.array_equal(nxt, theta)
        assert f == pytest.approx(self.quad(theta))

    def test_fails_when_no_decrease_exists(self):
        flat = lambda theta: 0.0  # noqa: E731
        nxt, tau, f, st = backtracking_step(
            flat, np.array([1.0]), np.array([1.0]), np.array([-1.0]),
            BacktrackingConfig(max_halvings=8),
        )
        assert st == "line_search_failed"

    def test_bound_clamp_judges_projected_step(self):
        theta = np.array([2.0])
        grad = 2.0 * (theta - 3.0)
        nxt, tau, f, st = backtracking_step(
            self.quad, theta, grad, -grad, BacktrackingConfig(), bounds=((0.0, 2.5),)
        )
        assert st == "accepted"
        assert nxt[0] <= 2.5
        assert f < self.quad(theta)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BacktrackingConfig(tau0=0.0)
        with pytest.raises(ValueError):
            BacktrackingConfig(beta=1.0)
        with pytest.raises(ValueError):
            BacktrackingConfig(sigma=1.0)
        with pytest.raises(ValueError):
            BacktrackingConfig(max_halvings=0)


def test_inference_config_validation(well_rig):
    _, _, loss = well_rig
    ok = dict(theta0=start_point(), loss=loss)
    with pytest.raises(ValueError):
        InferenceConfig(mode="both", **ok)
    with pytest.raises(ValueError):
        InferenceConfig(gradient_method="fd", **ok)
    with pytest.raises(ValueError):
        InferenceConfig(max_iters=0, **ok)
    with pytest.raises(ValueError):
        InferenceConfig(grad_tol=0.0, **ok)
    with pytest.raises(ValueError):
        InferenceConfig(coordinate_order="sorted", **ok)


def test_single_parameter_modes_agree(well_rig):
    # with one parameter a coordinate cycle is exactly one joint step,
    # so the accepted iterates must coincide
    system, rho_star, loss = well_rig
    base = dict(loss=loss, max_iters=8)
    tj = gradient_descent(
        system, rho_star, InferenceConfig(theta0=start_point(), mode="joint", **base)
    )
    tc = coordinate_descent(
        system, rho_star,
        InferenceConfig(theta0=start_point(), mode="coordinate", **base),
    )
    aj = np.array([r.theta for r in tj.records if r.iter == 0 or r.tau > 0])
    ac = np.array([r.theta for r in tc.records if r.iter == 0 or r.tau > 0])
    assert np.array_equal(aj, ac)
    assert tj.theta_final == tc.theta_final
    # both find the well parameter to coarse-operator accuracy
    assert abs(tj.theta_final[0] - 0.9) < 0.15


def test_runs_are_deterministic(well_rig):
    system, rho_star, loss = well_rig
    cfg = InferenceConfig(theta0=start_point(), mode="joint", loss=loss, max_iters=8)
    t1 = gradient_descent(system, rho_star, cfg)
    t2 = gradient_descent(system, rho_star, cfg)
    assert np.array_equal(t1.thetas(), t2.thetas())
    assert t1.f_final == t2.f_final
    assert t1.status == t2.status


def test_objective_is_monotone_along_trace(well_rig):
    system, rho_star, loss = well_rig
    tr = gradient_descent(
        system, rho_star,
        InferenceConfig(theta0=start_point(), mode="joint", loss=loss, max_iters=8),
    )
    fs = tr.fs()
    assert np.all(np.diff(fs) <= 1e-12)
    assert tr.f_final == fs[-1]


def test_grad_tol_reports_converged(well_rig):
    system, rho_star, loss = well_rig
    tr = gradient_descent(
        system, rho_star,
        InferenceConfig(
            theta0=ParameterVector(np.array([0.95]), bounds=((0.1, 1.8),)),
            loss=loss, max_iters=8, grad_tol=1e-2,
        ),
    )
    assert tr.status == "converged"
    assert len(tr.records) == 1


def test_early_stop(well_rig):
    system, rho_star, loss = well_rig
    tr = coordinate_descent(
        system, rho_star,
        InferenceConfig(theta0=start_point(), loss=loss, max_iters=8,
                        early_stop_loss=1e3),
    )
    assert tr.status == "early_stop"
    assert len(tr.records) == 1


def test_sensitivity_route_with_random_order(well_rig):
    system, rho_star, loss = well_rig
    tr = coordinate_descent(
        system, rho_star,
        InferenceConfig(theta0=start_point(), loss=loss, max_iters=6,
                        gradient_method="ift", coordinate_order="random", seed=3),
    )
    assert tr.status in ("max_iters", "line_search_failed", "converged")
    assert abs(tr.theta_final[0] - 0.9) < 0.15


def test_trace_csv_round_trip(well_rig, tmp_path):
    system, rho_star, loss = well_rig
    tr = gradient_descent(
        system, rho_star,
        InferenceConfig(theta0=start_point(), mode="joint", loss=loss, max_iters=4),
    )
    path = tmp_path / "trace.csv"
    tr.write_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == tr.header()
    assert len(rows) == 1 + len(tr.records)
    assert len(rows[0]) == 2 + tr.theta_final.size + 4
    back = np.array([float(r[2]) for r in rows[1:]])
    assert np.allclose(back, tr.thetas()[:, 0], rtol=1e-10)


def test_joint_descent_on_lorenz(lorenz_rig):
    system, rho_star, loss = lorenz_rig
    tr = gradient_descent(
        system, rho_star,
        InferenceConfig(theta0=lorenz_start(), mode="joint", loss=loss, max_iters=5),
    )
    fs = tr.fs()
    assert np.all(np.diff(fs) <= 1e-12)
    assert tr.f_final < 0.3 * fs[0]
    truth = np.array([10.0, 28.0, 8.0 / 3.0])
    assert np.linalg.norm(tr.theta_final - truth) < np.linalg.norm(
        lorenz_start().values - truth
    )


def test_coordinate_descent_on_lorenz(lorenz_rig):
    system, rho_star, loss = lorenz_rig
    tr = coordinate_descent(
        system, rho_star,
        InferenceConfig(theta0=lorenz_start(), loss=loss, max_iters=6),
    )
    fs = tr.fs()
    assert np.all(np.diff(fs) <= 1e-12)
    assert tr.f_final < 0.6 * fs[0]
    stepped = {r.k for r in tr.records if r.iter > 0}
    assert stepped <= {0, 1, 2}
    assert len(stepped) >= 2

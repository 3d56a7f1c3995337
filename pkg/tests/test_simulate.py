"""Euler DNS, noise models, subsampling, and occupation histograms."""

import numpy as np
import pytest

import measinv as mi
from measinv.simulate import NoiseSpec, integrate, occupation_histogram, subsample


@pytest.fixture
def lorenz_run(lorenz, lorenz_theta):
    return integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 2000)


def test_clean_run_is_deterministic(lorenz, lorenz_theta):
    a = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 500)
    b = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 500, seed=99)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.states.shape == (501, 3)
    assert a.times[0] == 0.0
    assert a.times[-1] == pytest.approx(0.5)


def test_euler_step_hand_value(lorenz, lorenz_theta):
    # one explicit step from x0: x1 = x0 + dt * v(x0)
    tr = integrate(lorenz, lorenz_theta, np.array([1.0, 2.0, 3.0]), 0.01, 1)
    v0 = mi.velocity(lorenz, lorenz_theta, np.array([[1.0, 2.0, 3.0]]))[0]
    np.testing.assert_allclose(tr.states[1], tr.states[0] + 0.01 * v0, rtol=1e-14)


def test_noisy_run_seed_reproducible(lorenz, lorenz_theta):
    ns = NoiseSpec("intrinsic", 0.5)
    a = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 500, ns, seed=4)
    b = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 500, ns, seed=4)
    c = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 500, ns, seed=5)
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_extrinsic_noise_perturbs_observations_only(lorenz, lorenz_theta):
    clean = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, 500)
    noisy = integrate(
        lorenz, lorenz_theta, np.ones(3), 1e-3, 500, NoiseSpec("extrinsic", 0.1), seed=7
    )
    resid = noisy.states - clean.states
    # observation residuals are iid N(0, sigma^2), with no growth in time
    # (an intrinsic forcing would feed back into the dynamics and diverge
    # from the clean path)
    assert 0.05 < resid.std() < 0.2
    early = np.abs(resid[:100]).mean()
    late = np.abs(resid[-100:]).mean()
    assert late < 5 * early


def test_intrinsic_noise_feeds_back(lorenz, lorenz_theta):
    n = 20_000
    clean = integrate(lorenz, lorenz_theta, np.ones(3), 1e-3, n)
    noisy = integrate(
        lorenz, lorenz_theta, np.ones(3), 1e-3, n, NoiseSpec("intrinsic", 0.5), seed=7
    )
    resid = np.abs(noisy.states - clean.states)
    # per-step forcing is sigma*sqrt(dt) ~ 0.016; chaotic feedback must
    # amplify the separation to the attractor scale
    assert resid[-2000:].mean() > 5.0


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("thermal", 0.1)
    with pytest.raises(ValueError):
        NoiseSpec("intrinsic", 0.1, mode="bogus")
    with pytest.raises(ValueError):
        NoiseSpec("intrinsic", -1.0)


def test_divergent_run_raises():
    # x' = x^2 blows up in finite time
    def vel(theta, x):
        return theta[0] * x**2

    def jac(theta, x):
        return (x**2)[None, :, :]

    s = mi.custom_system(vel, jac, ("a",), ((-1e9, 1e9),) * 3)
    with pytest.raises(mi.NumericalError):
        integrate(s, np.array([1.0]), np.full(3, 10.0), 0.1, 10_000)


def test_subsample_draws_from_tail(lorenz_run):
    sub = subsample(lorenz_run.states, 100, seed=3, burn_in=0.5)
    assert sub.shape == (100, 3)
    tail = lorenz_run.states[1000:]
    # every subsampled row appears in the post-burn-in segment
    for row in sub[:10]:
        assert np.any(np.all(tail == row, axis=1))
    np.testing.assert_array_equal(sub, subsample(lorenz_run.states, 100, seed=3, burn_in=0.5))


def test_subsample_more_than_available_rejected(lorenz_run):
    with pytest.raises(ValueError):
        subsample(lorenz_run.states, 10_000_000, seed=0)


def test_occupation_histogram_hand_case():
    g = mi.Grid(lo=(0.0, 0.0), hi=(1.0, 1.0), counts=(2, 2))
    pts = np.array([[0.25, 0.25], [0.75, 0.25], [0.75, 0.25], [1.5, 0.5]])
    h, n_out = occupation_histogram(pts, g)
    assert n_out == 1
    np.testing.assert_allclose(h.values, [1 / 3, 2 / 3, 0.0, 0.0])
    assert h.total() == pytest.approx(1.0)


def test_occupation_histogram_empty_inside_raises():
    g = mi.Grid(lo=(0.0, 0.0), hi=(1.0, 1.0), counts=(2, 2))
    pts = np.array([[5.0, 5.0], [6.0, 6.0]])
    with pytest.raises(mi.NumericalError):
        occupation_histogram(pts, g)

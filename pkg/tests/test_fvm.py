"""Upwind operator assembly, CFL constant, teleportation, derivatives.

The 3-cell hand-assembled operator is the anchor oracle: every
structural property (column sums, sign pattern, CFL diagonal) is checked
against literal matrices before the randomized sweeps.
"""

import numpy as np
import pytest

import measinv as mi
from measinv import fvm as F
from measinv.testing import axis_relaxation_system, blend_system, zero_system


def one_d_grid(n=3, width=None):
    w = float(n if width is None else width)
    return mi.Grid(lo=(0.0,), hi=(w,), counts=(n,))


def unit_flow_system():
    # v = theta_0 everywhere, 1-D
    def vel(theta, x):
        return np.full_like(x, theta[0])

    def jac(theta, x):
        return np.ones_like(x)[None, :, :]

    return mi.custom_system(vel, jac, ("s",), ((0.0, 3.0),), dim=1)


def test_three_cell_hand_operator():
    # unit velocity on interior faces, zero on boundary faces, dx = 1
    g = one_d_grid(3)
    s = unit_flow_system()
    op = F.assemble_K(s, np.array([1.0]), g)
    expected = np.array([
        [-1.0, 0.0, 0.0],
        [1.0, -1.0, 0.0],
        [0.0, 1.0, 0.0],
    ])
    np.testing.assert_allclose(op.K.toarray(), expected, atol=1e-15)


def test_three_cell_cfl_and_diagonal():
    g = one_d_grid(3)
    s = unit_flow_system()
    faces = F.face_velocities(s, np.array([1.0]), g)
    c = F.cfl_constant(faces, safety=1.0)
    assert c == pytest.approx(0.5)
    op = F.assemble_K(s, np.array([1.0]), g, faces)
    diag = 1.0 + c * op.K.diagonal()
    np.testing.assert_allclose(diag, [0.5, 0.5, 1.0])


def test_zero_field_gives_zero_operator_and_sentinel_cfl():
    g = mi.Grid(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), counts=(3, 3, 3))
    zs = zero_system()
    faces = F.face_velocities(zs, np.array([1.0]), g)
    op = F.assemble_K(zs, np.array([1.0]), g, faces)
    assert op.K.count_nonzero() == 0
    assert F.cfl_constant(faces) == 1.0


def test_cfl_halves_when_velocity_doubles():
    g = one_d_grid(4, width=4.0)
    s = unit_flow_system()
    f1 = F.face_velocities(s, np.array([1.0]), g)
    f2 = F.face_velocities(s, np.array([2.0]), g)
    assert F.cfl_constant(f1) == pytest.approx(2 * F.cfl_constant(f2))


def test_boundary_faces_carry_no_flux(lorenz, lorenz_theta, grid8):
    # closed box: the all-ones row vector annihilates K from the left
    op = F.assemble_K(lorenz, lorenz_theta, grid8)
    ones = np.ones(grid8.n)
    np.testing.assert_allclose(ones @ op.K, 0.0, atol=1e-12)


@pytest.mark.parametrize("kind", ["lorenz", "rossler", "chen", "arctan_lorenz"])
def test_operator_sign_structure(kind):
    s = mi.make_system(kind)
    th = np.array(mi.DEFAULT_THETA[kind])
    b = mi.DEFAULT_BOUNDS[kind]
    g = mi.Grid(lo=tuple(x[0] for x in b), hi=tuple(x[1] for x in b), counts=(6, 6, 6))
    op = F.assemble_K(s, th, g)
    K = op.K.toarray()
    off = K - np.diag(np.diag(K))
    assert off.min() >= 0
    assert np.diag(K).max() <= 0
    assert np.abs(K.sum(axis=0)).max() < 1e-12
    # at most 7 nonzeros per column in 3-D
    assert int((op.K != 0).sum(axis=0).max()) <= 7


def test_markov_columns_sum_to_one(lorenz, lorenz_theta, grid8):
    faces = F.face_velocities(lorenz, lorenz_theta, grid8)
    op = F.assemble_K(lorenz, lorenz_theta, grid8, faces)
    m = F.teleport(op, F.cfl_constant(faces), 1e-4)
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.normal(size=grid8.n)
        assert abs(m.matvec(x).sum() - x.sum()) < 1e-13 * max(1.0, abs(x.sum()))


def test_teleport_eps_zero_is_plain_step(lorenz, lorenz_theta, grid8):
    faces = F.face_velocities(lorenz, lorenz_theta, grid8)
    op = F.assemble_K(lorenz, lorenz_theta, grid8, faces)
    c = F.cfl_constant(faces)
    m = F.teleport(op, c, 0.0)
    x = np.random.default_rng(1).random(grid8.n)
    np.testing.assert_allclose(m.matvec(x), x + c * (op.K @ x), rtol=1e-14)


def test_teleport_fixes_uniform_on_zero_field():
    g = mi.Grid(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), counts=(3, 3, 3))
    zs = zero_system()
    op = F.assemble_K(zs, np.array([1.0]), g)
    for eps in (1e-6, 1e-2, 0.5):
        m = F.teleport(op, 1.0, eps)
        u = np.full(g.n, 1.0 / g.n)
        np.testing.assert_allclose(m.matvec(u), u, rtol=1e-14)


def test_markov_simplex_preserved(lorenz, lorenz_theta, grid8):
    faces = F.face_velocities(lorenz, lorenz_theta, grid8)
    op = F.assemble_K(lorenz, lorenz_theta, grid8, faces)
    m = F.teleport(op, F.cfl_constant(faces), 1e-3)
    rng = np.random.default_rng(5)
    p = rng.random(grid8.n)
    p /= p.sum()
    q = m.matvec(p)
    assert q.min() >= 0
    assert abs(q.sum() - 1.0) < 1e-12


def test_oversized_step_constant_rejected(lorenz, lorenz_theta, grid8):
    faces = F.face_velocities(lorenz, lorenz_theta, grid8)
    op = F.assemble_K(lorenz, lorenz_theta, grid8, faces)
    c = F.cfl_constant(faces)
    with pytest.raises(mi.CFLViolation):
        F.teleport(op, 5.0 * c, 1e-6)


def test_rmatvec_is_transpose(lorenz, lorenz_theta, grid8):
    faces = F.face_velocities(lorenz, lorenz_theta, grid8)
    op = F.assemble_K(lorenz, lorenz_theta, grid8, faces)
    m = F.teleport(op, F.cfl_constant(faces), 1e-4)
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(2, grid8.n))
    assert y @ m.matvec(x) == pytest.approx(m.rmatvec(y) @ x, rel=1e-12)


def test_dense_matches_matvec(unit_grid4):
    s = axis_relaxation_system()
    th = np.array([1.0, 2.0, 0.5])
    op = F.assemble_K(s, th, unit_grid4)
    m = F.teleport(op, 0.01, 1e-3)
    D = m.dense()
    x = np.random.default_rng(3).normal(size=unit_grid4.n)
    np.testing.assert_allclose(D @ x, m.matvec(x), rtol=1e-12, atol=1e-14)


# -- smoothed heaviside ------------------------------------------------


def test_heaviside_exact_limit():
    v = np.array([-2.0, -1e-12, 0.0, 1e-12, 3.0])
    H = F.smoothed_heaviside(v, 0.0)
    np.testing.assert_allclose(H, [0.0, 0.0, 0.5, 1.0, 1.0])


def test_heaviside_smooth_properties():
    v = np.linspace(-5, 5, 201)
    H = F.smoothed_heaviside(v, 0.3)
    assert np.all(np.diff(H) > 0)
    np.testing.assert_allclose(H + F.smoothed_heaviside(-v, 0.3), 1.0, rtol=1e-12)
    assert F.smoothed_heaviside(np.array([0.0]), 0.3)[0] == pytest.approx(0.5)
    # far tails saturate without overflow
    np.testing.assert_allclose(
        F.smoothed_heaviside(np.array([-1e4, 1e4]), 0.3), [0.0, 1.0], atol=1e-12
    )


# -- parameter derivatives ---------------------------------------------


def test_dk_zero_for_inert_parameter():
    g = mi.Grid(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), counts=(3, 3, 3))
    zs = zero_system()
    dk = F.assemble_dK(zs, np.array([1.0]), g)
    assert len(dk) == 1
    assert dk[0].count_nonzero() == 0


def test_dk_unit_velocity_identity():
    # 1-D v = theta: dK/dtheta equals K at unit velocity
    g = one_d_grid(5, width=5.0)
    s = unit_flow_system()
    dk = F.assemble_dK(s, np.array([2.0]), g)
    op_unit = F.assemble_K(s, np.array([1.0]), g)
    np.testing.assert_allclose(dk[0].toarray(), op_unit.K.toarray(), atol=1e-14)


def test_dk_column_sums_zero(lorenz, lorenz_theta, grid8):
    for Dk in F.assemble_dK(lorenz, lorenz_theta, grid8):
        cols = np.asarray(np.abs(Dk.sum(axis=0))).ravel()
        assert cols.max() < 1e-12


@pytest.mark.parametrize("kind", ["lorenz", "chen"])
def test_dk_matches_finite_differences(kind):
    s = mi.make_system(kind)
    th = np.array(mi.DEFAULT_THETA[kind])
    b = mi.DEFAULT_BOUNDS[kind]
    g = mi.Grid(lo=tuple(x[0] for x in b), hi=tuple(x[1] for x in b), counts=(6, 6, 6))
    dk = F.assemble_dK(s, th, g)
    h = 1e-6
    for k in range(3):
        tp = th.copy(); tp[k] += h
        tm = th.copy(); tm[k] -= h
        fd = (F.assemble_K(s, tp, g).K - F.assemble_K(s, tm, g).K) / (2 * h)
        num = np.abs(dk[k] - fd).max()
        den = max(np.abs(fd).max(), 1e-30)
        assert num / den < 1e-5, (kind, k, num / den)


def test_dk_smoothing_only_touches_slow_faces(lorenz, lorenz_theta, grid8):
    exact = F.assemble_dK(lorenz, lorenz_theta, grid8, k_smooth=0.0)
    smooth = F.assemble_dK(lorenz, lorenz_theta, grid8, k_smooth=1e-12)
    for a, bm in zip(exact, smooth):
        # negligible smoothing width leaves the derivative unchanged
        assert np.abs(a - bm).max() < 1e-10


def test_dk_many_parameters():
    s = blend_system(12)
    th = np.linspace(0.5, 1.5, 12)
    g = mi.Grid(lo=(-2.0, -2.0, -2.0), hi=(2.0, 2.0, 2.0), counts=(5, 5, 5))
    dk = F.assemble_dK(s, th, g)
    assert len(dk) == 12
    for Dk in dk:
        cols = np.asarray(np.abs(Dk.sum(axis=0))).ravel()
        assert cols.max() < 1e-12

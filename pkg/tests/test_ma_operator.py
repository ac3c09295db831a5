import numpy as np
import pytest

from cmalab.envelope_solver import _relax_pass
from cmalab.errors import AxisSingularity, NotPSD
from cmalab.geometry import ball2, classify_grid, disk, radial_grid
from cmalab.ma_operator import (HermitianPair, ScalarField, complex_hessian, det_shift_bound, det_shift_bound_matrix,
                                hessian_field, ma_det, psh_check, radial_det)


@pytest.mark.parametrize("hp, expected", [
    (HermitianPair(1, 1, 0), 1.0),
    (HermitianPair(1, 1, 1), 0.0),
    (HermitianPair(2, 3, 1 + 1j), 4.0),
    (HermitianPair(0.25), 0.25),
])
def test_ma_det(hp, expected):
    assert ma_det(hp) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("hp, expected", [
    (HermitianPair(1, 1, 0), True),
    (HermitianPair(1, 1, 2), False),
    (HermitianPair(-1, 5, 0), False),
])
def test_psh_check(hp, expected):
    assert psh_check(hp) is expected


@pytest.mark.parametrize("hp, beta, lhs, rhs", [
    (HermitianPair(0, 0, 0), 1.0, 1.0, 1.0),
    (HermitianPair(1, 1, 0), 1.0, 4.0, 3.0),
    (HermitianPair(1, 4, 0), 2.0, 18.0, 12.0),
])
def test_det_shift_bound(hp, beta, lhs, rhs):
    got = det_shift_bound(hp, beta)
    assert got == pytest.approx((lhs, rhs), rel=1e-12)


def test_det_shift_rejects_indefinite():
    with pytest.raises(NotPSD):
        det_shift_bound(HermitianPair(1, 1, 2), 1.0)


def test_det_shift_random_three_by_three():
    rng = np.random.default_rng(3)
    for _ in range(200):
        G = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        lhs, rhs = det_shift_bound_matrix(G @ G.conj().T, rng.uniform(0.01, 10))
        assert lhs >= rhs * (1 - 1e-12)


def _node(grid, point):
    return grid.index_of(point)


def test_hessian_abs_z_squared_ball2():
    g = classify_grid(ball2(), 0.25)
    hf = hessian_field(ScalarField.from_function(g, lambda p: np.sum(p**2, -1)))
    ok = hf.stencil.mok
    assert np.allclose(hf.u11, 1.0, atol=1e-12) and np.allclose(hf.u22, 1.0, atol=1e-12)
    assert np.allclose(hf.u12[ok], 0.0, atol=1e-12)


def test_pluriharmonic_hessian_vanishes():
    g = classify_grid(ball2(), 0.25)
    hf = hessian_field(ScalarField.from_function(g, lambda p: p[..., 0] ** 2 - p[..., 1] ** 2))
    ok = hf.stencil.mok
    assert np.max(np.abs(hf.u11)) < 1e-12 and np.max(np.abs(hf.u22)) < 1e-12
    assert np.max(np.abs(hf.u12[ok])) < 1e-12


def test_product_of_moduli_at_one_one():
    # (1, 1) lies outside the unit ball, so use a ball of radius 3
    from cmalab.geometry import DomainSpec
    big = DomainSpec("ball-r3", 2, lambda p: np.sum(p**2, -1) - 9.0, (-4.0,) * 4, (4.0,) * 4, extent=3.0)
    g = classify_grid(big, 0.5)
    f = ScalarField.from_function(g, lambda p: (p[..., 0] ** 2 + p[..., 1] ** 2) * (p[..., 2] ** 2 + p[..., 3] ** 2))
    hp = complex_hessian(f, _node(g, (1.0, 0.0, 1.0, 0.0)))
    assert (hp.u11, hp.u22) == pytest.approx((1.0, 1.0), abs=1e-12)
    assert hp.u12 == pytest.approx(1.0, abs=1e-12)
    assert ma_det(hp) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("fn, expected", [
    (lambda a, b: a**2 + b**2, 1.0),
    (lambda a, b: a**2 * b**2, 0.0),
    (lambda a, b: b**3, 0.0),
])
def test_radial_det(fn, expected):
    rg = radial_grid(ball2(), 17)
    f = ScalarField.from_function(rg, lambda p: fn(p[..., 0], p[..., 1]))
    node = rg.index_of((0.25, 0.25))
    assert radial_det(f, node) == pytest.approx(expected, abs=1e-12)


def test_radial_det_axis_guard():
    rg = radial_grid(ball2(), 17)
    f = ScalarField.from_function(rg, lambda p: np.abs(p[..., 0]) + p[..., 1] ** 2)
    with pytest.raises(AxisSingularity):
        radial_det(f, rg.index_of((0.0, 0.25)))


def test_one_dimensional_laplacian_quarter():
    g = classify_grid(disk(), 1 / 8)
    hf = hessian_field(ScalarField.from_function(g, lambda p: np.sum(p**2, -1)))
    assert np.allclose(hf.det, 1.0, atol=1e-12)


def _single(planes, s_vals, h, m_weights=None):
    """One-node relaxation with neighbor sums prescribed (spacing 1)."""
    nb = 4 * planes
    u = np.concatenate([[0.0], np.repeat(np.asarray(s_vals, float) / 4, 4)])
    pidx = (1 + np.arange(nb)).reshape(1, planes, 4).astype(np.int64)
    pw = np.ones((1, planes, 4))
    pc = np.full((1, planes), 4.0)
    midx = np.zeros((1, 16), dtype=np.int64)
    mw = np.zeros((1, 16))
    mok = np.zeros(1, dtype=np.bool_)
    _relax_pass(u, np.zeros(1, dtype=np.int64), pidx, pw, pc, midx, mw, mok, np.array([float(h)]), planes, 1.0)
    return u


def test_sweep_degenerate_two_dim():
    u = _single(2, [3.0, 3.0], 0.0)
    assert u[0] == pytest.approx(3.0 / 4)
    assert (3.0 - 4 * u[0]) / 4 == pytest.approx(0.0, abs=1e-15)


def test_sweep_unit_density_two_dim():
    u = _single(2, [0.0, 0.0], 1.0)
    assert u[0] == pytest.approx(-1.0)
    u11 = (0.0 - 4 * u[0]) / 4
    assert u11 * u11 == pytest.approx(1.0)


def test_sweep_unit_density_one_dim():
    u = _single(1, [0.0], 1.0)
    assert u[0] == pytest.approx(-1.0)

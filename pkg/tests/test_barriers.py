import math

import numpy as np
import pytest

from cmalab.barriers import (ConstantLedger, DefiningRho, barrier_envelope, barrier_v, build_rho, cphi,
                             translation_gadget, upper_barrier)
from cmalab.envelope_solver import ProblemSpec, SolverConfig, solve
from cmalab.errors import GridMismatch, LedgerViolation, ShiftOutsideGrid
from cmalab.geometry import ball2, classify_grid, disk, interior_samples, linear_peak_family, sample_boundary
from cmalab.index_calculus import GIndex, IndexFunction, ModulusOmega
from cmalab.ma_operator import ScalarField

G_HALF = GIndex(IndexFunction.power(0.5))


def _ball_rho(grid):
    return DefiningRho.from_function(ball2(), lambda p: np.sum(p**2, -1) - 1.0, grid, "oracle")


def test_barrier_at_origin():
    grid = classify_grid(ball2(), 1 / 4)
    led = ConstantLedger(alpha=1.0, c_phi=0.0, K=1.0, h_root_sup=0.0, bracket_max=3.0)
    b = barrier_v(np.array([1.0, 0, 0, 0]), 0.0, led, _ball_rho(grid), grid)
    assert float(b(np.array([[1.0, 0, 0, 0]]))[0]) == 0.0
    assert float(b(np.zeros((1, 4)))[0]) == pytest.approx(-math.sqrt(3))


def test_barrier_anchor_identity():
    grid = classify_grid(ball2(), 1 / 4)
    led = ConstantLedger(1.0, 1.0, 4.0, 1.0, 4.0)
    for z in sample_boundary(ball2(), 8).points:
        b = barrier_v(z, float(z[0]), led, _ball_rho(grid), grid)
        assert float(b(z[None])[0]) == float(z[0])


def test_ledger_violation_blocks_barrier():
    grid = classify_grid(ball2(), 1 / 4)
    led = ConstantLedger(1.0, 2.0, 1.0, 0.0, 1.0)
    with pytest.raises(LedgerViolation):
        barrier_v(np.array([1.0, 0, 0, 0]), 0.0, led, _ball_rho(grid), grid)


def test_cphi_values():
    pts = sample_boundary(ball2(), 1000).points
    assert cphi(pts, np.full(len(pts), 3.0), 1.0) == 0.0
    assert 0.99 <= cphi(pts, pts[:, 0], 1.0) <= 1.0


def test_cphi_half_power_stable():
    a = sample_boundary(disk(), 400).points
    b = sample_boundary(disk(), 800).points
    ca = cphi(a, np.hypot(a[:, 0], a[:, 1]) ** 0.5 * a[:, 0], 0.5)
    cb = cphi(b, np.hypot(b[:, 0], b[:, 1]) ** 0.5 * b[:, 0], 0.5)
    assert math.isfinite(ca) and abs(ca - cb) / cb <= 0.05


def test_envelope_single_and_zero_data():
    grid = classify_grid(disk(), 1 / 16)
    rho = DefiningRho.from_function(disk(), lambda p: np.sum(p**2, -1) - 1.0, grid)
    led = ConstantLedger(1.0, 0.0, 1.0, 0.0, 4.0)
    mesh = sample_boundary(disk(), 16)
    bs = [barrier_v(z, 0.0, led, rho, grid) for z in mesh.points]
    one = barrier_envelope(bs[:1])
    assert np.array_equal(one.values, bs[0].values, equal_nan=True)
    env = barrier_envelope(bs)
    assert np.nanmax(env.values) <= 0.0
    assert np.max(np.abs(env(mesh.points))) == 0.0


def test_envelope_grid_mismatch():
    d = disk()
    led = ConstantLedger(1.0, 0.0, 1.0, 0.0, 4.0)
    z = np.array([1.0, 0.0])
    a = barrier_v(z, 0.0, led, DefiningRho.from_function(d, lambda p: np.sum(p**2, -1) - 1), classify_grid(d, 1 / 8))
    b = barrier_v(z, 0.0, led, DefiningRho.from_function(d, lambda p: np.sum(p**2, -1) - 1), classify_grid(d, 1 / 16))
    with pytest.raises(GridMismatch):
        barrier_envelope([a, b])


def test_upper_barrier_reproduces_harmonic_data():
    grid = classify_grid(disk(), 1 / 16)
    one = upper_barrier(lambda p: np.ones(p.shape[:-1]), disk(), grid)
    assert np.allclose(one.values[grid.active], 1.0, atol=1e-12)
    rez = upper_barrier(lambda p: p[..., 0], disk(), grid)
    assert np.allclose(rez.values[grid.active], grid.points()[grid.active][:, 0], atol=1e-12)


def test_upper_barrier_4d_harmonic():
    grid = classify_grid(ball2(), 1 / 4)
    w = upper_barrier(lambda p: p[..., 0] * p[..., 2], ball2(), grid)
    pts = grid.points()[grid.active]
    assert np.allclose(w.values[grid.active], pts[:, 0] * pts[:, 2], atol=1e-10)


def test_build_rho_disk():
    d = disk()
    grid = classify_grid(d, 1 / 16)
    mesh = sample_boundary(d, 64)
    rho = build_rho(d, linear_peak_family(d, mesh), ModulusOmega(G_HALF, 1.0), mesh, grid)
    assert float(rho(np.zeros((1, 2)))[0]) < 0
    assert np.max(np.abs(rho(mesh.points))) <= 1e-12
    assert np.all(rho(interior_samples(d, 500, 1)) < 0)
    assert rho.lambda_min >= 0.9


def test_build_rho_ball2_sign_agreement():
    d = ball2()
    grid = classify_grid(d, 1 / 4)
    mesh = sample_boundary(d, 128)
    rho = build_rho(d, linear_peak_family(d, mesh), ModulusOmega(G_HALF, 1.0), mesh, grid)
    pts = np.random.default_rng(0).uniform(-1.2, 1.2, (1000, 4))
    inside = np.sum(pts**2, 1) < 1
    assert np.all(rho(pts[inside]) < 0)


@pytest.fixture(scope="module")
def ball_solution():
    return solve(ProblemSpec.from_names("ball2", "zero", "one"), SolverConfig(spacing=1 / 4))


def test_gadget_zero_shift(ball_solution):
    u = ball_solution.field
    led = ConstantLedger(1.0, 0.0, 1.0, 1.0, 1.0, K1=1.0, K2=1.0, K3=1.0, max_abs_z2=1.0)
    V, rep = translation_gadget(u, np.zeros(4), led, G_HALF, 1.0)
    assert np.array_equal(V.values, u.values, equal_nan=True)
    assert rep.max_excess == 0.0


def test_gadget_inconsistent_ledger_warns(ball_solution):
    led = ConstantLedger(1.0, 0.0, 1.0, 1.0, 1.0, K1=1.0, K2=0.0, K3=0.0, max_abs_z2=1.0)
    _, rep = translation_gadget(ball_solution.field, np.array([0.25, 0, 0, 0]), led, G_HALF, 1.0)
    assert rep.warnings


def test_gadget_shift_guard(ball_solution):
    led = ConstantLedger(1.0, 0.0, 1.0, 1.0, 1.0, K1=1.0, K2=1.0, K3=1.0, max_abs_z2=1.0)
    with pytest.raises(ShiftOutsideGrid):
        translation_gadget(ball_solution.field, np.array([3.0, 0, 0, 0]), led, G_HALF, 1.0)


def test_gadget_grid_guard(ball_solution):
    led = ConstantLedger(1.0, 0.0, 1.0, 1.0, 1.0, K1=1.0, K2=1.0, K3=1.0, max_abs_z2=1.0)
    other = classify_grid(ball2(), 1 / 8)
    with pytest.raises(GridMismatch):
        translation_gadget(ball_solution.field, np.zeros(4), led, G_HALF, 1.0, grid=other)
    assert isinstance(ball_solution.field, ScalarField)

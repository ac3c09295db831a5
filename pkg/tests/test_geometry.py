import math

import numpy as np
import pytest

from cmalab.errors import NonConvexDomain
from cmalab.geometry import (BOUNDARY, EXTERIOR, INTERIOR, ball2, classify_grid, disk, exp_ellipsoid, from_catalog,
                             interior_samples, linear_peak_family, peak_linear, power_ellipsoid, sample_boundary,
                             validate_peak)
from cmalab.index_calculus import GIndex


def _cls_at(grid, point):
    return grid.cls[grid.index_of(point)]


def test_disk_classification():
    g = classify_grid(disk(), 0.25)
    assert _cls_at(g, (0.0, 0.0)) == INTERIOR
    assert _cls_at(g, (1.0, 0.0)) == BOUNDARY


def test_ball2_exterior_node():
    g = classify_grid(ball2(), 0.5)
    assert _cls_at(g, (1.5, 0.0, 0.0, 0.0)) == EXTERIOR


def test_exp_ellipsoid_axis_node():
    E = exp_ellipsoid(0.5)
    assert float(E(np.array([[0.0, 0.0, 0.5, 0.0]]))[0]) == pytest.approx(-0.75)


def test_disk_boundary_count_four():
    m = sample_boundary(disk(), 4)
    ang = np.sort(np.mod(np.arctan2(m.points[:, 1], m.points[:, 0]), 2 * math.pi))
    assert np.allclose(np.linalg.norm(m.points, axis=1), 1.0)
    assert np.allclose(np.diff(ang), math.pi / 2)


def test_ball2_boundary_identity():
    m = sample_boundary(ball2(), 32)
    assert np.max(np.abs(np.sum(m.points**2, 1) - 1)) <= 1e-10


@pytest.mark.parametrize("name", ["power-ellipsoid:2", "exp-ellipsoid:1/2"])
def test_boundary_residual(name):
    d = from_catalog(name)
    assert np.max(np.abs(d(sample_boundary(d, 256).points))) <= 1e-10


def test_exp_ellipsoid_pole():
    pts = sample_boundary(exp_ellipsoid(0.5), 16, graded=False).points
    E = exp_ellipsoid(0.5)
    pole = np.array([[0.0, 0.0, 1.0, 0.0]])
    assert float(E(pole)[0]) == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.abs(E(pts)) <= 1e-10)


def test_peak_linear_disk():
    psi = peak_linear(disk(), np.array([1.0, 0.0]))
    assert float(psi(np.array([0.0, 0.0]))) == pytest.approx(-1.0)
    assert float(psi(np.array([1.0, 0.0]))) == 0.0


def test_peak_linear_ball2():
    psi = peak_linear(ball2(), np.array([0.0, 0.0, 1.0, 0.0]))
    assert float(psi(np.array([0.0, 0.0, 0.5, 0.0]))) == pytest.approx(-0.5)
    inner = interior_samples(ball2(), 2000, 1)
    assert np.all(psi(inner) < 0)


def test_peak_on_nonconvex_needs_candidate_flag():
    d = power_ellipsoid(2)
    zeta = sample_boundary(d, 8).points[0]
    if not d.convex:
        with pytest.raises(NonConvexDomain):
            peak_linear(d, zeta)
    assert callable(peak_linear(d, zeta, candidate=True))


def test_validate_disk_linear_peaks():
    d = disk()
    fam = linear_peak_family(d, sample_boundary(d, 32), eta=1.0)
    g = GIndex.from_formula(lambda t: np.asarray(t) / 2, "t/2")
    rep = validate_peak(fam, d, g, np.concatenate([interior_samples(d, 500, 2), fam.anchors]))
    assert rep.c1 == pytest.approx(1.0, abs=0.02)
    assert rep.negativity_violations == 0
    assert math.isfinite(rep.c2)


def test_validate_ball2_c2_finite():
    d = ball2()
    fam = linear_peak_family(d, sample_boundary(d, 16))
    g = GIndex.from_formula(lambda t: np.asarray(t) / 2, "t/2")
    assert math.isfinite(validate_peak(fam, d, g, interior_samples(d, 1000, 4)).c2)


def test_refinement_keeps_interior():
    g1, g2 = classify_grid(disk(), 1 / 8), classify_grid(disk(), 1 / 16)
    pts = g1.origin + g1.spacing * np.argwhere(g1.cls == INTERIOR)
    idx = np.rint((pts - g2.origin) / g2.spacing).astype(int)
    assert np.all(g2.cls[tuple(idx.T)] == INTERIOR)

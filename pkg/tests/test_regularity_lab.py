import math

import numpy as np
import pytest

from cmalab.errors import InsufficientScales, OutOfRange, OutsideDomain
from cmalab.geometry import classify_grid, disk, exp_ellipsoid, sample_boundary
from cmalab.index_calculus import GIndex
from cmalab.regularity_lab import (MEMBER, NON_MEMBER, SHARPNESS_COLUMNS, ModulusConfig, closed_form_u_E,
                                   dyadic_scales, estimate_modulus, fit_holder_exponent, membership_verdict,
                                   sharpness_probe)

T = GIndex.from_catalog("t")


@pytest.fixture(scope="module")
def disk_nodes():
    g = classify_grid(disk(), 1 / 64)
    return g.points()[g.active]


def test_closed_form_values():
    r2 = math.sqrt(1 - math.exp(-1))
    assert closed_form_u_E(np.array([0.0, 0.0, r2, 0.0]), 0.5, 1.0) == pytest.approx(0.25, rel=1e-12)
    assert closed_form_u_E(np.array([0.3, 0.1, 0.0, 0.0]), 0.5, 1.0) == 1.0


def test_closed_form_boundary_identity():
    pts = sample_boundary(exp_ellipsoid(0.5), 1000).points
    err = np.abs(closed_form_u_E(pts, 0.5, 1.0) - np.hypot(pts[:, 0], pts[:, 1]))
    assert np.max(err) <= 1e-12


def test_closed_form_outside():
    with pytest.raises(OutsideDomain):
        closed_form_u_E(np.array([0.0, 0.0, 1.5, 0.0]), 0.5, 1.0)


def test_re_z_is_lipschitz(disk_nodes):
    rep = estimate_modulus(disk_nodes, disk_nodes[:, 0], T, 1.0, ModulusConfig(pairs=5000),
                           scales=dyadic_scales(0.25, 1 / 32))
    assert np.all(rep.ratios <= 1 + 1e-9)
    assert rep.spread <= 1.2
    assert membership_verdict(rep, 10.0) == MEMBER


def test_constant_has_zero_modulus(disk_nodes):
    rep = estimate_modulus(disk_nodes, np.full(len(disk_nodes), 2.0), T, 1.0, ModulusConfig(pairs=2000),
                           scales=dyadic_scales(0.25, 1 / 16))
    assert np.all(rep.M == 0) and rep.spread == 1.0 and rep.verdict == "bounded"


def test_sqrt_is_not_lipschitz(disk_nodes):
    vals = np.sum(disk_nodes**2, -1) ** 0.25
    rep = estimate_modulus(disk_nodes, vals, T, 1.0, ModulusConfig(pairs=len(disk_nodes)),
                           scales=dyadic_scales(0.25, 1 / 32))
    assert membership_verdict(rep, 10.0) == NON_MEMBER
    assert fit_holder_exponent(rep) == pytest.approx(0.5, abs=0.1)


def test_three_scales_refused(disk_nodes):
    rep = estimate_modulus(disk_nodes, disk_nodes[:, 0], T, 1.0, ModulusConfig(pairs=500),
                           scales=[0.25, 0.125, 0.0625])
    with pytest.raises(InsufficientScales):
        membership_verdict(rep, 10.0)


def test_estimator_is_seeded(disk_nodes):
    vals = np.sin(3 * disk_nodes[:, 0]) * disk_nodes[:, 1]
    a = estimate_modulus(disk_nodes, vals, T, 1.0, ModulusConfig(pairs=500, seed=4))
    b = estimate_modulus(disk_nodes, vals, T, 1.0, ModulusConfig(pairs=500, seed=4))
    assert np.array_equal(a.ratios, b.ratios)


def test_sharpness_row_recomputed():
    row = sharpness_probe(0.5, 1.0, [0.1]).rows[0]
    assert row["u_z"] == pytest.approx(0.14125310, rel=5e-6)
    assert row["u_w"] == pytest.approx(0.24467383, rel=5e-6)
    assert row["delta_u"] == pytest.approx(0.10342073, rel=5e-6)
    assert 1 / (1 + math.log(10)) == pytest.approx(0.30279311, rel=5e-6)
    assert tuple(row) == SHARPNESS_COLUMNS


def test_sharpness_rows_deterministic():
    rows = sharpness_probe(0.5, 1.0, [0.01, 0.01]).rows
    assert rows[0] == rows[1]


def test_sharpness_eps_range():
    with pytest.raises(OutOfRange):
        sharpness_probe(0.5, 1.0, [0.3])


def test_vd3_bounded():
    rep = sharpness_probe(0.5, 1.0, np.logspace(-6, -2, 9))
    assert rep.vd3_spread <= 4.0

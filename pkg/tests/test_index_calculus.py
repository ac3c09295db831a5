import math

import numpy as np
import pytest

from cmalab.errors import OutOfRange, SampleOutsideStrip
from cmalab.index_calculus import (FPropertyWitness, GIndex, IndexFunction, ModulusOmega, check_g_over_f,
                                   check_omega_lemma, compute_g, ellipsoid_g, lemma_samples, omega, select_eta,
                                   verify_f_property_witness)


@pytest.mark.parametrize("name, t, expected", [
    ("power:1/2", 4.0, 1.0),
    ("power:1/4", 16.0, 0.5),
    ("logpower:1/2", math.e**2, 3.0),
])
def test_compute_g_frozen_values(name, t, expected):
    f = IndexFunction.from_catalog(name)
    assert compute_g(f, t) == pytest.approx(expected, rel=1e-9)
    assert compute_g(f, t, method="quadrature") == pytest.approx(expected, rel=1e-8)


def test_strongly_pseudoconvex_alias():
    f = IndexFunction.from_catalog("strongly-pseudoconvex")
    assert f(np.array(9.0)) == pytest.approx(3.0)
    assert GIndex(f)(np.array(100.0)) == pytest.approx(5.0)


def test_unknown_index_rejected():
    with pytest.raises(ValueError):
        IndexFunction.from_catalog("cubic:2")


def test_omega_frozen_values():
    m = ModulusOmega(GIndex(IndexFunction.power(0.5)), 0.5)
    assert omega(m, 0.1) == pytest.approx(0.04, rel=1e-12)
    assert omega(m, 0.5) == pytest.approx(1.0, rel=1e-12)
    assert omega(m, 1e-300) < 1e-200


def test_omega_domain():
    m = ModulusOmega(GIndex(IndexFunction.power(0.5)), 1.0)
    with pytest.raises(OutOfRange):
        m(1.0)
    with pytest.raises(OutOfRange):
        m(0.0)


def test_omega_sqrt_quadratic_case():
    # omega = 4 delta^2 is convex, so (ii) and (iii) fail while (i) and (iv) hold
    m = ModulusOmega(GIndex(IndexFunction.power(0.5)), 0.5)
    rep = check_omega_lemma(m, np.linspace(0.005, 0.5, 100))
    v = {r.property.split()[0]: r.verdict for r in rep.results}
    assert v == {"(i)": "pass", "(ii)": "fail", "(iii)": "fail", "(iv)": "pass"}


def test_omega_logpower_quarter_eta():
    f = IndexFunction.logpower(0.5)
    m = ModulusOmega(GIndex(f), 0.25)
    rep = check_omega_lemma(m, np.logspace(-12, -1, 100))
    v = {r.property.split()[0]: r.verdict for r in rep.results}
    assert v["(i)"] == v["(iii)"] == v["(iv)"] == "pass"


def test_omega_single_sample_is_trivial():
    m = ModulusOmega(GIndex(IndexFunction.power(0.5)), 1.0)
    rep = check_omega_lemma(m, [0.3])
    assert all(r.verdict == "pass" for r in rep.results)


@pytest.mark.parametrize("name", ["power:1/8", "strongly-pseudoconvex", "logpower:1/4", "logpower:3/4"])
def test_selected_eta_passes_lemma(name):
    f = IndexFunction.from_catalog(name)
    d = lemma_samples(f)
    eta, _ = select_eta(f, d)
    assert 0 < eta <= 1
    rep = check_omega_lemma(ModulusOmega(GIndex(f), eta), d)
    assert all(r.verdict == "pass" for r in rep.results if not r.property.startswith("(ii)"))


def test_lemma_window_respects_validity():
    f = IndexFunction.logpower(0.25)
    d = lemma_samples(f)
    assert d[-1] <= 1.0 / f.validity_start() + 1e-15
    assert d[0] == pytest.approx(1e-12)


def test_g_over_f_bound():
    for name in ("power:1/4", "logpower:1/2"):
        assert check_g_over_f(IndexFunction.from_catalog(name)).verdict == "pass"


def test_ellipsoid_g_shape():
    g = ellipsoid_g(0.5)
    assert float(g(np.array(10.0))) == pytest.approx(1 + math.log(10))


def test_invariants_of_catalog():
    for name in ("power:1/8", "strongly-pseudoconvex"):
        rep = IndexFunction.from_catalog(name).check_invariants()
        assert all(r.verdict == "pass" for r in rep.results)


def _strip(delta, count=200, seed=1):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * np.sqrt(1 - delta * (0.05 + 0.9 * rng.random(count)))[:, None]


def _ball_rho(p):
    return np.sum(p**2, -1) - 1.0


def test_ball_witness():
    delta = 0.05
    w = FPropertyWitness(delta, lambda p: _ball_rho(p) / delta, IndexFunction.power(0.5), _ball_rho, 2)
    rep = verify_f_property_witness(w, _strip(delta))
    assert rep.fitted_c == pytest.approx(1.0, abs=1e-5)
    assert rep.fitted_C <= 2.0 + 1e-9
    assert rep.range_violations == 0


def test_zero_witness_has_no_positivity():
    w = FPropertyWitness(0.05, lambda p: np.zeros(p.shape[:-1]), IndexFunction.power(0.5), _ball_rho, 2)
    assert verify_f_property_witness(w, _strip(0.05)).fitted_c == pytest.approx(0.0, abs=1e-9)


def test_witness_range_violation():
    w = FPropertyWitness(0.05, lambda p: np.sum(p**2, -1) - 2.0, IndexFunction.power(0.5), _ball_rho, 2)
    rep = verify_f_property_witness(w, _strip(0.05))
    assert rep.range_violations > 0


def test_witness_samples_must_lie_in_strip():
    w = FPropertyWitness(0.05, lambda p: _ball_rho(p) / 0.05, IndexFunction.power(0.5), _ball_rho, 2)
    with pytest.raises(SampleOutsideStrip):
        verify_f_property_witness(w, np.zeros((3, 4)))

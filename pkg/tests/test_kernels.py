import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landaulab.kernels import (DecayLaw, DiracMass, InteractionExponent,
                               WeightSpec, decay_theta, default_ell,
                               gamma_envelope, kernel_derived, kernel_matrix,
                               maxwellian, theta_for_pair, theta_for_weight,
                               weight_lt)


def test_kernel_matrix_unit_axis():
    a = kernel_matrix([1.0, 0.0, 0.0], -3.0)
    assert np.allclose(a, np.diag([0.0, 1.0, 1.0]), atol=1e-15)


def test_kernel_matrix_scaled_axis():
    a = kernel_matrix([0.0, 2.0, 0.0], -2.5)
    expect = 2.0 ** -0.5 * np.diag([1.0, 0.0, 1.0])
    assert np.allclose(a, expect, atol=1e-14)


def test_kernel_matrix_origin_is_zero():
    for g in (-3.0, -2.5, -2.2):
        assert np.all(kernel_matrix([0.0, 0.0, 0.0], g) == 0.0)


def test_kernel_matrix_annihilates_z_and_eigenvalues():
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.standard_normal(3) * rng.uniform(0.1, 10)
        g = rng.uniform(-3.0, -2.0 - 1e-9)
        a = kernel_matrix(z, g)
        assert np.linalg.norm(a @ z) <= 1e-12 * np.linalg.norm(a) * np.linalg.norm(z)
        evals = np.sort(np.linalg.eigvalsh(a))
        r = np.linalg.norm(z)
        assert abs(evals[0]) <= 1e-12 * evals[2]
        assert np.allclose(evals[1:], r ** (g + 2.0), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(-3.0, -2.001),
       st.integers(0, 10 ** 6))
def test_kernel_matrix_homogeneous(s, gamma, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(3)
    if np.linalg.norm(z) < 1e-3:
        return
    a1 = kernel_matrix(s * z, gamma)
    a2 = s ** (gamma + 2.0) * kernel_matrix(z, gamma)
    assert np.allclose(a1, a2, rtol=1e-12, atol=0.0)


def test_kernel_derived_coulomb():
    b, c = kernel_derived([1.0, 0.0, 0.0], -3.0)
    assert np.allclose(b, [-2.0, 0.0, 0.0])
    assert isinstance(c, DiracMass)
    assert c.mass == pytest.approx(-8.0 * math.pi)


def test_kernel_derived_soft():
    b, c = kernel_derived([0.0, 0.0, 2.0], -2.5)
    assert b[2] == pytest.approx(-2.0 * 2.0 ** -1.5, rel=1e-14)
    assert c == pytest.approx(-(2.0 ** -2.5), rel=1e-14)


def test_kernel_derived_vanishes_at_infinity():
    big = np.array([2.0 ** k for k in range(4, 10)])
    mags = [np.linalg.norm(kernel_derived([r, 0.0, 0.0], -2.5)[0]) for r in big]
    assert all(m2 < m1 for m1, m2 in zip(mags, mags[1:]))
    assert mags[-1] < 1e-3


def test_kernel_derived_rejects_origin():
    with pytest.raises(ValueError):
        kernel_derived([0.0, 0.0, 0.0], -2.5)


def test_divergence_consistency():
    # centered finite-difference divergence of kernel columns matches b
    rng = np.random.default_rng(3)
    h = 1e-4
    for _ in range(10):
        z = rng.standard_normal(3)
        z *= rng.uniform(0.6, 3.0) / np.linalg.norm(z)
        g = rng.uniform(-2.9, -2.1)
        b, _ = kernel_derived(z, g)
        div = np.zeros(3)
        for j in range(3):
            zp = z.copy()
            zm = z.copy()
            zp[j] += h
            zm[j] -= h
            div += (kernel_matrix(zp, g)[:, j] - kernel_matrix(zm, g)[:, j]) / (2 * h)
        assert np.allclose(div, b, atol=50 * h * h, rtol=1e-4)


def test_maxwellian_values_and_symmetry():
    assert maxwellian([0.0, 0.0, 0.0]) == pytest.approx(0.0634936359342, rel=1e-10)
    assert maxwellian([2.0, 0.0, 0.0]) == pytest.approx(
        math.exp(-2.0) * (2 * math.pi) ** -1.5, rel=1e-12)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(3)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    assert maxwellian(q @ v) == pytest.approx(float(maxwellian(v)), rel=1e-12)


def test_weight_eval_examples():
    assert WeightSpec.polynomial(4.0)([0.0, 0.0, 0.0]) == 1.0
    assert WeightSpec.polynomial(2.0)([1.0, 1.0, 1.0]) == pytest.approx(4.0)
    w = WeightSpec.exponential(0.1, 2.0)
    assert w([0.0, 0.0, 3.0]) == pytest.approx(math.e, rel=1e-14)


def test_weight_admissibility():
    with pytest.raises(ValueError):
        WeightSpec.polynomial(-1.0)
    with pytest.raises(ValueError):
        WeightSpec.exponential(0.7, 2.0)   # kappa must be below 1/2 at s=2
    with pytest.raises(ValueError):
        WeightSpec.exponential(0.1, 2.5)
    assert not WeightSpec.polynomial(3.0).is_stability_weight
    assert WeightSpec.polynomial(4.0).is_stability_weight


def test_weight_order():
    p4 = WeightSpec.polynomial(4.0)
    p5 = WeightSpec.polynomial(5.0)
    e1 = WeightSpec.exponential(0.1, 1.0)
    e2 = WeightSpec.exponential(0.2, 1.0)
    g = WeightSpec.gaussian(0.5)
    assert weight_lt(p4, p5)
    assert weight_lt(p5, e1)
    assert weight_lt(e1, e2)
    assert weight_lt(e2, g)
    assert not weight_lt(p5, p4)


def test_weight_log_derivatives_match_finite_differences():
    hs = 1e-5
    for w in (WeightSpec.polynomial(4.0), WeightSpec.exponential(0.1, 1.0),
              WeightSpec.exponential(0.2, 2.0)):
        v = np.array([0.7, -1.2, 2.0])
        hv = math.sqrt(1.0 + v @ v)
        g1 = float(w.log_grad_coeff(hv))
        grad_fd = np.zeros(3)
        for j in range(3):
            vp, vm = v.copy(), v.copy()
            vp[j] += hs
            vm[j] -= hs
            grad_fd[j] = (w(vp) - w(vm)) / (2 * hs * w(v))
        assert np.allclose(g1 * v, grad_fd, rtol=1e-7)
        g1h, g2h = (float(x) for x in w.log_hess_coeffs(hv))
        for j in range(3):
            vp, vm = v.copy(), v.copy()
            vp[j] += hs
            vm[j] -= hs
            hjj = (w(vp) - 2 * w(v) + w(vm)) / (hs * hs * w(v))
            assert hjj == pytest.approx(g1h + g2h * v[j] ** 2, rel=5e-5)


def test_decay_theta_values_and_monotone():
    # m = <v>^8, ell = 4, gamma = -3 gives exponent (8-4)/3
    law = theta_for_weight(WeightSpec.polynomial(8.0), -3.0, ell=4.0)
    assert law.exponent == pytest.approx(4.0 / 3.0)
    assert decay_theta(law, 0.0) == 1.0
    stretched = theta_for_weight(WeightSpec.exponential(0.2, 2.0), -3.0)
    assert stretched.power == pytest.approx(2.0 / 3.0)
    vals = decay_theta(stretched, np.array([0.0, 1.0, 4.0]))
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(ValueError):
        decay_theta(law, -1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.2, 1.0))
def test_decay_theta_stretched_log_convex(lam, power):
    law = DecayLaw.stretched(lam, power)
    t = np.linspace(0.01, 30.0, 100)
    logv = np.log(decay_theta(law, t))
    second = np.diff(logv, 2)
    assert np.all(second >= -1e-10)
    assert np.all(np.diff(decay_theta(law, t)) <= 1e-15)


def test_pair_submultiplicativity_sample():
    # Theta^-1(t) <= Theta^-1(t-s) Theta^-1(s) for the stretched case, C = 1
    law = DecayLaw.stretched(1.0, 0.8)
    t, s = 4.0, 1.0
    lhs = 1.0 / decay_theta(law, t)
    rhs = (1.0 / decay_theta(law, t - s)) / decay_theta(law, s)
    assert lhs <= rhs * (1 + 1e-12)


def test_default_ell_in_range():
    k = 8.0
    assert 3.5 < default_ell(k) < k
    with pytest.raises(ValueError):
        theta_for_weight(WeightSpec.polynomial(8.0), -3.0, ell=9.0)


def test_gamma_envelope_at_zero_and_nesting():
    m1 = WeightSpec.polynomial(8.0)
    m0 = WeightSpec.polynomial(5.0)
    val = gamma_envelope(m1, m0, 1.0, 0.0, -2.5)
    assert val == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        gamma_envelope(m0, m1, 1.0, 0.0, -2.5)


def test_gamma_envelope_matches_scan_oracle():
    # frozen from a 200001-point log scan with Brent refinement
    m1 = WeightSpec.polynomial(8.0)
    m0 = WeightSpec.polynomial(5.0)
    val = gamma_envelope(m1, m0, 1.0, 10.0, -2.5)
    assert val == pytest.approx(0.10518625248943927, rel=1e-8)


def test_gamma_envelope_exponential_pair_below_proof_choice():
    # the proof's window <R> = t^{1/|gamma|} upper-bounds the infimum
    m1 = WeightSpec.exponential(0.3, 1.5)
    m0 = WeightSpec.exponential(0.1, 1.5)
    gam, lam, t = -2.5, 1.0, 4.0
    val = gamma_envelope(m1, m0, lam, t, gam)
    assert val == pytest.approx(0.3877296087571521, rel=1e-7)
    bound = (math.exp(-lam * t ** (1.5 / abs(gam)))
             + math.exp(-2.0 * (0.3 - 0.1) * t ** (1.5 / abs(gam))))
    assert val <= bound * (1 + 1e-12)


def test_gamma_envelope_dominated_by_pair_law():
    # Gamma / Theta bounded by a t-independent constant over [0, 100]
    m1 = WeightSpec.polynomial(8.0)
    m0 = WeightSpec.polynomial(5.0)
    law = theta_for_pair(m1, m0, -2.5)
    ts = np.geomspace(0.1, 100.0, 25)
    ratios = [math.sqrt(gamma_envelope(m1, m0, 1.0, t, -2.5))
              / decay_theta(law, t) for t in ts]
    assert max(ratios) < 20.0
    assert max(ratios[-5:]) <= max(ratios) * (1 + 1e-9)


def test_interaction_exponent_range():
    InteractionExponent(-3.0)
    InteractionExponent(-2.3)
    with pytest.raises(ValueError):
        InteractionExponent(-2.0)
    with pytest.raises(ValueError):
        InteractionExponent(-3.2)

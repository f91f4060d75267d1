"""The numba and numpy kernel backends must agree to roundoff."""

import numpy as np
import pytest

from landaulab import accel
from landaulab.accel import (_np_aniso_combine, _np_sym_contract,
                             _np_sym_quadform, _np_weighted_dot3,
                             _np_weighted_sumsq, aniso_combine, sym_contract,
                             sym_quadform, weighted_dot3, weighted_sumsq)


@pytest.fixture(scope="module")
def payload():
    rng = np.random.default_rng(2024)
    n = 17 ** 3
    a6 = rng.standard_normal((6, n))
    h6 = rng.standard_normal((6, n))
    g3 = rng.standard_normal((3, n))
    b3 = rng.standard_normal((3, n))
    v3 = rng.standard_normal((3, n)) * 3.0
    r2 = np.sum(v3 * v3, axis=0)
    r2[::101] = 0.0  # exercise the origin branch
    hv = np.sqrt(1.0 + r2)
    w = rng.uniform(0.1, 2.0, n)
    return a6, h6, g3, b3, v3, r2, hv, w


def test_sym_contract_matches_numpy(payload):
    a6, h6, *_ = payload
    assert np.allclose(sym_contract(a6, h6), _np_sym_contract(a6, h6),
                       rtol=1e-13, atol=1e-13)


def test_sym_quadform_matches_numpy(payload):
    a6, _, g3, *_ = payload
    got = sym_quadform(a6, tuple(g3))
    ref = _np_sym_quadform(a6, g3[0], g3[1], g3[2])
    assert np.allclose(got, ref, rtol=1e-13, atol=1e-13)


def test_aniso_combine_matches_numpy(payload):
    a6, h6, g3, b3, v3, r2, hv, w = payload
    got = aniso_combine(v3[0], v3[1], v3[2], r2, hv, tuple(g3))
    ref = _np_aniso_combine(v3[0], v3[1], v3[2], r2, hv, g3[0], g3[1], g3[2])
    for g, r in zip(got, ref):
        assert np.allclose(g, r, rtol=1e-13, atol=1e-13)


def test_aniso_identity_at_origin(payload):
    g3, v3, r2, hv = payload[2], payload[4], payload[5], payload[6]
    out = aniso_combine(v3[0], v3[1], v3[2], r2, hv, tuple(g3))
    at0 = r2 == 0.0
    for k in range(3):
        assert np.allclose(out[k][at0], g3[k][at0])


def test_weighted_reductions_match(payload):
    a6, h6, g3, b3, v3, r2, hv, w = payload
    assert weighted_sumsq(w, h6[0]) == pytest.approx(
        _np_weighted_sumsq(w, h6[0]), rel=1e-13)
    assert weighted_dot3(w, tuple(g3), tuple(b3)) == pytest.approx(
        _np_weighted_dot3(w, g3[0], g3[1], g3[2], b3[0], b3[1], b3[2]),
        rel=1e-13)


def test_backend_flag_reports():
    assert isinstance(accel.using_numba(), bool)
    assert accel.thread_count() >= 1

import math

import numpy as np
import pytest

from landaulab.batteries import field_battery, smooth_field
from landaulab.grid import Field, build_grid
from landaulab.kernels import WeightSpec
from landaulab.operators import (DENSE_SIZE_LIMIT, OperatorHandle,
                                 SplitParams, assemble_dense,
                                 bound_check_convolutions, chi_profile,
                                 collision_operator, landau_context,
                                 quadratic_form_B, quadratic_form_Bstar,
                                 spectrum)

W4 = WeightSpec.polynomial(4.0)
W6 = WeightSpec.polynomial(6.0)
EXP1 = WeightSpec.exponential(0.1, 1.0)


@pytest.fixture(scope="module")
def ctx16():
    return landau_context(build_grid(8.0, 16), -3.0)


@pytest.fixture(scope="module")
def ctx12():
    return landau_context(build_grid(8.0, 12), -3.0)


def test_chi_profile_support():
    r = np.array([0.0, 0.5, 1.0, 1.5, 1.99, 2.0, 3.0])
    val = chi_profile(r)
    assert np.all(val[:3] == 1.0)
    assert 0.0 < val[3] < 1.0
    assert val[5] == 0.0 and val[6] == 0.0
    assert np.all(np.diff(val) <= 1e-12)


def test_q_maxwellian_annihilation_refines():
    errs = {}
    for n in (32, 48):
        g = build_grid(8.0, n)
        ctx = landau_context(g, -3.0)
        mu = g.mu_field()
        errs[n] = collision_operator(ctx, mu, mu).l2() / mu.l2()
    assert errs[32] <= 2.0e-2
    order = math.log(errs[32] / errs[48]) / math.log(48 / 32)
    assert order >= 2.0


def test_q_bilinearity(ctx16):
    g = ctx16.grid
    rng = np.random.default_rng(0)
    gv = smooth_field(g, rng)
    f1 = smooth_field(g, rng)
    f2 = smooth_field(g, rng)
    lhs = collision_operator(ctx16, gv, 2.0 * f1 + 0.3 * f2)
    rhs = 2.0 * collision_operator(ctx16, gv, f1) + 0.3 * collision_operator(ctx16, gv, f2)
    assert np.abs(lhs.values - rhs.values).max() <= 1e-12 * np.abs(lhs.values).max()


@pytest.mark.parametrize("gamma", [-3.0, -2.5])
def test_q_conservation_divergence_form(gamma):
    g = build_grid(8.0, 32)
    ctx = landau_context(g, gamma)
    f = Field(g, (1 + 0.5 * g.vx - 0.3 * g.vy * g.vz) * np.exp(-1.2 * g.r2))
    q = Field(g, ctx.apply_Q_divergence(f.values, f.values), check=False)
    from landaulab.grid import moments
    mass, mom, energy = moments(q)
    scale = f.l2()
    assert abs(mass) <= 1e-6 * scale
    assert np.abs(mom).max() <= 1e-6 * scale
    assert abs(energy) <= 1e-6 * scale


def test_linearized_kernel_residuals_refine():
    errs = []
    for n in (32, 48):
        g = build_grid(8.0, n)
        ctx = landau_context(g, -3.0)
        per = []
        for vals in (g.mu, g.vx * g.mu, g.r2 * g.mu):
            res = ctx.apply_L(vals)
            per.append(math.sqrt(float(np.sum(res ** 2) / np.sum(vals ** 2))))
        errs.append(per)
    assert max(errs[0]) <= 3.0e-2
    for e32, e48 in zip(*errs):
        order = math.log(e32 / e48) / math.log(48 / 32)
        assert order >= 2.0


def test_l_quadratic_form_negative_on_battery():
    # <L f, f>_{E0} <= +eps for a battery; the slack eps is discretization
    # error and shrinks under refinement (strictly negative by N = 24)
    slacks = []
    for n in (16, 24):
        g = build_grid(8.0, n)
        ctx = landau_context(g, -3.0)
        inv_mu = 1.0 / g.mu
        vol = g.cell_volume
        battery = field_battery(g, 20, 123, decay=0.45)
        worst = -np.inf
        for f in battery:
            lf = ctx.apply_L(f.values)
            q = vol * float(np.sum(lf * f.values * inv_mu))
            e0 = vol * float(np.sum(f.values ** 2 * inv_mu))
            worst = max(worst, q / e0)
        slacks.append(worst)
    assert slacks[0] <= 0.5
    assert slacks[1] <= 0.05
    assert slacks[1] < slacks[0]


def test_splitting_identity_machine(ctx16):
    g = ctx16.grid
    rng = np.random.default_rng(2)
    f = rng.standard_normal(g.shape)
    for p in (SplitParams(0.0, 1.0), SplitParams(100.0, 4.0),
              SplitParams(1.0e4, 12.0)):
        lhs = ctx16.apply_A(f, p) + ctx16.apply_B(f, p)
        rhs = ctx16.apply_L(f)
        assert np.abs(lhs - rhs).max() <= 1e-11 * np.abs(rhs).max()


def test_split_A_at_zero_cutoff_is_Q_with_frozen_maxwellian(ctx16):
    g = ctx16.grid
    f = smooth_field(g, np.random.default_rng(3))
    a0 = ctx16.apply_A(f.values, SplitParams(0.0, 1.0))
    qf = collision_operator(ctx16, f, g.mu_field())
    assert np.abs(a0 - qf.values).max() <= 1e-12 * np.abs(qf.values).max()


def test_l_equals_sum_of_q_applications(ctx16):
    g = ctx16.grid
    f = smooth_field(g, np.random.default_rng(4))
    mu = g.mu_field()
    split_sum = (collision_operator(ctx16, mu, f).values
                 + collision_operator(ctx16, f, mu).values)
    assert np.abs(ctx16.apply_L(f.values) - split_sum).max() <= \
        1e-12 * np.abs(split_sum).max()


def test_a_bound_battery_stable_under_refinement():
    from landaulab.checks import check_a_boundedness
    consts = []
    for n in (16, 24):
        ctx = landau_context(build_grid(8.0, n), -3.0)
        consts.append(check_a_boundedness(ctx, n_fields=15, seed=5)["measured"])
    assert consts[1] <= 1.5 * consts[0] and consts[0] <= 1.5 * consts[1]


def test_quadratic_form_identity(ctx16):
    p = SplitParams(1.0e4, 10.0)
    battery = field_battery(ctx16.grid, 6, 31)
    for w in (W4, EXP1):
        for f in battery:
            q = quadratic_form_B(ctx16, f, w, p)
            assert q.identity_value == pytest.approx(q.form_value, rel=2e-5)
            assert q.form_value < 0.0


def test_cutoff_role_in_dissipativity(ctx16):
    # without the cutoff the zeroth-order functional is positive near the
    # origin (no negative-definiteness for free); the M chi_R term removes
    # the positive bump and strictly lowers the form
    g = ctx16.grid
    zt = ctx16.zeta_tilde_field(W4)
    i0 = g.N // 2
    assert zt[i0, i0, i0] > 0.0
    zt_cut = zt - 1.0e4 * ctx16.chi_field(SplitParams(1.0e4, 10.0))
    assert np.all(zt_cut <= 0.0)
    f = Field(g, np.exp(-4.0 * g.r2))
    q0 = quadratic_form_B(ctx16, f, W4, SplitParams(0.0, 1.0))
    q1 = quadratic_form_B(ctx16, f, W4, SplitParams(1.0e4, 10.0))
    assert q1.form_value < q0.form_value


def test_quadratic_form_rejects_weak_weight(ctx16):
    with pytest.raises(ValueError):
        quadratic_form_B(ctx16, ctx16.grid.mu_field(), WeightSpec.polynomial(0.0),
                         SplitParams(1.0, 1.0))
    # gamma + 3 = 0 at the Coulomb end, so any positive k passes there
    quadratic_form_B(ctx16, ctx16.grid.mu_field(), WeightSpec.polynomial(0.5),
                     SplitParams(1.0, 1.0))


def test_conjugation_identity(ctx16):
    g = ctx16.grid
    p = SplitParams(100.0, 4.0)
    f = smooth_field(g, np.random.default_rng(6))
    for w in (W4, EXP1):
        m = g.weight_values(w)
        lhs = ctx16.apply_Bm(m * f.values, w, p)
        rhs = m * ctx16.apply_B(f.values, p)
        assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()


def test_form_matches_conjugated_form(ctx16):
    g = ctx16.grid
    p = SplitParams(100.0, 4.0)
    f = smooth_field(g, np.random.default_rng(7))
    m = g.weight_values(W4)
    vol = g.cell_volume
    direct = vol * float(np.sum(ctx16.apply_B(f.values, p) * f.values * m * m))
    conj = vol * float(np.sum(ctx16.apply_Bm(m * f.values, W4, p) * m * f.values))
    assert conj == pytest.approx(direct, rel=1e-10)


def test_bm_adjointness(ctx16):
    g = ctx16.grid
    p = SplitParams(100.0, 4.0)
    rng = np.random.default_rng(8)
    for w in (W4, W6):
        x = rng.standard_normal(g.shape)
        y = rng.standard_normal(g.shape)
        lhs = float(np.sum(ctx16.apply_Bm(x, w, p) * y))
        rhs = float(np.sum(x * ctx16.apply_Bm_adjoint(y, w, p)))
        assert rhs == pytest.approx(lhs, rel=1e-8)


def test_bstar_coefficient_form_interior_consistency(ctx16):
    # the differential-operator form of the adjoint agrees with the discrete
    # transpose in the interior on decaying fields
    g = ctx16.grid
    p = SplitParams(100.0, 4.0)
    phi = Field(g, np.exp(-0.5 * g.r2) * (1.0 + 0.3 * g.vx))
    a = ctx16.apply_Bm_adjoint(phi.values, W4, p)
    b = ctx16.apply_Bstar_coefficient(phi.values, W4, p)
    interior = (slice(4, -4),) * 3
    scale = np.abs(a[interior]).max()
    assert np.abs((a - b)[interior]).max() <= 0.02 * scale


def test_bstar_dissipativity_battery(ctx16):
    p = SplitParams(1.0e4, 10.0)
    battery = field_battery(ctx16.grid, 20, 41)
    worst = np.inf
    for phi in battery:
        q = quadratic_form_Bstar(ctx16, phi, W6, WeightSpec.polynomial(2.0), p)
        worst = min(worst, -q.form_value / q.dissipation_sum)
    assert worst > 0.0


def test_bstar_weight_order_rejected(ctx16):
    phi = ctx16.grid.mu_field()
    with pytest.raises(ValueError):
        quadratic_form_Bstar(ctx16, phi, W4, WeightSpec.polynomial(5.0),
                             SplitParams(10.0, 4.0))
    with pytest.raises(ValueError):
        quadratic_form_Bstar(ctx16, phi, EXP1, WeightSpec.polynomial(1.0),
                             SplitParams(10.0, 4.0))


def test_bstar_constant_field_smoke(ctx16):
    ones = Field(ctx16.grid, np.ones(ctx16.grid.shape))
    q = quadratic_form_Bstar(ctx16, ones, W6, WeightSpec.polynomial(0.0),
                             SplitParams(100.0, 4.0))
    assert math.isfinite(q.form_value)


def test_dense_assembly_consistency(ctx12):
    op = OperatorHandle(ctx12, "B", split=SplitParams(100.0, 4.0))
    mat = assemble_dense(op)
    rng = np.random.default_rng(10)
    f = rng.standard_normal(ctx12.grid.shape)
    direct = op.apply(f)
    via = (mat @ f.ravel()).reshape(ctx12.grid.shape)
    assert np.abs(direct - via).max() <= 1e-12 * np.abs(direct).max()


def test_dense_assembly_splitting(ctx12):
    p = SplitParams(10.0, 4.0)
    mat_a = assemble_dense(OperatorHandle(ctx12, "A", split=p))
    mat_b = assemble_dense(OperatorHandle(ctx12, "B", split=p))
    mat_l = assemble_dense(OperatorHandle(ctx12, "L"))
    assert np.abs(mat_a + mat_b - mat_l).max() <= 1e-12 * np.abs(mat_l).max()


def test_dense_assembly_guard():
    ctx = landau_context(build_grid(8.0, 24), -3.0)
    with pytest.raises(ValueError):
        assemble_dense(OperatorHandle(ctx, "L"))
    assert DENSE_SIZE_LIMIT == 20


def test_l_self_adjoint_form_on_decaying_fields():
    # |<Lf, g> - <f, Lg>|_{E0} is far below the spec'd discretization slack
    # for fields that decay inside the box
    for n in (12, 16):
        g = build_grid(8.0, n)
        ctx = landau_context(g, -3.0)
        inv_mu = 1.0 / g.mu
        rng = np.random.default_rng(71)
        worst = 0.0
        for _ in range(6):
            a = smooth_field(g, rng, decay=0.45).values
            b = smooth_field(g, rng, decay=0.45).values
            lhs = float(np.sum(ctx.apply_L(a) * b * inv_mu))
            rhs = float(np.sum(a * ctx.apply_L(b) * inv_mu))
            den = math.sqrt(abs(float(np.sum(ctx.apply_L(a) ** 2 * inv_mu))
                                * float(np.sum(b * b * inv_mu)))) + 1e-300
            worst = max(worst, abs(lhs - rhs) / den)
        assert worst <= 1e-2


def test_spectrum_kernel_structure(ctx12):
    mat = assemble_dense(OperatorHandle(ctx12, "L", kernel_projected=True))
    wvals = np.exp(ctx12.grid.r2 / 4.0)
    res = spectrum(mat, wvals, ctx12.grid)
    mags = np.sort(np.abs(res.eigenvalues))
    assert mags[4] <= 1e-3 * mags[5]
    assert res.invariant_angle_deg <= 5.0


def test_spectrum_b_gap(ctx12):
    p = SplitParams(1.0e3, 8.0)
    mat = assemble_dense(OperatorHandle(ctx12, "B", split=p))
    m = ctx12.grid.weight_values(W4)
    res = spectrum(mat, m, ctx12.grid)
    assert res.eigenvalues.real.max() < -1e-3


def test_spectrum_export_contract(ctx12, tmp_path):
    from landaulab.operators import export_spectrum
    import json
    p = SplitParams(10.0, 4.0)
    mat = assemble_dense(OperatorHandle(ctx12, "B", split=p))
    res = spectrum(mat, ctx12.grid.weight_values(W4), ctx12.grid)
    csv = tmp_path / "spec.csv"
    meta = tmp_path / "spec.json"
    export_spectrum(res, csv, meta, -3.0, ctx12.grid, split=p, weight=W4)
    lines = csv.read_text().splitlines()
    assert lines[0] == "re,im"
    assert len(lines) == ctx12.grid.size + 1
    payload = json.loads(meta.read_text())
    assert payload["gamma"] == -3.0
    assert payload["M"] == 10.0 and payload["R"] == 4.0
    assert payload["grid"] == {"L": 8.0, "N": 12}
    assert payload["weight"]["k"] == 4.0


def test_bound_check_ratios_stable():
    vals = []
    for n in (16, 24):
        g = build_grid(8.0, n)
        ctx = landau_context(g, -3.0)
        f = smooth_field(g, np.random.default_rng(12))
        vals.append(bound_check_convolutions(ctx, f))
    for key in ("avv_ratio", "av_ratio", "a_ratio", "b_ratio", "radial_ratio"):
        a, b = vals[0][key], vals[1][key]
        assert math.isfinite(a) and math.isfinite(b)
        assert abs(a - b) <= 0.25 * max(a, b)


def test_bound_check_scaling_uniformity(ctx16):
    # rescaled field stays within the battery maximum (f-uniform constant)
    g = ctx16.grid
    base = Field(g, np.exp(-g.r2 / 2.0))
    wide = Field(g, np.exp(-g.r2 / 8.0))
    r1 = bound_check_convolutions(ctx16, base)
    r2 = bound_check_convolutions(ctx16, wide)
    assert r2["avv_ratio"] <= 4.0 * max(r1["avv_ratio"], 1e-12)

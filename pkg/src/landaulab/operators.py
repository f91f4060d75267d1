"""The collision operator Q, the linearized operator and its splitting.

All linear maps act matrix-free on node arrays.  The mollified coefficient
fields entering Q(mu, .) are the *discrete* convolutions of the lattice
Maxwellian, so algebraic identities between the operators (splitting,
conjugation, adjointness) hold to roundoff rather than to quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import accel
from .grid import Field, SYM6, VelocityGrid, projector, require_same_grid
from .kernels import GAMMA_MIN, POLY, WeightSpec, as_gamma

A_COMPS = ("a11", "a22", "a33", "a12", "a13", "a23")
B_COMPS = ("b1", "b2", "b3")
_SYM_INDEX = ((0, 3, 4), (3, 1, 5), (4, 5, 2))  # (i,j) -> SYM6 slot

DENSE_SIZE_LIMIT = 20  # memory guard for dense assembly


@dataclass(frozen=True)
class SplitParams:
    """Cutoff parameters of the bounded/dissipative splitting."""

    M: float = 0.0
    R: float = 1.0

    def __post_init__(self):
        if self.M < 0.0:
            raise ValueError("M must be nonnegative")
        if self.R < 1.0:
            raise ValueError("R must be at least 1")


def chi_profile(r):
    """Smooth monotone step: 1 on r <= 1, 0 on r >= 2."""
    r = np.asarray(r, dtype=float)
    u = np.clip(r - 1.0, 0.0, 1.0 - 1.0e-12)
    val = np.exp(-u * u / (1.0 - u * u))
    return np.where(r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, val))


class LandauContext:
    """Grid + gamma bundle carrying every precomputed coefficient field."""

    def __init__(self, grid: VelocityGrid, gamma):
        self.grid = grid
        self.gamma = as_gamma(gamma)
        mu = grid.mu
        ghat = grid.convolve_transform(mu)
        self.bar_a6 = np.stack([
            grid.convolve_from_transform(ghat, self.gamma, comp)
            for comp in A_COMPS])
        self.bar_b3 = np.stack([
            grid.convolve_from_transform(ghat, self.gamma, comp)
            for comp in B_COMPS])
        if self.gamma == GAMMA_MIN:
            self.bar_c = -8.0 * math.pi * mu
        else:
            self.bar_c = grid.convolve_from_transform(ghat, self.gamma, "c")
        self.hess_mu6 = np.stack(grid.hess(mu))
        self.mu = mu
        self._chi_cache: dict = {}
        self._weight_cache: dict = {}

    def chi_field(self, p: SplitParams) -> np.ndarray:
        if p.R not in self._chi_cache:
            self._chi_cache[p.R] = chi_profile(self.grid.radius / p.R)
        return self._chi_cache[p.R]

    # -- elementary applications ---------------------------------------------

    def apply_B0(self, x: np.ndarray) -> np.ndarray:
        """Q(mu, x) = bar_a : hess(x) - bar_c x."""
        h6 = np.stack(self.grid.hess(x))
        return accel.sym_contract(self.bar_a6, h6) - self.bar_c * x

    def apply_A0(self, x: np.ndarray) -> np.ndarray:
        """Q(x, mu) = (a * x) : hess(mu) - (c * x) mu."""
        g = self.grid
        xhat = g.convolve_transform(x)
        out = np.zeros(g.shape)
        for k, comp in enumerate(A_COMPS):
            conv = g.convolve_from_transform(xhat, self.gamma, comp)
            w = 1.0 if k < 3 else 2.0
            out += w * conv * self.hess_mu6[k]
        if self.gamma == GAMMA_MIN:
            out += 8.0 * math.pi * x * self.mu
        else:
            out -= g.convolve_from_transform(xhat, self.gamma, "c") * self.mu
        return out

    def apply_L(self, x: np.ndarray) -> np.ndarray:
        return self.apply_A0(x) + self.apply_B0(x)

    def apply_A(self, x: np.ndarray, p: SplitParams) -> np.ndarray:
        return self.apply_A0(x) + p.M * self.chi_field(p) * x

    def apply_B(self, x: np.ndarray, p: SplitParams) -> np.ndarray:
        return self.apply_B0(x) - p.M * self.chi_field(p) * x

    def apply_B_adjoint(self, x: np.ndarray, p: SplitParams) -> np.ndarray:
        """Exact transpose of apply_B in the h^3-weighted l2 pairing."""
        g = self.grid
        out = -(self.bar_c + p.M * self.chi_field(p)) * x
        out += g.dapply(g.d2t, self.bar_a6[0] * x, 0)
        out += g.dapply(g.d2t, self.bar_a6[1] * x, 1)
        out += g.dapply(g.d2t, self.bar_a6[2] * x, 2)
        for k, (i, j) in enumerate(SYM6[3:], start=3):
            t = g.dapply(g.d1t, self.bar_a6[k] * x, i)
            out += 2.0 * g.dapply(g.d1t, t, j)
        return out

    def weight_field(self, w: WeightSpec) -> np.ndarray:
        return self.grid.weight_values(w)

    def apply_Bm(self, x: np.ndarray, w: WeightSpec, p: SplitParams) -> np.ndarray:
        """Conjugated operator m B(m^-1 .); exact by construction."""
        m = self.weight_field(w)
        return m * self.apply_B(x / m, p)

    def apply_Bm_adjoint(self, x: np.ndarray, w: WeightSpec,
                         p: SplitParams) -> np.ndarray:
        """Discrete adjoint of apply_Bm: m^-1 B^T (m .)."""
        m = self.weight_field(w)
        return self.apply_B_adjoint(m * x, p) / m

    def apply_Bstar_coefficient(self, x: np.ndarray, w: WeightSpec,
                                p: SplitParams) -> np.ndarray:
        """The adjoint in its differential-operator form (interior-consistent
        with apply_Bm_adjoint; boundary closures differ at FD order)."""
        g = self.grid
        hv = g.hv
        g1 = w.log_grad_coeff(hv)
        g1h, g2h = w.log_hess_coeffs(hv)
        vx, vy, vz = g.vx, g.vy, g.vz
        a6 = self.bar_a6
        h6 = np.stack(g.hess(x))
        out = accel.sym_contract(a6, h6)
        # 2 (bar_a . grad(m)/m + bar_b) . grad(x)
        gx, gy, gz = g.grad(x)
        avx = a6[0] * vx + a6[3] * vy + a6[4] * vz
        avy = a6[3] * vx + a6[1] * vy + a6[5] * vz
        avz = a6[4] * vx + a6[5] * vy + a6[2] * vz
        out += 2.0 * ((g1 * avx + self.bar_b3[0]) * gx
                      + (g1 * avy + self.bar_b3[1]) * gy
                      + (g1 * avz + self.bar_b3[2]) * gz)
        # zeroth order: bar_a : hess(m)/m + 2 bar_b . grad(m)/m - M chi
        trace = a6[0] + a6[1] + a6[2]
        avv = accel.sym_quadform(a6, (vx, vy, vz))
        bv = self.bar_b3[0] * vx + self.bar_b3[1] * vy + self.bar_b3[2] * vz
        out += (g1h * trace + g2h * avv + 2.0 * g1 * bv
                - p.M * self.chi_field(p)) * x
        return out

    def apply_Q(self, gvals: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Q(g, x) = (a * g) : hess(x) - (c * g) x, non-divergence form."""
        return QLeft(self, gvals).apply(x)

    def apply_Q_divergence(self, gvals: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Divergence form d_i { (a_ij * g) d_j x - (b_i * g) x }.

        Used for the conservation cross-check only: the pairwise symmetry of
        the sampled kernels cancels the moment integrals exactly up to
        boundary closure terms, which the non-divergence form does not.
        """
        g = self.grid
        ghat = g.convolve_transform(gvals)
        conv_a = [g.convolve_from_transform(ghat, self.gamma, c) for c in A_COMPS]
        conv_b = [g.convolve_from_transform(ghat, self.gamma, c) for c in B_COMPS]
        gx, gy, gz = g.grad(x)
        grads = (gx, gy, gz)
        out = np.zeros(g.shape)
        for i in range(3):
            flux = -conv_b[i] * x
            for j in range(3):
                k = _SYM_INDEX[i][j]
                flux = flux + conv_a[k] * grads[j]
            out += g.dapply(g.d1, flux, i)
        return out

    def zeta_tilde_field(self, w: WeightSpec) -> np.ndarray:
        """zeta~_m on the grid, from the discrete mollified fields."""
        g = self.grid
        g1 = w.log_grad_coeff(g.hv)
        avv = accel.sym_quadform(self.bar_a6, (g.vx, g.vy, g.vz))
        bv = (self.bar_b3[0] * g.vx + self.bar_b3[1] * g.vy
              + self.bar_b3[2] * g.vz)
        return g1 * g1 * avv + g1 * bv - 0.5 * self.bar_c


class QLeft:
    """Q(g, .) with the convolutions of the frozen left argument precomputed."""

    def __init__(self, ctx: LandauContext, gvals: np.ndarray):
        self.ctx = ctx
        g = ctx.grid
        ghat = g.convolve_transform(gvals)
        self.conv_a6 = np.stack([
            g.convolve_from_transform(ghat, ctx.gamma, comp) for comp in A_COMPS])
        if ctx.gamma == GAMMA_MIN:
            self.conv_c = -8.0 * math.pi * gvals
        else:
            self.conv_c = g.convolve_from_transform(ghat, ctx.gamma, "c")

    def apply(self, x: np.ndarray) -> np.ndarray:
        h6 = np.stack(self.ctx.grid.hess(x))
        return accel.sym_contract(self.conv_a6, h6) - self.conv_c * x


_context_cache: dict = {}


def landau_context(grid: VelocityGrid, gamma) -> LandauContext:
    key = (id(grid), round(as_gamma(gamma), 12))
    ctx = _context_cache.get(key)
    if ctx is None or ctx.grid is not grid:
        ctx = LandauContext(grid, gamma)
        _context_cache[key] = ctx
    return ctx


# ---------------------------------------------------------------------------
# operator handles
# ---------------------------------------------------------------------------

KINDS = ("L", "A", "B", "A0", "B0", "B_m", "B_m_adjoint", "Q_left")


class OperatorHandle:
    """A matrix-free linear map among {Q(g,.), L, A, B, B_m, B*_m}.

    Immutable after construction; safe to apply repeatedly.  With
    ``kernel_projected=True`` the map is composed with the projection onto the
    complement of the discrete collision invariants (L Pi), which is the
    operator the semigroup theory actually evolves.
    """

    def __init__(self, ctx: LandauContext, kind: str,
                 split: SplitParams | None = None,
                 weight: WeightSpec | None = None,
                 gleft: Field | None = None,
                 kernel_projected: bool = False):
        if kind not in KINDS:
            raise ValueError(f"unknown operator kind {kind!r}")
        self.ctx = ctx
        self.kind = kind
        self.split = split if split is not None else SplitParams()
        self.weight = weight
        self.kernel_projected = kernel_projected
        self._qleft = None
        if kind == "Q_left":
            if gleft is None:
                raise ValueError("Q_left needs its frozen left argument")
            require_same_grid(gleft, Field(ctx.grid, ctx.mu, check=False))
            self._qleft = QLeft(ctx, gleft.values)
        if kind in ("B_m", "B_m_adjoint") and weight is None:
            raise ValueError(f"{kind} needs a weight")
        if kernel_projected and kind != "L":
            raise ValueError("kernel projection is defined for the linearized operator")

    @property
    def grid(self) -> VelocityGrid:
        return self.ctx.grid

    def apply(self, x: np.ndarray) -> np.ndarray:
        ctx = self.ctx
        if self.kind == "L":
            if self.kernel_projected:
                x = projector(ctx.grid).split(x)[1]
            return ctx.apply_L(x)
        if self.kind == "A":
            return ctx.apply_A(x, self.split)
        if self.kind == "B":
            return ctx.apply_B(x, self.split)
        if self.kind == "A0":
            return ctx.apply_A0(x)
        if self.kind == "B0":
            return ctx.apply_B0(x)
        if self.kind == "B_m":
            return ctx.apply_Bm(x, self.weight, self.split)
        if self.kind == "B_m_adjoint":
            return ctx.apply_Bm_adjoint(x, self.weight, self.split)
        return self._qleft.apply(x)

    def apply_field(self, f: Field) -> Field:
        require_same_grid(f, Field(self.grid, self.ctx.mu, check=False))
        return Field(self.grid, self.apply(f.values), check=False)

    def __call__(self, f: Field) -> Field:
        return self.apply_field(f)


def collision_operator(ctx: LandauContext, g: Field, f: Field) -> Field:
    """Collision operator Q(g, f) in non-divergence form, shared grid."""
    grid = require_same_grid(g, f)
    if grid is not ctx.grid:
        raise ValueError("fields do not live on the context grid")
    return Field(grid, ctx.apply_Q(g.values, f.values), check=False)


def linearized_operator(ctx: LandauContext, f: Field) -> Field:
    return Field(ctx.grid, ctx.apply_L(f.values), check=False)


def apply_split(ctx: LandauContext, f: Field, p: SplitParams, part: str) -> Field:
    if part == "A":
        return Field(ctx.grid, ctx.apply_A(f.values, p), check=False)
    if part == "B":
        return Field(ctx.grid, ctx.apply_B(f.values, p), check=False)
    raise ValueError("part must be 'A' or 'B'")


# ---------------------------------------------------------------------------
# quadratic forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadFormB:
    form_value: float
    grad_term_weighted: float      # ||<v>^{g/2} grad~ f||^2_{L2(m)}
    grad_term_conjugated: float    # ||<v>^{g/2} grad~ (m f)||^2_{L2}
    zero_term: float               # ||<v>^{(g+s)/2} f||^2_{L2(m)}
    identity_value: float          # -int bar_a d(mf) d(mf) + int (zeta~ - M chi)(mf)^2

    @property
    def dissipation_sum(self) -> float:
        return (self.grad_term_weighted + self.grad_term_conjugated
                + self.zero_term)


def _check_weight_strong_enough(w: WeightSpec, gamma: float) -> None:
    # the dissipativity theory needs m > <v>^{(gamma+3)/2}
    threshold = (gamma + 3.0) / 2.0
    if w.kind == POLY and w.k <= threshold:
        raise ValueError(
            f"weight <v>^{w.k} too weak: need k > {(gamma + 3.0) / 2.0}")


def quadratic_form_B(ctx: LandauContext, f: Field, w: WeightSpec,
                     p: SplitParams) -> QuadFormB:
    """<B f, f>_{L2(m)} with the dissipation functionals and the exact
    integration-by-parts identity value."""
    _check_weight_strong_enough(w, ctx.gamma)
    g = ctx.grid
    vol = g.cell_volume
    m = g.weight_values(w)
    m2 = m * m
    bf = ctx.apply_B(f.values, p)
    form = vol * float(np.sum(bf * f.values * m2))

    hvg = g.hv_power(ctx.gamma)
    tg_f = g.aniso_grad(f.values)
    grad_m = vol * accel.weighted_dot3(hvg * m2, tg_f, tg_f)
    mf = m * f.values
    tg_mf = g.aniso_grad(mf)
    grad_c = vol * accel.weighted_dot3(hvg, tg_mf, tg_mf)
    w0 = g.hv_power(ctx.gamma + w.sigma)
    zero = vol * accel.weighted_sumsq(w0 * m2, f.values)

    grads = g.grad(mf)
    dirichlet = vol * float(np.sum(accel.sym_quadform(ctx.bar_a6, grads)))
    zeta = ctx.zeta_tilde_field(w)
    ident = -dirichlet + vol * float(np.sum(
        (zeta - p.M * ctx.chi_field(p)) * mf * mf))
    return QuadFormB(form_value=form, grad_term_weighted=grad_m,
                     grad_term_conjugated=grad_c, zero_term=zero,
                     identity_value=ident)


@dataclass(frozen=True)
class QuadFormBstar:
    form_value: float
    zero_term: float   # ||phi||^2_{L2(omega <v>^{g/2})}
    grad_term: float   # ||grad~ phi||^2_{L2(omega <v>^{g/2})}

    @property
    def dissipation_sum(self) -> float:
        return self.zero_term + self.grad_term


def quadratic_form_Bstar(ctx: LandauContext, phi: Field, m: WeightSpec,
                         omega: WeightSpec, p: SplitParams) -> QuadFormBstar:
    """<B*_m phi, phi>_{L2(omega)} with its dissipation pair."""
    if m.kind != POLY or omega.kind != POLY:
        raise ValueError("the adjoint dissipativity theory uses polynomial weights")
    _check_weight_strong_enough(m, ctx.gamma)
    if omega.k < 0.0 or not omega.k < m.k - (ctx.gamma + 3.0) / 2.0:
        raise ValueError(
            f"need 1 <= omega < m <v>^{-(ctx.gamma + 3) / 2}: "
            f"alpha={omega.k}, k={m.k}")
    g = ctx.grid
    vol = g.cell_volume
    om = g.weight_values(omega)
    om2 = om * om
    bstar = ctx.apply_Bm_adjoint(phi.values, m, p)
    form = vol * float(np.sum(bstar * phi.values * om2))
    wz = g.hv_power(ctx.gamma) * om2
    zero = vol * accel.weighted_sumsq(wz, phi.values)
    tg = g.aniso_grad(phi.values)
    grad = vol * accel.weighted_dot3(wz, tg, tg)
    return QuadFormBstar(form_value=form, zero_term=zero, grad_term=grad)


# ---------------------------------------------------------------------------
# dense assembly and spectra
# ---------------------------------------------------------------------------

def assemble_dense(op: OperatorHandle, grid: VelocityGrid | None = None) -> np.ndarray:
    """Column-by-column dense matrix of a matrix-free operator (N <= 20)."""
    g = op.grid if grid is None else grid
    if g is not op.grid:
        raise ValueError("handle and grid disagree")
    if g.N > DENSE_SIZE_LIMIT:
        raise ValueError(f"dense assembly guarded to N <= {DENSE_SIZE_LIMIT}, got {g.N}")
    n = g.size
    mat = np.empty((n, n))
    basis = np.zeros(g.shape)
    flat = basis.ravel()
    for j in range(n):
        flat[j] = 1.0
        mat[:, j] = op.apply(basis).ravel()
        flat[j] = 0.0
    return mat


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray          # sorted by real part, ascending
    kernel_eigenvalues: np.ndarray   # the five smallest-magnitude ones
    kernel_vectors: np.ndarray       # matching eigenvectors (columns)
    invariant_angle_deg: float       # principal angle to the collision invariants


def spectrum(matrix: np.ndarray, weight_values: np.ndarray,
             grid: VelocityGrid, n_kernel: int = 5) -> SpectrumResult:
    """Eigenvalues of the weighted-similarity-transformed matrix.

    The transform diag(w) M diag(w)^-1 keeps eigenvalues and maps the kernel
    candidates into w-weighted coordinates, where the collision-invariant
    subspace angle is measured.
    """
    w = np.asarray(weight_values, dtype=float).ravel()
    sim = (matrix * w[:, None]) / w[None, :]
    vals = scipy.linalg.eigvals(sim)
    order = np.argsort(vals.real)
    vals_sorted = vals[order]
    kern_vals = vals[np.argsort(np.abs(vals))[:n_kernel]]

    # kernel-candidate vectors from the least-residual directions of the
    # *unweighted* matrix: the weighted similarity has near-degenerate corner
    # columns that poison the eigenvectors of a degenerate cluster, while the
    # plain SVD null directions are well conditioned
    _, _, vt = scipy.linalg.svd(matrix)
    kern_vecs = vt[-n_kernel:, :].T
    proj = projector(grid)
    inv = np.stack([b.ravel() for b in proj.basis], axis=1)
    inv, _ = np.linalg.qr(inv)
    angles = scipy.linalg.subspace_angles(inv, kern_vecs)
    angle = math.degrees(float(np.max(angles))) if angles.size else 90.0
    return SpectrumResult(eigenvalues=vals_sorted, kernel_eigenvalues=kern_vals,
                          kernel_vectors=kern_vecs, invariant_angle_deg=angle)


def export_spectrum_csv(result: SpectrumResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("re,im\n")
        for lam in result.eigenvalues:
            fh.write(f"{lam.real:.17g},{lam.imag:.17g}\n")


def spectrum_metadata(gamma: float, split: SplitParams | None,
                      weight: WeightSpec | None, grid: VelocityGrid) -> dict:
    """Operator metadata block accompanying a spectrum export."""
    meta = {"gamma": as_gamma(gamma), "grid": {"L": grid.L, "N": grid.N}}
    if split is not None:
        meta["M"] = split.M
        meta["R"] = split.R
    if weight is not None:
        meta["weight"] = {"kind": weight.kind, "k": weight.k,
                          "kappa": weight.kappa, "s": weight.s}
    return meta


def export_spectrum(result: SpectrumResult, csv_path, meta_path,
                    gamma: float, grid: VelocityGrid,
                    split: SplitParams | None = None,
                    weight: WeightSpec | None = None) -> None:
    import json

    export_spectrum_csv(result, csv_path)
    with open(meta_path, "w") as fh:
        json.dump(spectrum_metadata(gamma, split, weight, grid), fh,
                  indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# convolution bound report
# ---------------------------------------------------------------------------

def bound_check_convolutions(ctx: LandauContext, f: Field,
                             theta: float = 4.0, theta_p: float = 2.5,
                             alpha: float = -2.5, alpha_theta: float = 4.0):
    """Node suprema of the weighted convolution ratios from the a*f / b*f
    bounds, normalized by the corresponding weighted input norms."""
    g = ctx.grid
    vol = g.cell_volume
    fhat = g.convolve_transform(f.values)
    conv_a = [g.convolve_from_transform(fhat, ctx.gamma, c) for c in A_COMPS]
    conv_b = [g.convolve_from_transform(fhat, ctx.gamma, c) for c in B_COMPS]
    vx, vy, vz = g.vx, g.vy, g.vz

    avv = np.abs(accel.sym_quadform(np.stack(conv_a), (vx, vy, vz)))
    av = np.sqrt(
        (conv_a[0] * vx + conv_a[3] * vy + conv_a[4] * vz) ** 2
        + (conv_a[3] * vx + conv_a[1] * vy + conv_a[5] * vz) ** 2
        + (conv_a[4] * vx + conv_a[5] * vy + conv_a[2] * vz) ** 2)
    afro = np.sqrt(sum(c * c for c in conv_a[:3])
                   + 2.0 * sum(c * c for c in conv_a[3:]))
    bmag = np.sqrt(sum(c * c for c in conv_b))

    den2 = g.hv_power(ctx.gamma + 2.0)
    den1 = g.hv_power(ctx.gamma + 1.0)
    l2_theta = math.sqrt(vol * accel.weighted_sumsq(g.hv_power(2.0 * theta),
                                                    f.values))
    wf4 = (g.hv_power(theta_p) * f.values) ** 4
    l4_thetap = (vol * float(np.sum(wf4))) ** 0.25

    report = {
        "avv_ratio": float(np.max(avv / den2)) / l2_theta,
        "av_ratio": float(np.max(av / den2)) / l2_theta,
        "a_ratio": float(np.max(afro / den2)) / l2_theta,
        "b_ratio": float(np.max(bmag / den1)) / l4_thetap,
    }
    # companion check: (|.|^alpha * <.>^-atheta)(v) / <v>^alpha bounded
    wfield = g.hv_power(-alpha_theta)
    what = g.convolve_transform(wfield)
    conv_r = g.convolve_from_transform(what, ctx.gamma, f"radial:{alpha}")
    report["radial_ratio"] = float(np.max(conv_r / g.hv_power(alpha)))
    return report

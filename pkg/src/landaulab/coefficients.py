"""Gaussian-mollified collision coefficients.

The matrix coefficient a*mu is diagonalized by the radial direction: a simple
eigenvalue ell1(r) along v and a double eigenvalue ell2(r) on the orthogonal
plane.  Together with the Gaussian-weighted radial integrals J_beta these give
closed access to bar a, bar b, bar c and the weight functionals zeta used by
the dissipativity estimates.  All integrals reduce to one dimension by axial
symmetry; the angular part is integrated in closed form.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .kernels import GAMMA_MIN, WeightSpec, as_gamma, maxwellian

_INV_SQRT_2PI = (2.0 * math.pi) ** -0.5
_RADIAL_CUT = 42.0  # exp(-r^2/2) underflows well before this


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature cannot meet its error target."""


def _quad(fun, a, b, points=None, tol=1.0e-11):
    val, err = integrate.quad(fun, a, b, points=points, limit=300,
                              epsabs=1.0e-13, epsrel=tol)
    if err > tol * max(1.0, abs(val)) * 100.0:
        raise QuadratureError(
            f"quadrature error estimate {err:.2e} too large for value {val:.6e}")
    return val


def _gamma_moment(p: float) -> float:
    """int_0^inf rho^p exp(-rho^2/2) drho."""
    return 2.0 ** ((p - 1.0) / 2.0) * math.gamma((p + 1.0) / 2.0)


# ---------------------------------------------------------------------------
# J_beta
# ---------------------------------------------------------------------------

def j_integral(beta: float, r: float, tol: float = 1.0e-11) -> float:
    """J_beta(r) = int |v-w|^beta mu(w) dw at |v| = r, for beta in (-3, 0)."""
    if not (-3.0 < beta < 0.0):
        raise ValueError(f"j_integral needs beta in (-3, 0), got {beta}")
    if r < 0.0:
        raise ValueError("radius must be nonnegative")
    if r < 1.0e-12:
        return 4.0 * math.pi * (2.0 * math.pi) ** -1.5 * _gamma_moment(beta + 2.0)

    bp2 = beta + 2.0
    if bp2 != 0.0:
        def integrand(rho):
            return (rho * math.exp(-rho * rho / 2.0)
                    * ((r + rho) ** bp2 - abs(r - rho) ** bp2))
        scale = _INV_SQRT_2PI / (r * bp2)
    else:
        def integrand(rho):
            return (rho * math.exp(-rho * rho / 2.0)
                    * (math.log(r + rho) - math.log(abs(r - rho))))
        scale = _INV_SQRT_2PI / r

    hi = _RADIAL_CUT
    points = [r] if r < hi else None
    return scale * _quad(integrand, 0.0, hi, points=points, tol=tol)


def j_integral_tilde(gamma, r: float) -> float:
    """(gamma+3) J_gamma(r) for gamma in (-3,-2); its limit 4 pi mu at gamma = -3."""
    g = as_gamma(gamma)
    if g == GAMMA_MIN:
        return 4.0 * math.pi * float(maxwellian([r, 0.0, 0.0]))
    return (g + 3.0) * j_integral(g, r)


# ---------------------------------------------------------------------------
# ell1 / ell2
# ---------------------------------------------------------------------------

def _angular_factors(r: float, rho: float):
    """exp(-(r^2+rho^2)/2) * (I0, I2)(r rho) evaluated without overflow.

    I0(u) = int_-1^1 e^{ux} dx, I2(u) = int_-1^1 x^2 e^{ux} dx.
    """
    u = r * rho
    if u < 0.1:
        # series; the closed forms lose digits to cancellation for small u
        u2 = u * u
        i0 = 2.0 * (1.0 + u2 / 6.0 + u2 * u2 / 120.0 + u2 * u2 * u2 / 5040.0)
        i2 = 2.0 * (1.0 / 3.0 + u2 / 10.0 + u2 * u2 / 168.0 + u2 * u2 * u2 / 6480.0)
        p = math.exp(-(r * r + rho * rho) / 2.0)
        return p * i0, p * i2
    em = math.exp(-(r - rho) ** 2 / 2.0)
    ep = math.exp(-(r + rho) ** 2 / 2.0)
    pi0 = (em - ep) / u
    pi2 = (em * (1.0 / u - 2.0 / u ** 2 + 2.0 / u ** 3)
           - ep * (1.0 / u + 2.0 / u ** 2 + 2.0 / u ** 3))
    return pi0, pi2


@dataclass(frozen=True)
class EllPair:
    r: float
    ell1: float
    ell2: float

    def __post_init__(self):
        if self.ell1 <= 0.0 or self.ell2 <= 0.0:
            raise ValueError("ell eigenvalues must be strictly positive")


def ell_eigenvalues(gamma, r: float, tol: float = 1.0e-11) -> EllPair:
    """Radial and transverse eigenvalues of a*mu at radius r."""
    g = as_gamma(gamma)
    if r < 0.0:
        raise ValueError("radius must be nonnegative")
    if r < 1.0e-12:
        # isotropic point: both eigenvalues are (2/3) of the trace/2
        val = _INV_SQRT_2PI * (4.0 / 3.0) * _gamma_moment(g + 4.0)
        return EllPair(r=0.0, ell1=val, ell2=val)

    def f1(rho):
        pi0, pi2 = _angular_factors(r, rho)
        return rho ** (g + 4.0) * (pi0 - pi2)

    def f2(rho):
        pi0, pi2 = _angular_factors(r, rho)
        return rho ** (g + 4.0) * 0.5 * (pi0 + pi2)

    lo = max(0.0, r - _RADIAL_CUT)
    hi = r + _RADIAL_CUT
    points = [r] if lo < r < hi else None
    ell1 = _INV_SQRT_2PI * _quad(f1, lo, hi, points=points, tol=tol)
    ell2 = _INV_SQRT_2PI * _quad(f2, lo, hi, points=points, tol=tol)
    return EllPair(r=float(r), ell1=ell1, ell2=ell2)


# ---------------------------------------------------------------------------
# bar a / bar b / bar c and the zeta functionals
# ---------------------------------------------------------------------------

def bar_coefficients(gamma, v):
    """(barA 3x3, barB 3-vector, barC scalar) at a single velocity v."""
    g = as_gamma(gamma)
    v = np.asarray(v, dtype=float)
    r = float(np.sqrt(v @ v))
    pair = ell_eigenvalues(g, r)
    if r < 1.0e-12:
        bar_a = pair.ell1 * np.eye(3)
        bar_b = np.zeros(3)
    else:
        vhat = v / r
        proj = np.outer(vhat, vhat)
        bar_a = pair.ell1 * proj + pair.ell2 * (np.eye(3) - proj)
        bar_b = -pair.ell1 * v
    bar_c = -2.0 * j_integral_tilde(g, r)
    return bar_a, bar_b, bar_c


@dataclass(frozen=True)
class ZetaTriple:
    zeta: float
    zeta_tilde: float
    zeta_cross: float


def zeta_functions(w: WeightSpec, omega: WeightSpec | None, gamma, v) -> ZetaTriple:
    """Weight functionals zeta_m, zeta~_m and (optionally) zeta_{m,omega}.

    Assembled from the ell eigenvalues and the closed-form logarithmic
    derivatives of the weights; finite differences would lose all digits to
    cancellation at large |v|.
    """
    g = as_gamma(gamma)
    if omega is not None and omega.kind != "poly":
        raise ValueError("the cross functional is defined for polynomial omega")
    v = np.asarray(v, dtype=float)
    r2 = float(v @ v)
    r = math.sqrt(r2)
    hv = math.sqrt(1.0 + r2)
    pair = ell_eigenvalues(g, r)
    trace = pair.ell1 + 2.0 * pair.ell2
    jt = j_integral_tilde(g, r)

    g1 = float(w.log_grad_coeff(hv))
    g1h, g2h = (float(x) for x in w.log_hess_coeffs(hv))
    # bar a : hess(m)/m, bar a : (grad m/m)^2, bar b . grad(m)/m
    a_hess = g1h * trace + g2h * pair.ell1 * r2
    a_gg = g1 * g1 * pair.ell1 * r2
    b_g = -pair.ell1 * g1 * r2

    zeta = a_hess + a_gg + 2.0 * b_g + jt
    zeta_tilde = a_gg + b_g + jt

    zeta_cross = 0.0
    if omega is not None:
        w1 = float(omega.log_grad_coeff(hv))
        w1h, w2h = (float(x) for x in omega.log_hess_coeffs(hv))
        zeta_cross = (w1h * trace
                      + (w2h + w1 * w1 - 2.0 * w1 * g1) * pair.ell1 * r2)
    return ZetaTriple(zeta=zeta, zeta_tilde=zeta_tilde, zeta_cross=zeta_cross)


# ---------------------------------------------------------------------------
# radial tables
# ---------------------------------------------------------------------------

class RadialTable:
    """Log-spaced table of ell1, ell2, J_gamma, J_{gamma+2} with cubic interpolation.

    Operator assembly evaluates these at every grid node; direct quadrature is
    kept for radii beyond the tabulated span.  The j_gamma column stores
    J_gamma for gamma in (-3,-2) and the Coulomb continuation of
    (gamma+3) J_gamma, i.e. 4 pi mu(r), at gamma = -3.
    """

    def __init__(self, gamma, r_max: float = 512.0, n_nodes: int = 512):
        self.gamma = as_gamma(gamma)
        self.r_max = float(r_max)
        radii = np.concatenate(([0.0], np.geomspace(1.0e-3, self.r_max, n_nodes - 1)))
        self.radii = radii
        ell1 = np.empty_like(radii)
        ell2 = np.empty_like(radii)
        for i, r in enumerate(radii):
            pair = ell_eigenvalues(self.gamma, r)
            ell1[i] = pair.ell1
            ell2[i] = pair.ell2
        if self.gamma == GAMMA_MIN:
            jg = np.array([4.0 * math.pi * float(maxwellian([r, 0.0, 0.0]))
                           for r in radii])
        else:
            jg = np.array([j_integral(self.gamma, r) for r in radii])
        jg2 = np.array([j_integral(self.gamma + 2.0, r) for r in radii])
        self.ell1 = ell1
        self.ell2 = ell2
        self.j_gamma = jg
        self.j_gamma_plus_2 = jg2
        self._splines = {
            "ell1": CubicSpline(radii, ell1),
            "ell2": CubicSpline(radii, ell2),
            "j_gamma": CubicSpline(radii, jg),
            "j_gamma_plus_2": CubicSpline(radii, jg2),
        }

    def _eval(self, name: str, r):
        r = np.asarray(r, dtype=float)
        out = self._splines[name](np.clip(r, 0.0, self.r_max))
        high = r > self.r_max
        if np.any(high):
            out = np.array(out, copy=True)
            for idx in np.argwhere(high):
                rv = float(r[tuple(idx)])
                if name == "ell1":
                    out[tuple(idx)] = ell_eigenvalues(self.gamma, rv).ell1
                elif name == "ell2":
                    out[tuple(idx)] = ell_eigenvalues(self.gamma, rv).ell2
                elif name == "j_gamma":
                    if self.gamma == GAMMA_MIN:
                        out[tuple(idx)] = 4.0 * math.pi * float(
                            maxwellian([rv, 0.0, 0.0]))
                    else:
                        out[tuple(idx)] = j_integral(self.gamma, rv)
                else:
                    out[tuple(idx)] = j_integral(self.gamma + 2.0, rv)
        return out

    def ell1_at(self, r):
        return self._eval("ell1", r)

    def ell2_at(self, r):
        return self._eval("ell2", r)

    def j_gamma_at(self, r):
        return self._eval("j_gamma", r)

    def j_gamma_plus_2_at(self, r):
        return self._eval("j_gamma_plus_2", r)

    def bar_c_at(self, r):
        """bar c = -2 (gamma+3) J_gamma, Dirac branch -8 pi mu for Coulomb."""
        if self.gamma == GAMMA_MIN:
            return -2.0 * self.j_gamma_at(r)
        return -2.0 * (self.gamma + 3.0) * self.j_gamma_at(r)

    def dump_csv(self, path) -> None:
        """One header line, then (r, ell1, ell2, J_gamma, J_gamma_plus_2) rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "ell1", "ell2", "J_gamma", "J_gamma_plus_2"])
            for i, r in enumerate(self.radii):
                writer.writerow([f"{r:.17g}", f"{self.ell1[i]:.17g}",
                                 f"{self.ell2[i]:.17g}", f"{self.j_gamma[i]:.17g}",
                                 f"{self.j_gamma_plus_2[i]:.17g}"])


@functools.lru_cache(maxsize=8)
def radial_table(gamma: float, r_max: float = 512.0, n_nodes: int = 512) -> RadialTable:
    return RadialTable(gamma, r_max=r_max, n_nodes=n_nodes)

"""Closed-form collision kernels, admissible weights, and decay envelopes.

Everything here is pointwise / analytic: no velocity grid is involved.
Conventions: gamma in [-3, -2), with gamma = -3 the Coulomb case where the
zeroth-order kernel carries a Dirac mass instead of a pointwise value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

GAMMA_MIN = -3.0
GAMMA_MAX = -2.0  # exclusive


@dataclass(frozen=True)
class InteractionExponent:
    """Inverse-power-law exponent gamma, restricted to [-3, -2)."""

    gamma: float

    def __post_init__(self):
        if not (GAMMA_MIN <= self.gamma < GAMMA_MAX):
            raise ValueError(f"gamma must lie in [-3, -2), got {self.gamma}")

    @property
    def coulomb(self) -> bool:
        return self.gamma == GAMMA_MIN


def as_gamma(gamma) -> float:
    """Accept an InteractionExponent or a bare float, validate, return float."""
    g = gamma.gamma if isinstance(gamma, InteractionExponent) else float(gamma)
    if not (GAMMA_MIN <= g < GAMMA_MAX):
        raise ValueError(f"gamma must lie in [-3, -2), got {g}")
    return g


@dataclass(frozen=True)
class DiracMass:
    """Tag for a Dirac component of the zeroth-order kernel: (c * g) = mass*g."""

    mass: float


COULOMB_DIRAC_MASS = -8.0 * math.pi


def kernel_matrix(z, gamma) -> np.ndarray:
    """|z|^(gamma+2) (Id - zhat zhat^T); zero matrix at z = 0."""
    g = as_gamma(gamma)
    z = np.asarray(z, dtype=float)
    r2 = float(z @ z)
    if r2 == 0.0:
        return np.zeros((3, 3))
    proj = np.eye(3) - np.outer(z, z) / r2
    return r2 ** ((g + 2.0) / 2.0) * proj


def kernel_derived(z, gamma):
    """First/zeroth-order kernels b(z) = -2|z|^gamma z and c(z).

    For gamma in (-3,-2), c(z) = -2(gamma+3)|z|^gamma.  For gamma = -3 the
    c-component is DiracMass(-8*pi) and never evaluates pointwise.
    """
    g = as_gamma(gamma)
    z = np.asarray(z, dtype=float)
    r2 = float(z @ z)
    if r2 == 0.0:
        raise ValueError("b and c diverge at z = 0; the pointwise branch needs z != 0")
    b = -2.0 * r2 ** (g / 2.0) * z
    if g == GAMMA_MIN:
        return b, DiracMass(COULOMB_DIRAC_MASS)
    return b, -2.0 * (g + 3.0) * r2 ** (g / 2.0)


def maxwellian(v) -> np.ndarray:
    """(2 pi)^(-3/2) exp(-|v|^2/2); acts on (..., 3) arrays of velocities."""
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    return (2.0 * math.pi) ** -1.5 * np.exp(-r2 / 2.0)


# ---------------------------------------------------------------------------
# admissible weights
# ---------------------------------------------------------------------------

POLY = "poly"
EXP = "exp"

STABILITY_MIN_K = 2.0 + 1.5  # polynomial weights must exceed <v>^(2+3/2) for stability runs


@dataclass(frozen=True)
class WeightSpec:
    """Velocity weight <v>^k (kind=poly) or exp(kappa <v>^s) (kind=exp)."""

    kind: str
    k: float = 0.0
    kappa: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        if self.kind == POLY:
            if self.k < 0.0:
                raise ValueError("polynomial weight needs k >= 0")
        elif self.kind == EXP:
            ok = (0.0 < self.s < 2.0 and self.kappa > 0.0) or (
                self.s == 2.0 and 0.0 < self.kappa < 0.5)
            if not ok:
                raise ValueError(
                    "exponential weight needs s in (0,2), kappa > 0, "
                    "or s = 2, kappa in (0, 1/2)")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @staticmethod
    def polynomial(k: float) -> "WeightSpec":
        return WeightSpec(POLY, k=float(k))

    @staticmethod
    def exponential(kappa: float, s: float) -> "WeightSpec":
        return WeightSpec(EXP, kappa=float(kappa), s=float(s))

    @staticmethod
    def gaussian(theta: float) -> "WeightSpec":
        """mu^-theta up to a constant factor: exp(theta <v>^2 / 2)."""
        return WeightSpec(EXP, kappa=float(theta) / 2.0, s=2.0)

    @property
    def sigma(self) -> float:
        return 0.0 if self.kind == POLY else self.s

    @property
    def is_stability_weight(self) -> bool:
        """Admissible as the main nonlinear-stability weight (strict growth)."""
        if self.kind == POLY:
            return self.k > STABILITY_MIN_K
        return True

    def eval_hv(self, hv):
        """Evaluate on <v> = (1+|v|^2)^(1/2) arrays."""
        hv = np.asarray(hv, dtype=float)
        if self.kind == POLY:
            return hv ** self.k
        return np.exp(self.kappa * hv ** self.s)

    def log_eval_hv(self, hv):
        """log of the weight; overflow-safe for very large radii."""
        hv = np.asarray(hv, dtype=float)
        if self.kind == POLY:
            return self.k * np.log(hv)
        return self.kappa * hv ** self.s

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        hv = np.sqrt(1.0 + np.sum(v * v, axis=-1))
        return self.eval_hv(hv)

    def log_grad_coeff(self, hv):
        """g1 with grad(m)/m = g1(v) * v."""
        hv = np.asarray(hv, dtype=float)
        if self.kind == POLY:
            return self.k * hv ** -2.0
        return self.kappa * self.s * hv ** (self.s - 2.0)

    def log_hess_coeffs(self, hv):
        """(g1, g2) with hess(m)/m = g1 * Id + g2 * v v^T."""
        hv = np.asarray(hv, dtype=float)
        if self.kind == POLY:
            g1 = self.k * hv ** -2.0
            g2 = self.k * (self.k - 2.0) * hv ** -4.0
        else:
            ks = self.kappa * self.s
            g1 = ks * hv ** (self.s - 2.0)
            g2 = (ks * (self.s - 2.0) * hv ** (self.s - 4.0)
                  + ks ** 2 * hv ** (2.0 * self.s - 4.0))
        return g1, g2

    def growth_key(self):
        # ordering by growth at infinity: exponentials sort on (s, kappa),
        # polynomials on k; any exponential beats any polynomial
        if self.kind == POLY:
            return (0, 0.0, self.k)
        return (1, self.s, self.kappa)


def weight_eval(w: WeightSpec, v):
    return w(v)


def weight_lt(m0: WeightSpec, m1: WeightSpec) -> bool:
    """Strict order m0 < m1: m0/m1 -> 0 at infinity."""
    return m0.growth_key() < m1.growth_key()


def weight_le(m0: WeightSpec, m1: WeightSpec) -> bool:
    return m0.growth_key() <= m1.growth_key()


# ---------------------------------------------------------------------------
# decay envelopes
# ---------------------------------------------------------------------------

ALGEBRAIC = "algebraic"
STRETCHED = "stretched"


@dataclass(frozen=True)
class DecayLaw:
    """Decay envelope C <t>^-exponent or C exp(-lam t^power)."""

    shape: str
    exponent: float = 0.0
    lam: float = 0.0
    power: float = 1.0
    calibration: float = 1.0

    def __post_init__(self):
        if self.shape == ALGEBRAIC:
            if self.exponent <= 0.0:
                raise ValueError("algebraic decay needs exponent > 0")
        elif self.shape == STRETCHED:
            if self.lam <= 0.0 or not (0.0 < self.power <= 1.0):
                raise ValueError("stretched decay needs lam > 0 and power in (0,1]")
        else:
            raise ValueError(f"unknown decay shape {self.shape!r}")
        if self.calibration <= 0.0:
            raise ValueError("calibration constant must be positive")

    @staticmethod
    def algebraic(exponent: float, calibration: float = 1.0) -> "DecayLaw":
        return DecayLaw(ALGEBRAIC, exponent=float(exponent), calibration=calibration)

    @staticmethod
    def stretched(lam: float, power: float, calibration: float = 1.0) -> "DecayLaw":
        return DecayLaw(STRETCHED, lam=float(lam), power=float(power),
                        calibration=calibration)

    def with_calibration(self, c: float) -> "DecayLaw":
        return replace(self, calibration=float(c))

    def with_rate(self, value: float) -> "DecayLaw":
        if self.shape == ALGEBRAIC:
            return replace(self, exponent=float(value))
        return replace(self, lam=float(value))


def decay_theta(law: DecayLaw, t):
    """Evaluate the envelope at t >= 0 (vectorized)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("decay envelopes are defined for t >= 0 only")
    if law.shape == ALGEBRAIC:
        val = law.calibration * (1.0 + t * t) ** (-law.exponent / 2.0)
    else:
        val = law.calibration * np.exp(-law.lam * t ** law.power)
    return val if val.ndim else float(val)


def default_ell(k: float) -> float:
    # the polynomial envelope class leaves ell free in (2+3/2, k); midpoint default
    return (k + STABILITY_MIN_K) / 2.0


def theta_for_weight(m: WeightSpec, gamma, ell: float | None = None,
                     lam: float = 1.0) -> DecayLaw:
    """Envelope attached to a single weight m (decay measured in L^2)."""
    g = as_gamma(gamma)
    if m.kind == POLY:
        if ell is None:
            ell = default_ell(m.k)
        if not (STABILITY_MIN_K < ell < m.k):
            raise ValueError(f"ell must lie in ({STABILITY_MIN_K}, k={m.k})")
        return DecayLaw.algebraic((m.k - ell) / abs(g))
    return DecayLaw.stretched(lam, m.s / abs(g))


def theta_for_pair(m1: WeightSpec, m0: WeightSpec, gamma,
                   k_star: float | None = None, lam: float = 1.0) -> DecayLaw:
    """Envelope for decay measured in L^2(m0) from data in L^2(m1), m0 < m1."""
    g = as_gamma(gamma)
    if not weight_lt(m0, m1):
        raise ValueError("pair envelope needs nested weights m0 < m1")
    if m1.kind == POLY:
        if k_star is None:
            k_star = 0.5 * (m0.k + m1.k)
        if not (m0.k < k_star < m1.k):
            raise ValueError(f"k_star must lie in ({m0.k}, {m1.k})")
        return DecayLaw.algebraic((m1.k - k_star) / abs(g))
    return DecayLaw.stretched(lam, m1.s / abs(g))


# ---------------------------------------------------------------------------
# the Gamma envelope from the interpolation argument
# ---------------------------------------------------------------------------

def _hR(R):
    return math.sqrt(1.0 + R * R)


def _envelope_objective(R: float, m1: WeightSpec, m0: WeightSpec,
                        lam: float, t: float, gamma: float) -> float:
    # e^{-lam * eps_R * t} + theta_R / eps_R with
    # eps_R = <R>^(gamma + sigma0), theta_R/eps_R = (m0(R)/m1(R))^2
    hr = _hR(R)
    eps = hr ** (gamma + m0.sigma)
    ratio2 = 2.0 * (float(m0.log_eval_hv(hr)) - float(m1.log_eval_hv(hr)))
    return math.exp(-lam * eps * t) + math.exp(ratio2)


def gamma_envelope(m1: WeightSpec, m0: WeightSpec, lam: float, t: float,
                   gamma, scan_points: int = 256,
                   r_range: tuple[float, float] = (1.0, 1.0e6)) -> float:
    """Squared interpolation envelope Gamma^2(t) = inf_R (e^{-lam eps_R t} + theta_R/eps_R).

    Minimized by a log-spaced scan over R followed by golden-section
    refinement; the objective is unimodal in the regimes of interest.
    """
    g = as_gamma(gamma)
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if not weight_lt(m0, m1):
        raise ValueError("gamma_envelope needs nested weights m0 < m1")

    rs = np.geomspace(r_range[0], r_range[1], scan_points)
    vals = [_envelope_objective(r, m1, m0, lam, t, g) for r in rs]
    i = int(np.argmin(vals))
    lo = rs[max(i - 1, 0)]
    hi = rs[min(i + 1, scan_points - 1)]

    # golden-section on [lo, hi] in log coordinates
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _envelope_objective(math.exp(c), m1, m0, lam, t, g)
    fd = _envelope_objective(math.exp(d), m1, m0, lam, t, g)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _envelope_objective(math.exp(c), m1, m0, lam, t, g)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _envelope_objective(math.exp(d), m1, m0, lam, t, g)
        if b - a < 1.0e-12:
            break
    best = min(vals[i], fc, fd)
    return float(best)
